"""One-hidden-layer perceptron with logistic hidden units and softmax output.

Training: mini-batch Adam on the (optionally weighted) cross-entropy, a
stratified validation split, and early stopping on validation accuracy with
the best-epoch parameters restored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureMatrix
from .errors import ArgumentError, NumericError
from .seeding import rng


@dataclass(frozen=True)
class MlpConfig:
    hidden_units: int = 10
    max_epochs: int = 1000
    validation_fraction: float = 0.1
    patience: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss_tol: float = 1e-4
    n_classes: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ArgumentError("hidden_units must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ArgumentError("validation_fraction must lie in (0, 1)")
        if self.max_epochs < 1:
            raise ArgumentError("max_epochs must be >= 1")
        if self.batch_size < 1 or self.patience < 1:
            raise ArgumentError("batch_size and patience must be >= 1")


@dataclass(frozen=True, eq=False)
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    training_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    best_epoch: int = 0

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[0]

    def params(self):
        return self.W1, self.b1, self.W2, self.b2


def _sigmoid(a):
    # tanh form cannot overflow and avoids masked indexing in the hot loop
    out = np.multiply(a, 0.5)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, X):
    W1, b1, W2, b2 = params
    h = _sigmoid(X @ W1 + b1)
    return h, softmax(h @ W2 + b2)


def loss_and_grad(params, X, y, w=None):
    """Mean weighted cross-entropy over the rows of `X` and its gradient.

    `X` is already standardised; `w` defaults to ones.
    """
    W1, b1, W2, b2 = params
    n = X.shape[0]
    rows = np.arange(n)
    h, p = forward(params, X)
    nll = -np.log(np.maximum(p[rows, y], 1e-300))
    dz = p
    dz[rows, y] -= 1.0
    if w is None:
        loss = nll.sum() / n
        dz /= n
    else:
        w = np.asarray(w, dtype=np.float64)
        loss = (w * nll).sum() / n
        dz *= w[:, None]
        dz /= n
    gW2 = h.T @ dz
    gb2 = dz.sum(axis=0)
    da = (dz @ W2.T) * h * (1.0 - h)
    gW1 = X.T @ da
    gb1 = da.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def _validation_split(y, fraction, gen):
    """Stratified: each class contributes round(fraction * count) rows, at least 1 when it has 2+."""
    val = []
    for c in np.unique(y):
        members = gen.permutation(np.flatnonzero(y == c))
        k = int(round(fraction * len(members)))
        if len(members) >= 2:
            k = min(max(k, 1), len(members) - 1)
        else:
            k = 0
        val.append(members[:k])
    val = np.sort(np.concatenate(val)) if val else np.zeros(0, dtype=np.int64)
    fit = np.setdiff1d(np.arange(len(y)), val)
    return fit, val


def _weighted_accuracy(pred, y, w):
    hit = (pred == y).astype(np.float64)
    return float(hit.mean()) if w is None else float((w * hit).sum() / w.sum())


def _weighted_loss(p, y, w):
    nll = -np.log(np.maximum(p[np.arange(len(y)), y], 1e-300))
    return float(nll.mean()) if w is None else float((w * nll).sum() / w.sum())


def train_mlp(X, y=None, cfg: MlpConfig = MlpConfig(), sample_weights=None) -> MlpModel:
    """Fit the network; `X` may be a FeatureMatrix (labels taken from it when `y` is None)."""
    if isinstance(X, FeatureMatrix):
        if y is None:
            y = X.labels
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if len(y) != n:
        raise ArgumentError("labels length differs from row count")
    if n < 10:
        raise ArgumentError("need at least 10 training rows")
    if len(np.unique(y)) < 2:
        raise ArgumentError("need at least 2 classes")
    n_classes = max(cfg.n_classes, int(y.max()) + 1)
    if sample_weights is not None:
        sw = np.asarray(sample_weights, dtype=np.float64)
        if sw.shape != (n,) or np.any(sw < 0) or not np.all(np.isfinite(sw)) or sw.sum() <= 0:
            raise ArgumentError("sample_weights must be nonnegative, finite, one per row")
    else:
        sw = None

    gen = rng(cfg.seed, "mlp")
    fit_idx, val_idx = _validation_split(y, cfg.validation_fraction, rng(cfg.seed, "mlp-val"))
    Xf, yf = X[fit_idx], y[fit_idx]
    mean = Xf.mean(axis=0)
    std = Xf.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xf = (Xf - mean) / std
    Xv, yv = (X[val_idx] - mean) / std, y[val_idx]
    if sw is not None:
        wf = sw[fit_idx] / sw[fit_idx].mean()
        wv = sw[val_idx] if len(val_idx) else None
    else:
        wf = wv = None

    p, H = X.shape[1], cfg.hidden_units
    sizes = [(p, H), (H,), (H, n_classes), (n_classes,)]
    total = sum(int(np.prod(s)) for s in sizes)
    theta = np.zeros(total)
    views, off = [], 0
    for s in sizes:
        k = int(np.prod(s))
        views.append(theta[off:off + k].reshape(s))
        off += k
    lim1 = np.sqrt(6.0 / (p + H))
    lim2 = np.sqrt(6.0 / (H + n_classes))
    views[0][...] = gen.uniform(-lim1, lim1, size=(p, H))
    views[2][...] = gen.uniform(-lim2, lim2, size=(H, n_classes))

    m1 = np.zeros(total)
    m2 = np.zeros(total)
    grad = np.zeros(total)
    gviews, off = [], 0
    for s in sizes:
        k = int(np.prod(s))
        gviews.append(grad[off:off + k].reshape(s))
        off += k

    b1, b2, lr, eps = cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.adam_eps
    step = 0
    nf = len(fit_idx)
    bs = cfg.batch_size
    best_acc, best_theta, best_epoch = -1.0, theta.copy(), 0
    best_loss = best_sel_loss = np.inf
    trace = []
    since_best = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = gen.permutation(nf)
        for start in range(0, nf, bs):
            bi = order[start:start + bs]
            loss, g = loss_and_grad(views, Xf[bi], yf[bi], None if wf is None else wf[bi])
            for gv, gi in zip(gviews, g):
                gv[...] = gi
            step += 1
            m1 *= b1
            m1 += (1 - b1) * grad
            m2 *= b2
            m2 += (1 - b2) * grad * grad
            a_t = lr * np.sqrt(1 - b2**step) / (1 - b1**step)
            theta -= a_t * m1 / (np.sqrt(m2) + eps)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise NumericError(f"training diverged (non-finite loss) at epoch {epoch}")
        if len(val_idx):
            _, pv = forward(views, Xv)
            acc, vloss = _weighted_accuracy(np.argmax(pv, axis=1), yv, wv), _weighted_loss(pv, yv, wv)
        else:
            _, pf = forward(views, Xf)
            acc, vloss = _weighted_accuracy(np.argmax(pf, axis=1), yf, wf), _weighted_loss(pf, yf, wf)
        trace.append(acc)
        # selection is by validation accuracy, ties broken by validation loss;
        # a clearly lower loss also counts as progress for the patience counter
        improved = acc > best_acc or vloss < best_loss - cfg.loss_tol
        if acc > best_acc or (acc == best_acc and vloss < best_sel_loss):
            best_acc, best_sel_loss, best_theta, best_epoch = acc, vloss, theta.copy(), epoch
        best_loss = min(best_loss, vloss)
        since_best = 0 if improved else since_best + 1
        if since_best >= cfg.patience:
            break

    out, off = [], 0
    for s in sizes:
        k = int(np.prod(s))
        out.append(best_theta[off:off + k].reshape(s).copy())
        off += k
    return MlpModel(*out, mean=mean, std=std, training_trace=np.array(trace), best_epoch=best_epoch)


def predict(m: MlpModel, X):
    """``(labels, probabilities)``; ties in argmax go to the lowest class index."""
    V = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != m.n_inputs:
        raise ArgumentError(f"expected {m.n_inputs} input columns, got {V.shape[-1]}")
    _, p = forward(m.params(), (V - m.mean) / m.std)
    return np.argmax(p, axis=1), p


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ArgumentError("predicted and truth lengths differ")
    if predicted.size == 0:
        raise ArgumentError("accuracy of an empty vector is undefined")
    return float(np.mean(predicted == truth))
