"""Dimensionality reduction: PCA, kernel PCA, FastICA, truncated SVD, t-SNE.

All spectral bases use the sign convention of :func:`emgalign.linalg.fix_signs`.
Kernel PCA scores are scaled to unit variance (divisor n - 1) per component on
the fitting rows; PCA and truncated-SVD scores keep their natural scale and
the stored eigenvalues are their variances (divisor n - 1).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import FeatureMatrix, stratified_subsample
from .errors import ArgumentError, NumericError
from .linalg import fix_signs, sym_eig
from .seeding import rng

KERNEL_KINDS = ("linear", "cosine", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "cosine"
    poly_degree: int = 3
    poly_gamma: float | None = None  # None -> 1 / n_features
    poly_coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ArgumentError(f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if self.poly_degree < 1:
            raise ArgumentError("poly_degree must be >= 1")
        if self.poly_gamma is not None and not self.poly_gamma > 0:
            raise ArgumentError("poly_gamma must be > 0")


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "cosine":
        na = np.linalg.norm(A, axis=1)
        nb = np.linalg.norm(B, axis=1)
        return (A / np.where(na > 0, na, 1.0)[:, None]) @ (B / np.where(nb > 0, nb, 1.0)[:, None]).T
    gamma = spec.poly_gamma if spec.poly_gamma is not None else 1.0 / A.shape[1]
    return (gamma * (A @ B.T) + spec.poly_coef0) ** spec.poly_degree


@dataclass(frozen=True, eq=False)
class Projection:
    """A fitted linear or kernel projection to `dims` components.

    pca / tsvd: scores = (X - center) @ basis.
    kpca: scores = centred kernel(X, train_refs) @ basis, with `k_row_means`
    and `k_grand_mean` the centring state of the training kernel matrix.
    ica: scores = ((X - center) @ basis) @ unmixing.T, `basis` whitening.
    """

    method: str
    dims: int
    basis: np.ndarray
    eigenvalues: np.ndarray
    center: np.ndarray | None = None
    kernel: KernelSpec | None = None
    train_refs: np.ndarray | None = None
    k_row_means: np.ndarray | None = None
    k_grand_mean: float = 0.0
    unmixing: np.ndarray | None = None
    converged: bool = True
    n_iter: int = 0
    n_features: int = 0

    def project(self, X):
        return project(self, X)


def _values(X):
    return X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)


def _wrap(X, scores):
    if isinstance(X, FeatureMatrix):
        return X.with_values(scores, tuple(f"c{i}" for i in range(scores.shape[1])))
    return scores


def _check_dims(d, limit, what):
    if not 1 <= d <= limit:
        raise ArgumentError(f"dims must satisfy 1 <= d <= {limit} ({what}), got {d}")


def fit_pca(X, d: int, solver: str = "lapack") -> Projection:
    V = _values(X)
    n, p = V.shape
    _check_dims(d, min(n, p), "min(n_samples, n_features)")
    center = V.mean(axis=0)
    Xc = V - center
    cov = Xc.T @ Xc / max(n - 1, 1)
    w, E = sym_eig(cov, solver=solver)
    w = np.where(w < 0, np.where(w >= -1e-9, 0.0, w), w)
    return Projection("pca", d, E[:, :d], w[:d], center=center, n_features=p)


def fit_tsvd(X, d: int) -> Projection:
    """Top right singular vectors of the uncentred data."""
    V = _values(X)
    n, p = V.shape
    _check_dims(d, min(n, p), "min(n_samples, n_features)")
    try:
        _, s, Vt = np.linalg.svd(V, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from None
    basis = fix_signs(Vt[:d].T)
    return Projection("tsvd", d, basis, s[:d] ** 2 / max(n - 1, 1), center=np.zeros(p), n_features=p)


def fit_kpca(
    X,
    kernel: KernelSpec = KernelSpec(),
    d: int = 10,
    max_train_refs: int = 2000,
    seed: int = 0,
) -> Projection:
    """Kernel PCA on at most `max_train_refs` rows.

    Larger inputs are subsampled, seeded and stratified by (subject, label)
    when `X` is a FeatureMatrix.
    """
    V = _values(X)
    n, p = V.shape
    if n > max_train_refs:
        if isinstance(X, FeatureMatrix):
            idx = stratified_subsample(max_train_refs, seed, X.subjects, X.labels, tag="kpca")
        else:
            idx = np.sort(rng(seed, "kpca", n).choice(n, max_train_refs, replace=False))
        V = V[idx]
        n = V.shape[0]
    _check_dims(d, n, "n_samples")
    K = kernel_matrix(kernel, V, V)
    row_means = K.mean(axis=0)
    grand = float(row_means.mean())
    Kc = K - row_means[None, :] - row_means[:, None] + grand
    w, E = sym_eig(Kc)
    tol = 1e-10 * max(np.abs(K).max(), 1e-300)
    rank = int((w > tol).sum())
    if rank < d:
        raise NumericError(f"kernel matrix has effective rank {rank} < requested dims {d}")
    lam = w[:d]
    # unit variance (divisor n - 1) of the training scores Kc @ alphas
    alphas = E[:, :d] * (np.sqrt(n - 1) / lam)
    return Projection(
        "kpca",
        d,
        alphas,
        lam / (n - 1),
        kernel=kernel,
        train_refs=V.copy(),
        k_row_means=row_means,
        k_grand_mean=grand,
        n_features=p,
    )


def _logcosh_step(W, Z):
    # Z: (n, d) whitened rows; W: (d, d) rows are unmixing vectors
    WZ = Z @ W.T
    g = np.tanh(WZ)
    g_prime = 1.0 - g * g
    return (g.T @ Z) / Z.shape[0] - g_prime.mean(axis=0)[:, None] * W


def _sym_decorrelate(W):
    s, U = np.linalg.eigh(W @ W.T)
    s = np.maximum(s, 1e-300)
    return (U * (1.0 / np.sqrt(s))) @ U.T @ W


def fit_ica(X, d: int, seed: int = 0, tol: float = 1e-6, max_iter: int = 500) -> Projection:
    """FastICA, log-cosh contrast, symmetric decorrelation.

    Non-convergence is not fatal: a ``RuntimeWarning`` is emitted and
    ``Projection.converged`` is False.
    """
    V = _values(X)
    n, p = V.shape
    _check_dims(d, min(n, p), "min(n_samples, n_features)")
    pca = fit_pca(V, d)
    if np.any(pca.eigenvalues <= 1e-12 * max(pca.eigenvalues[0], 1e-300)):
        raise NumericError("data rank below requested ICA dims")
    whiten = pca.basis / np.sqrt(pca.eigenvalues)
    Z = (V - pca.center) @ whiten
    W = _sym_decorrelate(rng(seed, "ica").standard_normal((d, d)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W_new = _sym_decorrelate(_logcosh_step(W, Z))
        lim = np.max(np.abs(np.abs(np.einsum("ij,ij->i", W_new, W)) - 1.0))
        W = W_new
        if lim < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"FastICA did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return Projection(
        "ica",
        d,
        whiten,
        np.ones(d),
        center=pca.center,
        unmixing=W,
        converged=converged,
        n_iter=it,
        n_features=p,
    )


def project(p: Projection, X):
    V = _values(X)
    if V.ndim != 2 or V.shape[1] != p.n_features:
        raise ArgumentError(f"expected {p.n_features} feature columns, got {V.shape[-1]}")
    if p.method in ("pca", "tsvd"):
        scores = (V - p.center) @ p.basis
    elif p.method == "kpca":
        Kx = kernel_matrix(p.kernel, V, p.train_refs)
        Kx = Kx - p.k_row_means[None, :] - Kx.mean(axis=1, keepdims=True) + p.k_grand_mean
        scores = Kx @ p.basis
    elif p.method == "ica":
        scores = ((V - p.center) @ p.basis) @ p.unmixing.T
    else:
        raise ArgumentError(f"unknown projection method {p.method!r}")
    return _wrap(X, scores)


def fit_projection(method: str, X, d: int, kernel: KernelSpec | None = None, seed: int = 0,
                   max_train_refs: int = 2000) -> Projection:
    if method == "pca":
        return fit_pca(X, d)
    if method == "kpca":
        return fit_kpca(X, kernel or KernelSpec(), d, max_train_refs=max_train_refs, seed=seed)
    if method == "ica":
        return fit_ica(X, d, seed=seed)
    if method == "tsvd":
        return fit_tsvd(X, d)
    raise ArgumentError(f"unknown reduction method {method!r}")


# --------------------------------------------------------------------------
# t-SNE


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    max_rows: int = 3000
    seed: int = 0

    def __post_init__(self):
        if self.perplexity < 2:
            raise ArgumentError("perplexity must be >= 2")
        if self.iterations < 1:
            raise ArgumentError("iterations must be >= 1")


@dataclass(frozen=True, eq=False)
class TsneResult:
    embedding: np.ndarray
    kl_trace: np.ndarray
    row_perplexity: np.ndarray
    rows: np.ndarray = field(default=None)  # input rows used (subsampling above max_rows)


def tsne_embed(Z, cfg: TsneConfig = TsneConfig()) -> TsneResult:
    """Exact t-SNE to two dimensions.

    ``kl_trace[i]`` is KL(P || Q) at the start of iteration i + 1, measured
    against the un-exaggerated P.
    """
    V = _values(Z)
    n = V.shape[0]
    rows = np.arange(n)
    if n > cfg.max_rows:
        if isinstance(Z, FeatureMatrix):
            rows = stratified_subsample(cfg.max_rows, cfg.seed, Z.subjects, Z.labels, tag="tsne")
        else:
            rows = np.sort(rng(cfg.seed, "tsne-rows", n).choice(n, cfg.max_rows, replace=False))
        V = V[rows]
        n = len(rows)
    if not cfg.perplexity < n:
        raise ArgumentError(f"perplexity {cfg.perplexity} must be < n_samples {n}")
    if n < 3 * cfg.perplexity:
        warnings.warn("fewer than 3 * perplexity samples; t-SNE neighbourhoods will be coarse", stacklevel=2)

    sq = np.einsum("ij,ij->i", V, V)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * V @ V.T, 0.0)
    np.fill_diagonal(D2, 0.0)
    Pc, _ = kernels.perplexity_search(np.ascontiguousarray(D2), float(cfg.perplexity))
    with np.errstate(divide="ignore", invalid="ignore"):
        H = -np.where(Pc > 0, Pc * np.log(Pc), 0.0).sum(axis=1)
    row_perp = np.exp(H)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-300)
    np.fill_diagonal(P, 0.0)
    P = np.ascontiguousarray(P / P.sum())

    gen = rng(cfg.seed, "tsne-init")
    Y = 1e-4 * gen.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        early = it < cfg.exaggeration_iters
        exag = cfg.early_exaggeration if early else 1.0
        mom = cfg.momentum_early if early else cfg.momentum_late
        G, kl = kernels.tsne_gradient(np.ascontiguousarray(Y), P, exag)
        trace[it] = kl
        # delta-bar-delta gains, as in the reference implementation
        same = np.sign(G) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = mom * update - cfg.learning_rate * gains * G
        Y = Y + update
        Y -= Y.mean(axis=0)
    return TsneResult(Y, trace, row_perp, rows)
