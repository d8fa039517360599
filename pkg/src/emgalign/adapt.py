"""Unsupervised domain adaptation: subspace alignment, CORAL and KLIEP.

None of the fitting functions read labels. Source rows are treated as one
pooled domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix, l2_normalize_rows
from .decomp import fit_pca
from .errors import ArgumentError, NumericError
from .linalg import spd_power
from .seeding import rng

EPS = np.finfo(float).eps


def _values(X):
    return X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)


def _wrap(X, values):
    if isinstance(X, FeatureMatrix):
        return X.with_values(values)
    return values


# --------------------------------------------------------------------------
# Subspace alignment


@dataclass(frozen=True, eq=False)
class SAModel:
    source_basis: np.ndarray
    target_basis: np.ndarray
    M: np.ndarray
    source_center: np.ndarray
    target_center: np.ndarray
    l2_mode: bool = False

    @classmethod
    def from_bases(cls, Xs, Xt, source_center, target_center, l2_mode=False) -> "SAModel":
        Xs = np.asarray(Xs, dtype=np.float64)
        Xt = np.asarray(Xt, dtype=np.float64)
        if Xs.shape != Xt.shape:
            raise ArgumentError("source and target bases must have the same shape")
        return cls(Xs, Xt, Xs.T @ Xt, np.asarray(source_center, float), np.asarray(target_center, float), l2_mode)

    @property
    def dims(self) -> int:
        return self.M.shape[0]


def _effective_rank(p):
    ev = p.eigenvalues
    return int((ev > 1e-10 * max(ev[0], 1e-300)).sum()) if ev[0] > 0 else 0


def fit_sa(source, target, d: int, l2_mode: bool = False) -> SAModel:
    """PCA bases of each domain and the alignment ``M = Xs.T @ Xt``.

    With `l2_mode` rows are L2-normalised first, which makes the PCA bases
    those of a cosine-kernel PCA.
    """
    S, T = _values(source), _values(target)
    if S.shape[1] != T.shape[1]:
        raise ArgumentError("source and target feature widths differ")
    limit = min(S.shape[0], T.shape[0], S.shape[1])
    if not 1 <= d <= limit:
        raise ArgumentError(f"dims must satisfy 1 <= d <= {limit}, got {d}")
    if l2_mode:
        S, T = l2_normalize_rows(S), l2_normalize_rows(T)
    ps, pt = fit_pca(S, d), fit_pca(T, d)
    rs, rt = _effective_rank(ps), _effective_rank(pt)
    if rs < d or rt < d:
        raise NumericError(f"rank deficiency: source rank {rs}, target rank {rt}, requested dims {d}")
    return SAModel.from_bases(ps.basis, pt.basis, ps.center, pt.center, l2_mode)


def transform_sa(m: SAModel, X, domain: str):
    """Source rows map through ``Xs @ M``; target rows through ``Xt``."""
    V = _values(X)
    if V.shape[1] != m.source_basis.shape[0]:
        raise ArgumentError(f"expected {m.source_basis.shape[0]} feature columns, got {V.shape[1]}")
    if m.l2_mode:
        V = l2_normalize_rows(V)
    if domain == "source":
        out = (V - m.source_center) @ m.source_basis @ m.M
    elif domain == "target":
        out = (V - m.target_center) @ m.target_basis
    else:
        raise ArgumentError(f"domain must be 'source' or 'target', got {domain!r}")
    return _wrap(X, out)


# --------------------------------------------------------------------------
# CORAL


@dataclass(frozen=True, eq=False)
class CoralModel:
    A: np.ndarray
    lam: float
    source_center: np.ndarray
    target_center: np.ndarray


def default_coral_lambda(source) -> float:
    S = _values(source)
    return 1e-3 * float(np.trace(np.cov(S, rowvar=False, ddof=1).reshape(S.shape[1], -1))) / S.shape[1]


def fit_coral(source, target, lam: float | None = None) -> CoralModel:
    """``A = Cs^{-1/2} Ct^{1/2}`` with ridge `lam` added to both covariances.

    ``lam=None`` uses ``1e-3 * trace(Cs) / n_features``.
    """
    S, T = _values(source), _values(target)
    if S.shape[0] < 2 or T.shape[0] < 2:
        raise ArgumentError("CORAL needs at least 2 rows per domain")
    if S.shape[1] != T.shape[1]:
        raise ArgumentError("source and target feature widths differ")
    if lam is None:
        lam = default_coral_lambda(S)
    if lam < 0:
        raise ArgumentError("lambda must be >= 0")
    p = S.shape[1]
    mu_s, mu_t = S.mean(axis=0), T.mean(axis=0)
    Cs = np.atleast_2d(np.cov(S, rowvar=False, ddof=1)) + lam * np.eye(p)
    Ct = np.atleast_2d(np.cov(T, rowvar=False, ddof=1)) + lam * np.eye(p)
    A = spd_power(Cs, -0.5, "source covariance") @ spd_power(Ct, 0.5, "target covariance")
    if not np.all(np.isfinite(A)):
        raise NumericError("CORAL map is not finite; increase the ridge lambda")
    return CoralModel(A, float(lam), mu_s, mu_t)


def transform_coral(m: CoralModel, X, domain: str = "source"):
    """Re-colour source rows with the target covariance; target rows pass through."""
    V = _values(X)
    if V.shape[1] != m.A.shape[0]:
        raise ArgumentError(f"expected {m.A.shape[0]} feature columns, got {V.shape[1]}")
    if domain == "source":
        return _wrap(X, (V - m.source_center) @ m.A + m.target_center)
    if domain == "target":
        return _wrap(X, V.copy())
    raise ArgumentError(f"domain must be 'source' or 'target', got {domain!r}")


# --------------------------------------------------------------------------
# KLIEP


@dataclass(frozen=True, eq=False)
class KliepModel:
    basis_centers: np.ndarray
    sigma: float
    alpha: np.ndarray
    weights: np.ndarray
    sigma_grid: tuple = ()
    cv_scores: tuple = ()
    objective_trace: tuple = ()

    def importance(self, X) -> np.ndarray:
        """Unnormalised importance ``sum_b alpha_b k(x, c_b)`` for new rows."""
        return gaussian_kernel(_values(X), self.basis_centers, self.sigma) @ self.alpha


def gaussian_kernel(A, B, sigma):
    sa = np.einsum("ij,ij->i", A, A)
    sb = np.einsum("ij,ij->i", B, B)
    d2 = np.maximum(sa[:, None] + sb[None, :] - 2.0 * A @ B.T, 0.0)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def median_distance(X, max_rows: int = 500, seed: int = 0) -> float:
    X = _values(X)
    if len(X) > max_rows:
        X = X[rng(seed, "median-dist", len(X)).choice(len(X), max_rows, replace=False)]
    sq = np.einsum("ij,ij->i", X, X)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    iu = np.triu_indices(len(X), 1)
    return float(np.median(np.sqrt(d2[iu])))


def kliep_objective(A: np.ndarray, alpha: np.ndarray) -> float:
    """Mean log importance over the target rows behind `A`."""
    return float(np.mean(np.log(A @ alpha + EPS)))


def _project_alpha(alpha, b):
    alpha = np.maximum(alpha, 0.0)
    s = b @ alpha
    if s <= 0:
        alpha = np.ones_like(alpha)
        s = b @ alpha
    return alpha / s


def _optimize_alpha(A, b, max_iter=200, step0=1.0, shrink=0.5, rtol=1e-7, max_halvings=60):
    """Projected gradient ascent with backtracking on the mean log importance.

    Only improving steps are accepted, so the returned trace is nondecreasing.
    """
    alpha = _project_alpha(np.ones(A.shape[1]), b)
    J = kliep_objective(A, alpha)
    trace = [J]
    for _ in range(max_iter):
        grad = A.T @ (1.0 / (A @ alpha + EPS)) / A.shape[0]
        step = step0
        accepted = False
        for _ in range(max_halvings):
            cand = _project_alpha(alpha + step * grad, b)
            Jc = kliep_objective(A, cand)
            if Jc > J:
                accepted = True
                break
            step *= shrink
        if not accepted:
            break
        improvement = Jc - J
        alpha, J = cand, Jc
        trace.append(J)
        if improvement < rtol * max(abs(J), 1e-300):
            break
    return alpha, trace


def fit_kliep(
    source,
    target,
    sigma_grid=None,
    n_basis: int | None = None,
    seed: int = 0,
    cv: int = 5,
    max_iter: int = 200,
) -> KliepModel:
    """Importance weights for source rows that match the target density.

    `sigma_grid` defaults to the median pairwise target distance times
    {0.25, 0.5, 1, 2, 4}; the width is chosen by `cv`-fold held-out
    log-likelihood on target rows.
    """
    S, T = _values(source), _values(target)
    if S.shape[1] != T.shape[1]:
        raise ArgumentError("source and target feature widths differ")
    nt = T.shape[0]
    if n_basis is None:
        n_basis = min(100, nt)
    if not 1 <= n_basis <= nt:
        raise ArgumentError(f"n_basis must satisfy 1 <= n_basis <= n_target ({nt})")
    if sigma_grid is None:
        med = median_distance(T, seed=seed)
        sigma_grid = [med * f for f in (0.25, 0.5, 1.0, 2.0, 4.0)]
    sigma_grid = [float(s) for s in sigma_grid]
    if not sigma_grid or any(not s > 0 for s in sigma_grid):
        raise ArgumentError("sigma_grid must be nonempty and strictly positive")

    perm = rng(seed, "kliep-centers", nt).permutation(nt)
    centers = T[np.sort(perm[:n_basis])]

    scores = []
    if len(sigma_grid) > 1 and nt >= cv:
        fold_of = np.empty(nt, dtype=np.int64)
        fold_of[rng(seed, "kliep-cv", nt).permutation(nt)] = np.arange(nt) % cv
        for sigma in sigma_grid:
            fold_scores = []
            for f in range(cv):
                tr, te = T[fold_of != f], T[fold_of == f]
                nb = min(n_basis, len(tr))
                c = tr[np.sort(rng(seed, "kliep-cv-centers", f, nb).permutation(len(tr))[:nb])]
                A = gaussian_kernel(tr, c, sigma)
                b = gaussian_kernel(S, c, sigma).mean(axis=0)
                if b.sum() <= 0 or A.sum() <= 0:
                    fold_scores.append(-np.inf)
                    continue
                alpha, _ = _optimize_alpha(A, b, max_iter=max_iter)
                fold_scores.append(kliep_objective(gaussian_kernel(te, c, sigma), alpha))
            scores.append(float(np.mean(fold_scores)))
        best = int(np.argmax(scores))
        if not np.isfinite(scores[best]):
            raise NumericError(f"all-zero kernel responses for every sigma in {sigma_grid}")
        sigma = sigma_grid[best]
    else:
        sigma = sigma_grid[0]

    A = gaussian_kernel(T, centers, sigma)
    Ks = gaussian_kernel(S, centers, sigma)
    b = Ks.mean(axis=0)
    if b.sum() <= 0 or A.sum() <= 0:
        raise NumericError(f"all-zero kernel responses at sigma={sigma:.4g}; widen the kernel")
    alpha, trace = _optimize_alpha(A, b, max_iter=max_iter)
    w = Ks @ alpha
    w = w / w.mean()
    return KliepModel(centers, sigma, alpha, w, tuple(sigma_grid), tuple(scores), tuple(trace))


def source_weights(m: KliepModel) -> np.ndarray:
    """Per-source-row loss multipliers (nonnegative, mean 1)."""
    return m.weights.copy()
