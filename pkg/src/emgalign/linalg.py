"""Symmetric eigendecomposition shared by PCA, KPCA, CORAL and SA."""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ArgumentError, NumericError


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties go to the lowest row index.
    """
    V = np.array(V, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def sym_eig(A: np.ndarray, solver: str = "lapack", tol: float = 1e-12, max_sweeps: int = 100):
    """Eigenpairs of a symmetric matrix, eigenvalues in nonincreasing order.

    ``solver="lapack"`` calls ``numpy.linalg.eigh``; ``solver="jacobi"`` runs
    the cyclic Jacobi kernel. Eigenvector signs follow :func:`fix_signs`.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ArgumentError("need a square matrix")
    A = 0.5 * (A + A.T)
    if solver == "lapack":
        try:
            w, V = np.linalg.eigh(A)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigensolver did not converge: {exc}") from None
    elif solver == "jacobi":
        w, V, sweeps = kernels.jacobi_eigh(np.ascontiguousarray(A), tol, max_sweeps)
        if sweeps < 0:
            raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    else:
        raise ArgumentError(f"unknown solver {solver!r}")
    order = np.argsort(-w, kind="stable")
    return w[order], fix_signs(V[:, order])


def spd_power(C: np.ndarray, power: float, what: str = "matrix") -> np.ndarray:
    """``C ** power`` for a symmetric positive definite matrix."""
    w, V = sym_eig(C)
    if w[-1] <= 1e-12 * max(w[0], 0.0) or w[-1] <= 0.0:
        raise NumericError(
            f"{what} is not positive definite (smallest eigenvalue {w[-1]:.3g}); increase the ridge lambda"
        )
    return (V * w**power) @ V.T
