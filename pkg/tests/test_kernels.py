"""Compiled and numpy backends must agree; both are exercised when available."""

import numpy as np
import pytest

from emgalign import kernels
from emgalign.kernels import python_backend
from emgalign.synth import BANDPASS_A, BANDPASS_B

BACKENDS = [python_backend]
if kernels.compiled_backend is not None:
    BACKENDS.append(kernels.compiled_backend)
IDS = [b.__name__.rsplit(".", 1)[-1] for b in BACKENDS]

requires_compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled extension not built")


def naive_filter(b, a, x):
    y = np.zeros_like(x)
    for i in range(len(x)):
        acc = sum(b[k] * x[i - k] for k in range(len(b)) if i >= k)
        acc -= sum(a[k] * y[i - k] for k in range(1, len(a)) if i >= k)
        y[i] = acc
    return y


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_filter_matches_difference_equation(be, gen):
    x = gen.normal(size=(3, 300))
    y = be.lfilter_rows(BANDPASS_B, BANDPASS_A, x)
    for r in range(3):
        np.testing.assert_allclose(y[r], naive_filter(BANDPASS_B, BANDPASS_A, x[r]), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_jacobi_against_lapack(be, gen):
    A = gen.normal(size=(12, 12))
    A = A + A.T
    w, V, sweeps = be.jacobi_eigh(A)
    assert sweeps >= 0
    np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(A), atol=1e-10)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(12), atol=1e-10)


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_jacobi_zero_and_sweep_limit(be, gen):
    w, V, sweeps = be.jacobi_eigh(np.zeros((4, 4)))
    assert sweeps == 0 and not w.any()
    A = gen.normal(size=(10, 10))
    _, _, sweeps = be.jacobi_eigh(A + A.T, 1e-14, 1)
    assert sweeps == -1


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_perplexity_calibration(be, gen):
    X = gen.normal(size=(60, 5))
    D2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    P, beta = be.perplexity_search(D2, 10.0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(P) == 0) and np.all(beta > 0)
    H = -np.sum(np.where(P > 0, P * np.log(np.where(P > 0, P, 1)), 0), axis=1)
    np.testing.assert_allclose(np.exp(H), 10.0, rtol=1e-4)


@requires_compiled
def test_backend_parity(gen):
    c, p = kernels.compiled_backend, python_backend
    x = gen.normal(size=(4, 500))
    np.testing.assert_array_equal(c.lfilter_rows(BANDPASS_B, BANDPASS_A, x), p.lfilter_rows(BANDPASS_B, BANDPASS_A, x))
    w = gen.normal(scale=0.3, size=(5, 8, 800))
    np.testing.assert_allclose(c.window_features(w, 0.0, 0.01), p.window_features(w, 0.0, 0.01), rtol=1e-12)
    A = gen.normal(size=(9, 9))
    A = A + A.T
    np.testing.assert_allclose(np.sort(c.jacobi_eigh(A)[0]), np.sort(p.jacobi_eigh(A)[0]), atol=1e-12)
    X = gen.normal(size=(40, 3))
    D2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    Pc, _ = c.perplexity_search(D2, 8.0)
    Pp, _ = p.perplexity_search(D2, 8.0)
    np.testing.assert_allclose(Pc, Pp, atol=1e-12)
    P = Pc + Pc.T
    P /= P.sum()
    Y = gen.normal(size=(40, 2))
    Gc, klc = c.tsne_gradient(Y, P, 4.0)
    Gp, klp = p.tsne_gradient(Y, P, 4.0)
    np.testing.assert_allclose(Gc, Gp, atol=1e-12)
    assert abs(klc - klp) < 1e-10


@pytest.mark.parametrize("be", BACKENDS, ids=IDS)
def test_tsne_gradient_finite_difference(be, gen):
    n = 15
    X = gen.normal(size=(n, 3))
    D2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    Pc, _ = be.perplexity_search(D2, 4.0)
    P = (Pc + Pc.T) / (2 * n)
    np.fill_diagonal(P, 0)
    Y = gen.normal(size=(n, 2))
    G, kl = be.tsne_gradient(Y, P, 1.0)
    h = 1e-6
    for i, j in [(0, 0), (3, 1), (14, 0)]:
        Yp, Ym = Y.copy(), Y.copy()
        Yp[i, j] += h
        Ym[i, j] -= h
        num = (be.tsne_gradient(Yp, P, 1.0)[1] - be.tsne_gradient(Ym, P, 1.0)[1]) / (2 * h)
        assert abs(num - G[i, j]) < 1e-6 * max(1.0, abs(num))


def test_backend_flag_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_env_var_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, EMGALIGN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from emgalign import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
