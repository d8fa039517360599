import warnings

import numpy as np
import pytest

from emgalign import kernels
from emgalign.data import FeatureMatrix, l2_normalize_rows
from emgalign.decomp import (
    KernelSpec,
    fit_ica,
    fit_kpca,
    fit_pca,
    fit_projection,
    fit_tsvd,
    kernel_matrix,
    project,
)
from emgalign.errors import ArgumentError, NumericError
from emgalign.linalg import fix_signs, spd_power, sym_eig


def _align_signs(A, B):
    """Flip columns of A to best match B."""
    s = np.sign(np.sum(A * B, axis=0))
    s[s == 0] = 1
    return A * s


def test_pca_diagonal_line():
    t = np.arange(-2.0, 3.0)
    p = fit_pca(np.c_[t, t], 2)
    np.testing.assert_allclose(p.basis[:, 0], [1 / np.sqrt(2)] * 2, atol=1e-12)
    assert p.eigenvalues[1] < 1e-12 * p.eigenvalues[0]


def test_pca_full_rank_reconstruction(gen):
    X = gen.normal(size=(80, 6))
    p = fit_pca(X, 6)
    Z = project(p, X)
    np.testing.assert_allclose(p.center + Z @ p.basis.T, X, atol=1e-8)
    np.testing.assert_allclose(p.basis.T @ p.basis, np.eye(6), atol=1e-8)
    assert not project(p, p.center[None]).any()


@pytest.mark.parametrize("be", ["lapack", "jacobi"])
def test_pca_against_jacobi_oracle(gen, be):
    X = gen.normal(size=(50, 8)) @ gen.normal(size=(8, 8))
    p = fit_pca(X, 8, solver=be)
    C = np.cov(X, rowvar=False)
    w, V, sweeps = kernels.python_backend.jacobi_eigh(C)
    assert sweeps >= 0
    order = np.argsort(-w)
    np.testing.assert_allclose(p.eigenvalues, w[order], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(np.abs(p.basis), np.abs(V[:, order]), atol=1e-8)


def test_pca_sign_convention(gen):
    p = fit_pca(gen.normal(size=(30, 5)), 3)
    for col in p.basis.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_fix_signs_tie_goes_to_lowest_index():
    V = np.array([[-1.0], [1.0]])
    np.testing.assert_array_equal(fix_signs(V), [[1.0], [-1.0]])


def test_sym_eig_validation():
    with pytest.raises(ArgumentError):
        sym_eig(np.zeros((2, 3)))
    with pytest.raises(ArgumentError):
        sym_eig(np.eye(2), solver="qr")


def test_spd_power(gen):
    A = gen.normal(size=(5, 5))
    C = A @ A.T + 5 * np.eye(5)
    R = spd_power(C, 0.5)
    np.testing.assert_allclose(R @ R, C, atol=1e-10)
    with pytest.raises(NumericError, match="lambda"):
        spd_power(np.diag([1.0, 0.0]), -0.5)


def test_pca_variance_equals_eigenvalue(gen):
    X = gen.normal(size=(200, 5)) * [5, 3, 2, 1, 0.5]
    p = fit_pca(X, 3)
    np.testing.assert_allclose(project(p, X).var(axis=0, ddof=1), p.eigenvalues, rtol=1e-6)


def test_pca_dims_checked(gen):
    with pytest.raises(ArgumentError):
        fit_pca(gen.normal(size=(5, 3)), 4)
    with pytest.raises(ArgumentError):
        fit_pca(gen.normal(size=(5, 3)), 0)


def test_kpca_linear_equals_whitened_pca(gen):
    X = gen.normal(size=(120, 6)) @ gen.normal(size=(6, 6))
    k = fit_kpca(X, KernelSpec("linear"), 4)
    p = fit_pca(X, 4)
    pca_scores = project(p, X) / np.sqrt(p.eigenvalues)
    kp = project(k, X)
    np.testing.assert_allclose(_align_signs(kp, pca_scores), pca_scores, atol=1e-6)
    np.testing.assert_allclose(k.eigenvalues, p.eigenvalues, rtol=1e-8)


def test_kpca_cosine_equals_linear_on_normalised(gen):
    X = gen.normal(size=(90, 5)) + 2
    a = project(fit_kpca(X, KernelSpec("cosine"), 3), X)
    b = project(fit_kpca(l2_normalize_rows(X), KernelSpec("linear"), 3), l2_normalize_rows(X))
    np.testing.assert_allclose(_align_signs(a, b), b, atol=1e-8)


def test_kpca_training_scores_unit_variance(gen):
    X = gen.normal(size=(100, 4))
    for kind in ("linear", "cosine", "polynomial"):
        k = fit_kpca(X, KernelSpec(kind), 3)
        np.testing.assert_allclose(project(k, X).var(axis=0, ddof=1), 1.0, atol=1e-6)


def test_kpca_out_of_sample_oracle(gen):
    """New point: centre its kernel row analytically against the training Gram matrix."""
    X = gen.normal(size=(40, 3))
    spec = KernelSpec("polynomial", poly_degree=2)
    k = fit_kpca(X, spec, 3)
    x = gen.normal(size=(1, 3))
    K = kernel_matrix(spec, X, X)
    kx = kernel_matrix(spec, x, X)[0]
    n = len(X)
    one = np.full(n, 1.0 / n)
    kx_c = kx - K @ one - np.full(n, kx @ one) + one @ K @ one
    w, V = np.linalg.eigh(K - K.mean(0) - K.mean(1)[:, None] + K.mean())
    order = np.argsort(-w)[:3]
    expected = kx_c @ V[:, order] * np.sqrt(n - 1) / w[order]
    got = project(k, x)[0]
    np.testing.assert_allclose(np.abs(got), np.abs(expected), rtol=1e-8)


def test_kpca_degenerate():
    with pytest.raises(NumericError, match="effective rank 0"):
        fit_kpca(np.ones((10, 3)), KernelSpec("linear"), 1)


def test_kpca_subsample_stratified(gen):
    X = FeatureMatrix(gen.normal(size=(400, 4)), np.tile(np.arange(4), 100), np.repeat(np.arange(4), 100))
    k = fit_kpca(X, KernelSpec("cosine"), 2, max_train_refs=80, seed=1)
    assert k.train_refs.shape == (80, 4)
    again = fit_kpca(X, KernelSpec("cosine"), 2, max_train_refs=80, seed=1)
    np.testing.assert_array_equal(k.train_refs, again.train_refs)


def test_kernel_spec_validation():
    with pytest.raises(ArgumentError):
        KernelSpec("rbf")
    with pytest.raises(ArgumentError):
        KernelSpec("polynomial", poly_degree=0)
    with pytest.raises(ArgumentError):
        KernelSpec("polynomial", poly_gamma=-1.0)


def test_project_width_mismatch(gen):
    p = fit_pca(gen.normal(size=(20, 4)), 2)
    with pytest.raises(ArgumentError):
        project(p, gen.normal(size=(3, 5)))


def test_project_keeps_metadata(small_features):
    p = fit_projection("pca", small_features, 3)
    out = project(p, small_features)
    assert isinstance(out, FeatureMatrix) and out.n_features == 3
    assert np.array_equal(out.labels, small_features.labels)


def test_tsvd_zero_mean_equals_pca(gen):
    X = gen.normal(size=(60, 5))
    X -= X.mean(axis=0)
    t, p = fit_tsvd(X, 3), fit_pca(X, 3)
    np.testing.assert_allclose(t.basis, p.basis, atol=1e-8)


def test_tsvd_rank_one_exact(gen):
    X = np.outer(gen.normal(size=30), gen.normal(size=6))
    t = fit_tsvd(X, 1)
    np.testing.assert_allclose(project(t, X) @ t.basis.T, X, atol=1e-8)


def test_tsvd_singular_values_vs_gram(gen):
    X = gen.normal(size=(40, 6)) + 1.0
    t = fit_tsvd(X, 6)
    w = np.sort(np.linalg.eigvalsh(X.T @ X))[::-1]
    np.testing.assert_allclose(t.eigenvalues * (len(X) - 1), w, rtol=1e-8)
    np.testing.assert_allclose(project(t, X).T @ project(t, X) / (len(X) - 1), np.diag(t.eigenvalues), atol=1e-8)


def test_ica_recovers_sources(gen):
    n = 2000
    S = gen.uniform(-1, 1, size=(n, 2))
    A = np.array([[1.0, 0.6], [0.4, 1.0]])
    p = fit_ica(S @ A.T, 2, seed=0)
    Y = project(p, S @ A.T)
    C = np.abs(np.corrcoef(Y.T, S.T)[:2, 2:])
    assert p.converged
    assert max(C[0, 0] * C[1, 1], C[0, 1] * C[1, 0]) > 0.99**2
    np.testing.assert_allclose(np.cov(Y, rowvar=False, ddof=1), np.eye(2), atol=1e-6)


def test_ica_deterministic_and_warns(gen):
    X = gen.uniform(-1, 1, size=(500, 3)) @ gen.normal(size=(3, 3))
    a, b = fit_ica(X, 3, seed=5), fit_ica(X, 3, seed=5)
    np.testing.assert_array_equal(a.unmixing, b.unmixing)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        p = fit_ica(gen.normal(size=(300, 4)), 3, seed=1, max_iter=1)
    assert not p.converged
    assert any(issubclass(r.category, RuntimeWarning) for r in rec)
