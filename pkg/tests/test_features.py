import numpy as np
import pytest

from emgalign.data import Dataset
from emgalign.errors import ArgumentError, DataError
from emgalign.features import FEATURE_NAMES, FeatureConfig, extract_features, extract_matrix


def oracle(x, zc_thr, wamp_thr):
    """Direct per-sample loops, one channel at a time."""
    out = []
    for ch in x:
        ch = [float(v) for v in ch]
        n = len(ch)
        mav = sum(abs(v) for v in ch) / n
        rms = (sum(v * v for v in ch) / n) ** 0.5
        wl = sum(abs(ch[i] - ch[i - 1]) for i in range(1, n))
        zc = sum(1 for i in range(n - 1) if ch[i] * ch[i + 1] < 0 and abs(ch[i] - ch[i + 1]) >= zc_thr)
        wamp = sum(1 for i in range(n - 1) if abs(ch[i] - ch[i + 1]) >= wamp_thr)
        mx = max(abs(v) for v in ch)
        iemg = sum(abs(v) for v in ch)
        out += [mav, rms, wl, zc, wamp, mx, iemg]
    return np.array(out)


def test_constant_channel():
    f = extract_features(np.full((1, 800), 0.5))
    np.testing.assert_allclose(f, [0.5, 0.5, 0, 0, 0, 0.5, 400.0], rtol=1e-12)


def test_alternating_channel():
    x = np.tile([1.0, -1.0], 400)[None]
    f = extract_features(x, FeatureConfig(zc_threshold=0, wamp_threshold=1))
    np.testing.assert_allclose(f, [1, 1, 1598, 799, 799, 1, 800], rtol=1e-12)


@pytest.mark.parametrize("thr", [(0.0, 0.01), (0.3, 0.5)])
def test_against_direct_summation(gen, thr):
    x = gen.normal(scale=0.4, size=(8, 800))
    f = extract_features(x, FeatureConfig(*thr))
    ref = oracle(x, *thr)
    assert f.shape == (56,)
    np.testing.assert_allclose(f, ref, rtol=1e-9, atol=1e-12)


def test_exact_zeros_do_not_cross():
    x = np.array([[1.0, 0.0, -1.0, 0.0, 1.0]])
    assert extract_features(x)[3] == 0


def test_invariants(gen):
    x = gen.normal(size=(8, 800))
    f = extract_features(x).reshape(8, 7)
    mav, rms, mx, iemg = f[:, 0], f[:, 1], f[:, 5], f[:, 6]
    assert np.all(rms >= mav) and np.all(mx >= mav) and np.all(f >= 0)
    np.testing.assert_allclose(iemg, 800 * mav, rtol=1e-12)


def test_scaling(gen):
    x = gen.normal(size=(8, 800))
    a = extract_features(x).reshape(8, 7)
    b = extract_features(3.0 * x).reshape(8, 7)
    amp = [FEATURE_NAMES.index(k) for k in ("MAV", "RMS", "WL", "MAX", "IEMG")]
    np.testing.assert_allclose(b[:, amp], 3.0 * a[:, amp], rtol=1e-12)
    assert np.array_equal(a[:, 3], b[:, 3])


def test_non_finite_rejected():
    x = np.zeros((8, 800))
    x[2, 3] = np.nan
    with pytest.raises(DataError):
        extract_features(x)


def test_bad_thresholds():
    with pytest.raises(ArgumentError):
        FeatureConfig(zc_threshold=-1)
    with pytest.raises(ArgumentError):
        FeatureConfig(wamp_threshold=np.inf)


def test_matrix_zero_windows_and_permutation(small_cohort):
    z = Dataset(samples=np.zeros((2, 8, 800), np.float32), subjects=[0, 0], gestures=[0, 1])
    assert np.array_equal(extract_matrix(z).values, np.zeros((2, 56)))
    X = extract_matrix(small_cohort)
    assert X.values.shape == (len(small_cohort), 56)
    perm = np.random.default_rng(0).permutation(len(small_cohort))
    ds2 = Dataset(samples=small_cohort.samples[perm], subjects=small_cohort.subjects[perm],
                  gestures=small_cohort.gestures[perm])
    assert np.array_equal(extract_matrix(ds2, chunk=7).values, X.values[perm])
    np.testing.assert_allclose(X.values[5], extract_features(small_cohort.window(5)), rtol=0, atol=0)
