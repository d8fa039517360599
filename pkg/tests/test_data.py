import numpy as np
import pytest

from emgalign.data import (
    Dataset,
    EmgWindow,
    FeatureMatrix,
    kfold_indices,
    l2_normalize_rows,
    load_dataset,
    load_features,
    save_dataset,
    save_features,
    split_loso,
    stratified_subsample,
)
from emgalign.errors import ArgumentError, DataError, FormatError
from emgalign.synth import CohortConfig, generate_cohort


def _fm(gen, n=40, p=5, subjects=None):
    subjects = np.arange(n) % 4 if subjects is None else subjects
    return FeatureMatrix(gen.normal(size=(n, p)), np.arange(n) % 4, subjects)


def test_l2_examples():
    out = l2_normalize_rows(np.array([[3.0, 4.0], [0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.6, 0.8], [0.0, 0.0]])


def test_l2_norms_against_direct_sum(gen):
    X = gen.normal(size=(50, 7)) * gen.uniform(0.1, 100, size=(50, 1))
    out = l2_normalize_rows(X)
    for row in out:
        assert abs(np.sqrt(sum(v * v for v in row)) - 1.0) < 1e-12


def test_l2_idempotent_and_keeps_metadata(gen):
    X = _fm(gen)
    once = l2_normalize_rows(X)
    np.testing.assert_allclose(l2_normalize_rows(once).values, once.values, atol=1e-12)
    assert np.array_equal(once.labels, X.labels) and np.array_equal(once.subjects, X.subjects)


def test_split_loso_partition(gen):
    X = _fm(gen, n=70, subjects=np.repeat(np.arange(14), 5))
    src, tgt = split_loso(X, 0)
    assert set(src.subjects) == set(range(1, 14))
    assert np.all(tgt.subjects == 0)
    # row identity oracle: each row lands in exactly one side, order kept
    rows = [tuple(r) for r in X.values]
    assert [tuple(r) for r in src.values] == [r for r, s in zip(rows, X.subjects) if s != 0]
    assert len(src) + len(tgt) == len(X)


def test_split_loso_single_subject_and_unknown(gen):
    X = _fm(gen, n=10, subjects=np.zeros(10, dtype=int))
    src, tgt = split_loso(X, 0)
    assert len(src) == 0 and len(tgt) == 10
    with pytest.raises(ArgumentError):
        split_loso(X, 5)


def test_kfold_singletons_and_determinism():
    folds = kfold_indices(10, 10, seed=1)
    assert sorted(int(te[0]) for _, te in folds) == list(range(10))
    assert all(len(te) == 1 for _, te in folds)
    again = kfold_indices(10, 10, seed=1)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, again))


def test_kfold_stratified_counts():
    labels = np.repeat(np.arange(4), 150)
    folds = kfold_indices(600, 10, seed=3, labels=labels)
    test_sets = [te for _, te in folds]
    assert np.array_equal(np.sort(np.concatenate(test_sets)), np.arange(600))
    for te in test_sets:
        assert np.array_equal(np.bincount(labels[te], minlength=4), [15, 15, 15, 15])


def test_kfold_unstratified_sizes():
    folds = kfold_indices(23, 5, seed=0, stratified=False)
    sizes = [len(te) for _, te in folds]
    assert max(sizes) - min(sizes) <= 1
    for tr, te in folds:
        assert len(np.intersect1d(tr, te)) == 0


def test_kfold_range_errors():
    with pytest.raises(ArgumentError):
        kfold_indices(5, 1, 0)
    with pytest.raises(ArgumentError):
        kfold_indices(5, 6, 0)


def test_stratified_subsample_balanced():
    s = np.repeat(np.arange(3), 40)
    y = np.tile(np.arange(4), 30)
    idx = stratified_subsample(60, 0, s, y)
    assert len(idx) == 60 and len(np.unique(idx)) == 60
    counts = np.bincount(s[idx] * 4 + y[idx])
    assert counts.max() - counts.min() <= 1


def test_binary_zero_window(tmp_path):
    ds = Dataset.from_windows([EmgWindow(0, 2, np.zeros((8, 800), np.float32))])
    p = tmp_path / "z.emgw"
    save_dataset(ds, p)
    back = load_dataset(p)
    assert len(back) == 1 and not back.samples.any() and back.gestures[0] == 2


@pytest.mark.parametrize("fmt, suffix", [("binary", ".emgw"), ("csv", ".csv")])
def test_round_trip(tmp_path, fmt, suffix):
    ds = generate_cohort(CohortConfig(n_subjects=2, windows_per_gesture=2, seed=7))
    p = tmp_path / ("c" + suffix)
    save_dataset(ds, p, fmt)
    back = load_dataset(p, fmt)
    assert back == ds
    save_dataset(back, tmp_path / ("d" + suffix), fmt)
    assert load_dataset(tmp_path / ("d" + suffix), fmt) == ds


def test_binary_bad_magic_and_truncation(tmp_path):
    ds = Dataset.from_windows([EmgWindow(0, 0, np.ones((8, 800), np.float32))])
    p = tmp_path / "a.emgw"
    save_dataset(ds, p)
    raw = p.read_bytes()
    (tmp_path / "m.emgw").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="byte offset 0"):
        load_dataset(tmp_path / "m.emgw")
    (tmp_path / "t.emgw").write_bytes(raw[:-3])
    with pytest.raises(FormatError, match="byte offset"):
        load_dataset(tmp_path / "t.emgw")
    (tmp_path / "v.emgw").write_bytes(raw[:4] + b"\x02\x00" + raw[6:])
    with pytest.raises(FormatError, match="version"):
        load_dataset(tmp_path / "v.emgw")


def test_binary_non_finite_names_window(tmp_path):
    w = np.ones((2, 3, 4), np.float32)
    ds = Dataset(samples=w, subjects=[0, 0], gestures=[0, 1])
    p = tmp_path / "n.emgw"
    save_dataset(ds, p)
    raw = bytearray(p.read_bytes())
    # header 13 bytes, record = 3 + 12 * 4; poison first sample of window 1
    off = 13 + (3 + 48) + 3
    raw[off:off + 4] = np.float32(np.nan).tobytes()
    p.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="window 1"):
        load_dataset(p)


def test_csv_short_row_cites_line(tmp_path):
    ds = Dataset.from_windows([EmgWindow(0, 1, np.ones((8, 800), np.float32))])
    p = tmp_path / "a.csv"
    save_dataset(ds, p)
    lines = p.read_text().splitlines()
    lines[3] = ",".join(lines[3].split(",")[:-1])
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match="line 4"):
        load_dataset(p)


def test_subjects_remapped_on_load(tmp_path):
    ds = Dataset(samples=np.zeros((3, 8, 800), np.float32), subjects=[5, 9, 5], gestures=[0, 1, 2])
    p = tmp_path / "r.emgw"
    save_dataset(ds, p)
    assert load_dataset(p).subjects.tolist() == [0, 1, 0]


def test_dataset_rejects_non_finite():
    x = np.zeros((2, 8, 800), np.float32)
    x[1, 0, 5] = np.inf
    with pytest.raises(DataError, match="window 1"):
        Dataset(samples=x, subjects=[0, 0], gestures=[0, 0])


def test_feature_csv_round_trip(tmp_path, gen):
    X = _fm(gen, n=12, p=56)
    p = tmp_path / "f.csv"
    save_features(X, p)
    assert p.read_text().splitlines()[0].startswith("subject,gesture,f0,f1,")
    back = load_features(p)
    assert np.array_equal(back.values, X.values)
    assert np.array_equal(back.labels, X.labels)
