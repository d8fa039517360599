"""Dataset types, on-disk formats and split primitives.

Binary layout (little-endian)::

    "EMGW" | u16 version=1 | u8 channels | u16 samples_per_window | u32 n_windows
    then per window: u16 subject | u8 gesture | float32[channels * samples_per_window]

samples are channel-major. The CSV layout has one line per (window, channel)
under the header ``subject,gesture,channel,s0,...,s{N-1}``.
"""

from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ArgumentError, DataError, FormatError
from .seeding import rng

GESTURE_NAMES = ("thumb", "index", "middle", "little")
MAGIC = b"EMGW"
VERSION = 1
_HEADER = struct.Struct("<4sHBHI")


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmgWindow:
    """One labeled window: ``samples`` has shape (channels, samples_per_window)."""

    subject_id: int
    gesture: int
    samples: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """A cohort of equally shaped windows stored as one stacked array.

    ``samples`` has shape (n_windows, channels, samples_per_window) and is held
    as float32, the on-disk precision, so save/load is lossless.
    """

    samples: np.ndarray
    subjects: np.ndarray
    gestures: np.ndarray
    sampling_rate_hz: int = 2000
    gesture_names: tuple = GESTURE_NAMES

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 3:
            raise ArgumentError("samples must have shape (n_windows, channels, samples_per_window)")
        n = samples.shape[0]
        subjects = np.asarray(self.subjects, dtype=np.int64).reshape(-1)
        gestures = np.asarray(self.gestures, dtype=np.int64).reshape(-1)
        if len(subjects) != n or len(gestures) != n:
            raise ArgumentError("subjects/gestures must have one entry per window")
        if n and not np.all(np.isfinite(samples)):
            bad = int(np.flatnonzero(~np.isfinite(samples).reshape(n, -1).all(axis=1))[0])
            raise DataError(f"non-finite sample value in window {bad}")
        if n and (gestures.min() < 0 or gestures.max() >= len(self.gesture_names)):
            raise DataError("gesture label outside 0..%d" % (len(self.gesture_names) - 1))
        if n and subjects.min() < 0:
            raise DataError("negative subject id")
        object.__setattr__(self, "samples", _frozen(samples, np.float32))
        object.__setattr__(self, "subjects", _frozen(subjects))
        object.__setattr__(self, "gestures", _frozen(gestures))
        object.__setattr__(self, "gesture_names", tuple(self.gesture_names))

    @classmethod
    def from_windows(cls, windows: Sequence[EmgWindow], **kw) -> "Dataset":
        if not windows:
            raise ArgumentError("need at least one window (use the array constructor for empty sets)")
        shape = windows[0].samples.shape
        for i, w in enumerate(windows):
            if w.samples.shape != shape:
                raise DataError(f"window {i} has shape {w.samples.shape}, expected {shape}")
        return cls(
            samples=np.stack([w.samples for w in windows]),
            subjects=[w.subject_id for w in windows],
            gestures=[w.gesture for w in windows],
            **kw,
        )

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def samples_per_window(self) -> int:
        return self.samples.shape[2]

    @property
    def n_subjects(self) -> int:
        return len(np.unique(self.subjects))

    def __len__(self):
        return self.samples.shape[0]

    def window(self, i: int) -> EmgWindow:
        return EmgWindow(int(self.subjects[i]), int(self.gestures[i]), self.samples[i])

    @property
    def windows(self) -> list[EmgWindow]:
        return [self.window(i) for i in range(len(self))]

    def __iter__(self) -> Iterator[EmgWindow]:
        return (self.window(i) for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.samples.shape == other.samples.shape
            and self.sampling_rate_hz == other.sampling_rate_hz
            and self.gesture_names == other.gesture_names
            and np.array_equal(self.subjects, other.subjects)
            and np.array_equal(self.gestures, other.gestures)
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows of features with per-row gesture labels and subject ids."""

    values: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ArgumentError("feature values must be 2-D")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        subjects = np.asarray(self.subjects, dtype=np.int64).reshape(-1)
        if len(labels) != values.shape[0] or len(subjects) != values.shape[0]:
            raise ArgumentError("labels and subjects need one entry per row")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
            raise DataError(f"non-finite feature value in row {bad}")
        object.__setattr__(self, "values", _frozen(values, np.float64))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "subjects", _frozen(subjects))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(self.values[idx], self.labels[idx], self.subjects[idx], self.names)

    def with_values(self, values, names=()) -> "FeatureMatrix":
        """Same rows, new columns (labels and subjects carried over)."""
        return FeatureMatrix(values, self.labels, self.subjects, names)

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.subjects, other.subjects)
        )


def _values(X):
    return X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)


# --------------------------------------------------------------------------
# Normalisation and splits


def l2_normalize_rows(X):
    """Scale every row to unit Euclidean norm; all-zero rows pass through.

    Accepts a FeatureMatrix (labels/subjects preserved) or a plain array.
    """
    V = _values(X)
    norms = np.sqrt(np.einsum("ij,ij->i", V, V))
    safe = np.where(norms > 0.0, norms, 1.0)
    out = V / safe[:, None]
    return X.with_values(out, X.names) if isinstance(X, FeatureMatrix) else out


def split_loso(X: FeatureMatrix, target_subject: int):
    """``(source, target)``: rows of every other subject, rows of `target_subject`."""
    mask = X.subjects == target_subject
    if not mask.any():
        raise ArgumentError(f"subject {target_subject} not present")
    return X.take(np.flatnonzero(~mask)), X.take(np.flatnonzero(mask))


def kfold_indices(n_samples: int, k: int, seed: int, labels=None, stratified: bool = True):
    """Shuffled k-fold split as a list of ``(train, test)`` index arrays.

    With `labels` and ``stratified=True`` each class is shuffled separately and
    dealt round-robin over the folds with a counter carried across classes, so
    class counts per fold differ by at most one and fold sizes by at most one.
    """
    if not 2 <= k <= n_samples:
        raise ArgumentError(f"k must satisfy 2 <= k <= n_samples, got k={k}, n={n_samples}")
    gen = rng(seed, "kfold", n_samples, k)
    fold_of = np.empty(n_samples, dtype=np.int64)
    if labels is None or not stratified:
        perm = gen.permutation(n_samples)
        fold_of[perm] = np.arange(n_samples) % k
    else:
        labels = np.asarray(labels)
        if len(labels) != n_samples:
            raise ArgumentError("labels length differs from n_samples")
        start = 0
        for c in np.unique(labels):
            members = gen.permutation(np.flatnonzero(labels == c))
            fold_of[members] = (start + np.arange(len(members))) % k
            start = (start + len(members)) % k
    everything = np.arange(n_samples)
    return [(everything[fold_of != f], everything[fold_of == f]) for f in range(k)]


def stratified_subsample(n_max: int, seed, *keys_arrays, tag="subsample"):
    """Indices of at most `n_max` rows, drawn proportionally per stratum.

    Strata are the distinct tuples across `keys_arrays` (e.g. subject, label).
    Returns sorted indices; all rows when already small enough.
    """
    n = len(keys_arrays[0])
    if n <= n_max:
        return np.arange(n)
    keys = np.stack([np.asarray(a) for a in keys_arrays], axis=1)
    _, stratum = np.unique(keys, axis=0, return_inverse=True)
    stratum = stratum.reshape(-1)
    gen = rng(seed, tag, n, n_max)
    counts = np.bincount(stratum)
    quota = np.floor(counts * n_max / n).astype(np.int64)
    # hand out the remaining slots to the largest fractional parts
    rem = n_max - quota.sum()
    frac = counts * n_max / n - quota
    quota[np.argsort(-frac, kind="stable")[:rem]] += 1
    chosen = []
    for s, q in enumerate(quota):
        members = np.flatnonzero(stratum == s)
        chosen.append(gen.choice(members, size=q, replace=False))
    return np.sort(np.concatenate(chosen))


# --------------------------------------------------------------------------
# I/O


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("binary", "csv"):
            raise ArgumentError(f"unknown format {fmt!r}")
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def _remap_subjects(subjects):
    _, inv = np.unique(subjects, return_inverse=True)
    return inv.reshape(-1)


def save_dataset(ds: Dataset, path, format: str | None = None) -> None:
    fmt = _infer_format(path, format)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_encode_binary(ds))
    else:
        with open(path, "w", newline="") as fh:
            _write_csv(ds, fh)


def load_dataset(path, format: str | None = None) -> Dataset:
    if not os.path.exists(path):
        raise ArgumentError(f"no such file: {path}")
    fmt = _infer_format(path, format)
    if fmt == "binary":
        with open(path, "rb") as fh:
            return _decode_binary(fh.read())
    with open(path, newline="") as fh:
        return _read_csv(fh)


def _encode_binary(ds: Dataset) -> bytes:
    if ds.channels > 255 or ds.samples_per_window > 65535:
        raise ArgumentError("dimensions exceed the binary header field widths")
    dt = _record_dtype(ds.channels, ds.samples_per_window)
    rec = np.empty(len(ds), dtype=dt)
    rec["subject"] = ds.subjects
    rec["gesture"] = ds.gestures
    rec["x"] = ds.samples
    head = _HEADER.pack(MAGIC, VERSION, ds.channels, ds.samples_per_window, len(ds))
    return head + rec.tobytes()


def _record_dtype(channels, spw):
    return np.dtype([("subject", "<u2"), ("gesture", "u1"), ("x", "<f4", (channels, spw))])


def _decode_binary(buf: bytes) -> Dataset:
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: file ends at byte offset {len(buf)}")
    magic, version, channels, spw, n = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at byte offset 4")
    if channels == 0:
        raise FormatError("zero channels at byte offset 6")
    if spw == 0:
        raise FormatError("zero samples_per_window at byte offset 7")
    dt = _record_dtype(channels, spw)
    expected = _HEADER.size + n * dt.itemsize
    if len(buf) != expected:
        off = min(len(buf), expected)
        raise FormatError(
            f"payload size mismatch at byte offset {off}: expected {expected} bytes for {n} windows, got {len(buf)}"
        )
    rec = np.frombuffer(buf, dtype=dt, count=n, offset=_HEADER.size)
    x = rec["x"]
    finite = np.isfinite(x).reshape(n, -1).all(axis=1)
    if not finite.all():
        raise DataError(f"non-finite sample value in window {int(np.flatnonzero(~finite)[0])}")
    return Dataset(
        samples=x,
        subjects=_remap_subjects(rec["subject"].astype(np.int64)),
        gestures=rec["gesture"].astype(np.int64),
    )


def _write_csv(ds: Dataset, fh) -> None:
    n = ds.samples_per_window
    fh.write("subject,gesture,channel," + ",".join(f"s{i}" for i in range(n)) + "\n")
    for w in range(len(ds)):
        s, g = int(ds.subjects[w]), int(ds.gestures[w])
        for c in range(ds.channels):
            # 9 significant digits round-trip float32 exactly
            vals = ",".join("%.9g" % v for v in ds.samples[w, c].tolist())
            fh.write(f"{s},{g},{c},{vals}\n")


def _read_csv(fh) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty file at line 1") from None
    if header[:3] != ["subject", "gesture", "channel"] or len(header) < 4:
        raise FormatError("bad header at line 1: expected subject,gesture,channel,s0,...")
    n = len(header) - 3
    if header[3:] != [f"s{i}" for i in range(n)]:
        raise FormatError("bad sample column names at line 1")
    windows, subs, gests = [], [], []
    current, cur_key, channels = [], None, None
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n + 3:
            raise FormatError(f"line {lineno}: expected {n} sample columns, got {len(row) - 3}")
        try:
            s, g, c = int(row[0]), int(row[1]), int(row[2])
            vals = np.array(row[3:], dtype=np.float64).astype(np.float32)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if c == 0 and current:
            if channels is None:
                channels = len(current)
            elif len(current) != channels:
                raise FormatError(f"line {lineno}: window {len(windows)} has {len(current)} channels, expected {channels}")
            windows.append(np.stack(current))
            subs.append(cur_key[0])
            gests.append(cur_key[1])
            current = []
        if c != len(current):
            raise FormatError(f"line {lineno}: channel index {c} out of sequence")
        if current and (s, g) != cur_key:
            raise FormatError(f"line {lineno}: subject/gesture changed inside a window")
        if not np.all(np.isfinite(vals)):
            raise DataError(f"non-finite sample value in window {len(windows)} (line {lineno})")
        cur_key = (s, g)
        current.append(vals)
    if current:
        if channels is not None and len(current) != channels:
            raise FormatError(f"end of file: last window has {len(current)} channels, expected {channels}")
        windows.append(np.stack(current))
        subs.append(cur_key[0])
        gests.append(cur_key[1])
    if not windows:
        return Dataset(np.zeros((0, 1, n), np.float32), [], [])
    return Dataset(np.stack(windows), _remap_subjects(np.array(subs)), gests)


def save_features(X: FeatureMatrix, path) -> None:
    """CSV with header ``subject,gesture,f0,...,f{d-1}``."""
    with open(path, "w", newline="") as fh:
        fh.write(features_csv(X, prefix="f"))


def features_csv(X: FeatureMatrix, prefix="f") -> str:
    buf = io.StringIO()
    d = X.n_features
    buf.write("subject,gesture," + ",".join(f"{prefix}{i}" for i in range(d)) + "\n")
    for i in range(X.n_samples):
        buf.write(f"{int(X.subjects[i])},{int(X.labels[i])},")
        buf.write(",".join(repr(float(v)) for v in X.values[i]) + "\n")
    return buf.getvalue()


def load_features(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["subject", "gesture"]:
            raise FormatError("bad header at line 1: expected subject,gesture,f0,...")
        d = len(header) - 2
        rows, subs, labs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise FormatError(f"line {lineno}: expected {d} feature columns, got {len(row) - 2}")
            try:
                subs.append(int(row[0]))
                labs.append(int(row[1]))
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
    values = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    return FeatureMatrix(values, labs, subs)
