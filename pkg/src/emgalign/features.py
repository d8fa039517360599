"""Time-domain EMG features.

Per channel, in this order: mean absolute value, root mean square, waveform
length, zero crossings, Wilson amplitude, maximum absolute amplitude and
integrated EMG. The feature vector is channel-major: column ``7 * c + j`` is
feature ``j`` of channel ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset, EmgWindow, FeatureMatrix
from .errors import ArgumentError, DataError

FEATURE_NAMES = ("MAV", "RMS", "WL", "ZC", "WAMP", "MAX", "IEMG")
N_PER_CHANNEL = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureConfig:
    zc_threshold: float = 0.0
    wamp_threshold: float = 0.01

    def __post_init__(self):
        for name in ("zc_threshold", "wamp_threshold"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ArgumentError(f"{name} must be finite and >= 0")


def column_names(channels: int) -> tuple:
    return tuple(f"{f}_ch{c}" for c in range(channels) for f in FEATURE_NAMES)


def _compute(x: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    return kernels.window_features(x, float(cfg.zc_threshold), float(cfg.wamp_threshold))


def extract_features(w, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """56-dim (for 8 channels) feature vector of one window.

    `w` is an :class:`EmgWindow` or a (channels, n_samples) array.
    """
    x = w.samples if isinstance(w, EmgWindow) else np.asarray(w)
    if x.ndim != 2:
        raise ArgumentError("a window must be a (channels, n_samples) matrix")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite sample value in window")
    return _compute(x[None], cfg)[0]


def extract_matrix(d: Dataset, cfg: FeatureConfig = FeatureConfig(), chunk: int = 1024) -> FeatureMatrix:
    out = np.empty((len(d), d.channels * N_PER_CHANNEL))
    for start in range(0, len(d), chunk):
        block = d.samples[start:start + chunk]
        finite = np.isfinite(block).reshape(len(block), -1).all(axis=1)
        if not finite.all():
            raise DataError(f"non-finite sample value in window {start + int(np.flatnonzero(~finite)[0])}")
        out[start:start + chunk] = _compute(block, cfg)
    return FeatureMatrix(out, d.gestures, d.subjects, column_names(d.channels))
