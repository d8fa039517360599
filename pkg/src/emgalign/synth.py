"""Synthetic multi-subject EMG cohort.

Surface EMG is modeled as band-limited Gaussian noise whose per-channel
standard deviation encodes the held gesture. Subjects differ through three
knobs: per-channel electrode gains, mixing with one adjacent channel
(electrode shift) and a per-subject perturbation of the activation pattern. Within a
subject, windows vary through a random contraction level, both shared by
all channels and per channel.

Band-limiting uses a fixed 4th-order Butterworth band-pass, 20-450 Hz at
2 kHz, applied as a direct-form II transposed recursion with the
coefficients below. The filter output is divided by the square root of the
filter's white-noise power gain (sum of the squared impulse response), so a
unit-variance input gives unit-variance output.
"""

from __future__ import annotations

import shlex
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels
from .data import Dataset, EmgWindow, GESTURE_NAMES
from .errors import ArgumentError
from .seeding import derive_seed, rng

SAMPLING_RATE_HZ = 2000
CHANNELS = 8
SAMPLES_PER_WINDOW = 800
N_GESTURES = 4

BANDPASS_B = np.array(
    [0.23130797944426512, 0.0, -0.46261595888853024, 0.0, 0.23130797944426512]
)
BANDPASS_A = np.array(
    [1.0, -2.14009459826319, 1.552889335821075, -0.5922328575740206, 0.1833777832012321]
)
# sum of h[n]^2 over the impulse response of the filter above
BANDPASS_POWER_GAIN = 0.4354635336439591
# discarded leading samples; the slowest pole has decayed below 1e-9 by then
WARMUP = 400

# Shared activation pattern in mV, rows = gestures (thumb, index, middle,
# little), columns = electrodes. Every gesture drives all channels at a
# common level, plus a gesture-specific bump over two or three electrodes.
BASE_ACTIVATION = np.array(
    [
        [0.70, 0.45, 0.30, 0.25, 0.25, 0.30, 0.40, 0.60],
        [0.45, 0.70, 0.60, 0.30, 0.25, 0.25, 0.30, 0.35],
        [0.30, 0.35, 0.60, 0.70, 0.45, 0.30, 0.25, 0.25],
        [0.25, 0.25, 0.30, 0.35, 0.60, 0.70, 0.55, 0.30],
    ]
)


@dataclass(frozen=True)
class CohortConfig:
    """Cohort size and inter-subject variability knobs.

    ``effort_jitter`` is the log-scale spread of a per-window contraction
    level multiplying the activation part of every channel's amplitude;
    ``window_jitter`` adds an independent per-channel log-scale term. With
    both at 0 every window of a (subject, gesture) pair has the same target
    amplitudes. Defaults come from ``scripts/calibrate.py``.
    """

    n_subjects: int = 14
    windows_per_gesture: int = 150
    gain_spread: float = 0.6
    shift_strength: float = 0.4
    activation_jitter: float = 0.25
    effort_jitter: float = 0.2
    window_jitter: float = 0.15
    noise_floor: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ArgumentError("n_subjects must be >= 1")
        if self.windows_per_gesture < 1:
            raise ArgumentError("windows_per_gesture must be >= 1")
        if min(self.gain_spread, self.activation_jitter, self.effort_jitter, self.window_jitter) < 0:
            raise ArgumentError("spreads and jitters must be >= 0")
        if not 0.0 <= self.shift_strength <= 1.0:
            raise ArgumentError("shift_strength must lie in [0, 1]")
        if not self.noise_floor > 0:
            raise ArgumentError("noise_floor must be > 0")

    def to_text(self) -> str:
        """Flat ``key=value`` lines."""
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "CohortConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ArgumentError(f"config line {lineno}: expected key=value")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in types:
                raise ArgumentError(f"config line {lineno}: unknown key {key!r}")
            kw[key] = int(val) if types[key] in (int, "int") else float(shlex.split(val)[0])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class SubjectModel:
    subject_id: int
    channel_gains: np.ndarray
    mixing: np.ndarray
    activation: np.ndarray
    noise_floor: float
    effort_jitter: float = 0.0
    window_jitter: float = 0.0

    def __post_init__(self):
        if np.any(self.mixing < 0) or not np.allclose(self.mixing.sum(axis=1), 1.0, atol=1e-9):
            raise ArgumentError("mixing must be row-stochastic")
        if np.any(self.channel_gains <= 0) or not self.noise_floor > 0:
            raise ArgumentError("gains and noise floor must be positive")
        for name in ("channel_gains", "mixing", "activation"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __eq__(self, other):
        if not isinstance(other, SubjectModel):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.noise_floor == other.noise_floor
            and self.effort_jitter == other.effort_jitter
            and self.window_jitter == other.window_jitter
            and np.array_equal(self.channel_gains, other.channel_gains)
            and np.array_equal(self.mixing, other.mixing)
            and np.array_equal(self.activation, other.activation)
        )


def sample_subject_model(config: CohortConfig, subject_id: int) -> SubjectModel:
    if not 0 <= subject_id < config.n_subjects:
        raise ArgumentError(f"subject_id {subject_id} outside 0..{config.n_subjects - 1}")
    gen = rng(config.seed, "subject", subject_id)
    log_spread = np.log1p(config.gain_spread)
    gains = np.exp(gen.uniform(-log_spread, log_spread, size=CHANNELS))

    # the electrode band sits displaced by a fraction of one electrode, toward
    # a random side: each channel picks up energy from one circular neighbour.
    # Splitting it over both neighbours instead would act as spatial smoothing
    # and make subjects look more alike as the shift grows.
    step = -1 if gen.uniform() < 0.5 else 1
    eye = np.eye(CHANNELS)
    mixing = (1.0 - config.shift_strength) * eye + config.shift_strength * np.roll(eye, step, axis=1)

    eps = gen.standard_normal(BASE_ACTIVATION.shape)
    activation = BASE_ACTIVATION * np.maximum(1.0 + config.activation_jitter * eps, 0.05)
    return SubjectModel(
        subject_id=subject_id,
        channel_gains=gains,
        mixing=mixing,
        activation=activation,
        noise_floor=config.noise_floor,
        effort_jitter=config.effort_jitter,
        window_jitter=config.window_jitter,
    )


def _render(model: SubjectModel, gestures, seeds) -> np.ndarray:
    """Windows for parallel lists of gestures and per-window seeds."""
    n = len(gestures)
    white = np.empty((n, CHANNELS, WARMUP + SAMPLES_PER_WINDOW))
    effort = np.empty((n, CHANNELS))
    for i, s in enumerate(seeds):
        gen = rng(s)
        white[i] = gen.standard_normal((CHANNELS, WARMUP + SAMPLES_PER_WINDOW))
        effort[i] = np.exp(model.effort_jitter * gen.standard_normal()
                           + model.window_jitter * gen.standard_normal(CHANNELS))
    filt = kernels.lfilter_rows(BANDPASS_B, BANDPASS_A, white.reshape(n * CHANNELS, -1))
    z = filt[:, WARMUP:].reshape(n, CHANNELS, SAMPLES_PER_WINDOW)
    z /= np.sqrt(BANDPASS_POWER_GAIN)
    sd = effort * model.activation[np.asarray(gestures)] + model.noise_floor
    z *= sd[:, :, None]
    x = np.einsum("cj,wjt->wct", model.mixing, z)
    x *= model.channel_gains[None, :, None]
    return x.astype(np.float32)


def generate_window(model: SubjectModel, gesture: int, seed: int) -> EmgWindow:
    if gesture not in range(N_GESTURES):
        raise ArgumentError(f"gesture must be in 0..{N_GESTURES - 1}, got {gesture}")
    x = _render(model, [gesture], [seed])[0]
    x.setflags(write=False)
    return EmgWindow(model.subject_id, int(gesture), x)


def window_seed(config: CohortConfig, subject: int, gesture: int, index: int) -> int:
    return derive_seed(config.seed, "window", subject, gesture, index)


def generate_cohort(config: CohortConfig = CohortConfig()) -> Dataset:
    """``n_subjects x 4 x windows_per_gesture`` windows, subject-major then gesture."""
    per = config.windows_per_gesture
    blocks, subjects, gestures = [], [], []
    for s in range(config.n_subjects):
        model = sample_subject_model(config, s)
        g = np.repeat(np.arange(N_GESTURES), per)
        seeds = [window_seed(config, s, int(gi), i % per) for i, gi in enumerate(g)]
        blocks.append(_render(model, g, seeds))
        subjects.append(np.full(len(g), s))
        gestures.append(g)
    return Dataset(
        samples=np.concatenate(blocks),
        subjects=np.concatenate(subjects),
        gestures=np.concatenate(gestures),
        sampling_rate_hz=SAMPLING_RATE_HZ,
        gesture_names=GESTURE_NAMES,
    )
