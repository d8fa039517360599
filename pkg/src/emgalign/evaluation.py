"""Experiment harness: intra-subject k-fold CV, leave-one-subject-out
cross-subject runs, adapted variants and dimension sweeps.

Every cross-subject unit sees the target through :class:`UnlabeledTarget`,
which carries feature values only; target labels are read once, after
prediction, to score the unit.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .adapt import fit_coral, fit_kliep, fit_sa, source_weights, transform_coral, transform_sa
from .classify import MlpConfig, accuracy, predict, train_mlp
from .data import FeatureMatrix, kfold_indices, l2_normalize_rows, split_loso
from .decomp import KernelSpec, fit_projection, project
from .errors import ArgumentError, DataError
from .features import FeatureConfig
from .seeding import derive_seed

INTRA_MODES = ("intra_baseline", "common_subspace_intra")
CROSS_MODES = (
    "cross_baseline",
    "common_subspace_cross",
    "sa_kpca",
    "sa_pca",
    "coral",
    "coral_kpca",
    "kliep",
    "kliep_kpca",
)
MODES = INTRA_MODES + CROSS_MODES
_NEEDS_REDUCTION = ("common_subspace_intra", "common_subspace_cross", "sa_kpca", "sa_pca", "coral_kpca", "kliep_kpca")
_L2_MODES = ("sa_kpca", "coral", "kliep")


@dataclass(frozen=True)
class Reduction:
    method: str = "kpca"
    dims: int = 10
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("cosine"))

    def __post_init__(self):
        if self.method not in ("pca", "kpca", "ica", "tsvd"):
            raise ArgumentError(f"unknown reduction method {self.method!r}")
        if self.dims < 1:
            raise ArgumentError("dims must be >= 1")


@dataclass(frozen=True)
class PipelineSpec:
    """One experiment configuration.

    ``standardize=None`` resolves to z-scoring (fit-row statistics) before
    PCA/ICA/tSVD reductions and for ``sa_pca``, and to no scaling for kernel
    PCA and the L2-normalised modes. ``l2=None`` row-normalises features
    for ``sa_kpca``, ``coral`` and ``kliep`` only. ``hidden_units=None``
    resolves to 100 for intra modes and 10 for cross modes.
    """

    mode: str = "cross_baseline"
    reduction: Reduction | None = None
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    hidden_units: int | None = None
    standardize: bool | None = None
    l2: bool | None = None
    seed: int = 0
    k_folds: int = 10
    stratified: bool = True
    max_train_refs: int = 2000
    coral_lambda: float | None = None
    kliep_sigma_grid: tuple | None = None
    kliep_n_basis: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ArgumentError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode in _NEEDS_REDUCTION and self.reduction is None:
            raise ArgumentError(f"mode {self.mode} requires a reduction (method, dims)")

    @property
    def is_intra(self) -> bool:
        return self.mode in INTRA_MODES

    @property
    def resolved_hidden(self) -> int:
        if self.hidden_units is not None:
            return self.hidden_units
        return 100 if self.is_intra else 10

    @property
    def resolved_standardize(self) -> bool:
        if self.standardize is not None:
            return self.standardize
        if self.mode == "sa_pca":
            return True
        if self.mode in _L2_MODES:
            return False
        return self.reduction is not None and self.reduction.method != "kpca"

    @property
    def resolved_l2(self) -> bool:
        return self.mode in _L2_MODES if self.l2 is None else self.l2

    @property
    def dims(self):
        return None if self.reduction is None else self.reduction.dims

    def with_dims(self, d: int) -> "PipelineSpec":
        red = self.reduction if self.reduction is not None else Reduction("pca", d)
        return replace(self, reduction=replace(red, dims=d))

    def mlp_config(self, *keys) -> MlpConfig:
        return replace(self.mlp, hidden_units=self.resolved_hidden, seed=derive_seed(self.seed, "mlp", *keys))


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    spec: PipelineSpec
    per_unit_accuracy: dict
    mean_accuracy: float
    runtime_seconds: float = 0.0
    per_unit_macro_f1: dict = field(default_factory=dict)
    name: str = ""

    @property
    def std_accuracy(self) -> float:
        return float(np.std(list(self.per_unit_accuracy.values())))

    @property
    def mean_macro_f1(self) -> float:
        v = list(self.per_unit_macro_f1.values())
        return float(np.mean(v)) if v else float("nan")


@dataclass(frozen=True, eq=False)
class UnlabeledTarget:
    values: np.ndarray
    subjects: np.ndarray


def macro_f1(pred, truth, n_classes=None) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    classes = np.unique(truth) if n_classes is None else np.arange(n_classes)
    f1 = []
    for c in classes:
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        f1.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(f1))


# --------------------------------------------------------------------------
# Preprocessing helpers


class _Scaler:
    def __init__(self, V):
        self.mean = V.mean(axis=0)
        sd = V.std(axis=0)
        self.std = np.where(sd > 0, sd, 1.0)

    def __call__(self, V):
        return (V - self.mean) / self.std


def _fit_reduce(spec: PipelineSpec, fit_rows: FeatureMatrix, seed_keys):
    """Fit `spec.reduction` on `fit_rows`; returns a callable on arrays."""
    red = spec.reduction
    scaler = _Scaler(fit_rows.values) if spec.resolved_standardize else None
    V = scaler(fit_rows.values) if scaler else fit_rows.values
    proj = fit_projection(
        red.method,
        fit_rows.with_values(V),
        red.dims,
        kernel=red.kernel,
        seed=derive_seed(spec.seed, "reduction", *seed_keys),
        max_train_refs=spec.max_train_refs,
    )

    def apply(A):
        A = scaler(A) if scaler else A
        return project(proj, A)

    apply.projection = proj
    return apply


# --------------------------------------------------------------------------
# Intra-subject


def _intra_subject(X: FeatureMatrix, spec: PipelineSpec, s: int):
    rows = np.flatnonzero(X.subjects == s)
    if len(rows) == 0:
        raise DataError(f"no rows for subject {s}")
    if spec.resolved_l2:
        X = l2_normalize_rows(X)
    Xs = X.take(rows)
    common = None
    if spec.mode == "common_subspace_intra":
        others = X.take(np.flatnonzero(X.subjects != s))
        if len(others) == 0:
            raise DataError("common-subspace intra needs at least two subjects")
        common = _fit_reduce(spec, others, ("common", s))
    folds = kfold_indices(len(Xs), spec.k_folds, derive_seed(spec.seed, "folds", s), Xs.labels, spec.stratified)
    acc, f1 = {}, {}
    for f, (tr, te) in enumerate(folds):
        train, test = Xs.take(tr), Xs.take(te)
        if common is not None:
            A, B = common(train.values), common(test.values)
        elif spec.reduction is not None:
            reduce = _fit_reduce(spec, train, ("intra", s, f))
            A, B = reduce(train.values), reduce(test.values)
        else:
            A, B = train.values, test.values
        model = train_mlp(A, train.labels, spec.mlp_config("intra", s, f))
        pred, _ = predict(model, B)
        acc[(s, f)] = accuracy(pred, test.labels)
        f1[(s, f)] = macro_f1(pred, test.labels, model.W2.shape[1])
    return acc, f1


# --------------------------------------------------------------------------
# Cross-subject


def fit_cross_unit(source: FeatureMatrix, target: UnlabeledTarget, spec: PipelineSpec, unit_key=0):
    """Fit the pipeline for one LOSO unit.

    Returns ``(model, target_inputs, artifacts)`` where `target_inputs` is the
    transformed target matrix fed to :func:`predict`. Only source labels are read.
    """
    mode = spec.mode
    S, T = source.values, np.asarray(target.values, dtype=np.float64)
    weights = None
    art = {}
    # SA keeps the normalisation inside its model (l2_mode); other modes
    # normalise up front
    l2_outside = spec.resolved_l2 and mode not in ("sa_kpca", "sa_pca")
    if l2_outside:
        S, T = l2_normalize_rows(S), l2_normalize_rows(T)
        source = source.with_values(S)
    if mode in ("cross_baseline", "common_subspace_cross") and spec.reduction is not None:
        reduce = _fit_reduce(spec, source, ("cross", unit_key))
        art["projection"] = reduce.projection
        S, T = reduce(S), reduce(T)
    elif mode in ("sa_kpca", "sa_pca"):
        if spec.resolved_standardize:
            sc = _Scaler(S)
            S, T = sc(S), sc(T)
        sa = fit_sa(S, T, spec.reduction.dims, l2_mode=spec.resolved_l2)
        art["sa"] = sa
        S, T = transform_sa(sa, S, "source"), transform_sa(sa, T, "target")
    elif mode in ("coral_kpca", "kliep_kpca"):
        reduce = _fit_reduce(spec, source, ("cross", unit_key))
        art["projection"] = reduce.projection
        S, T = reduce(S), reduce(T)

    if mode in ("coral", "coral_kpca"):
        co = fit_coral(S, T, spec.coral_lambda)
        art["coral"] = co
        S, T = transform_coral(co, S, "source"), transform_coral(co, T, "target")
    elif mode in ("kliep", "kliep_kpca"):
        kl = fit_kliep(
            S,
            T,
            sigma_grid=spec.kliep_sigma_grid,
            n_basis=spec.kliep_n_basis,
            seed=derive_seed(spec.seed, "kliep", unit_key),
        )
        art["kliep"] = kl
        weights = source_weights(kl)

    model = train_mlp(S, source.labels, spec.mlp_config("cross", unit_key), sample_weights=weights)
    return model, T, art


def _cross_subject(X: FeatureMatrix, spec: PipelineSpec, s: int):
    source, target = split_loso(X, s)
    unlabeled = UnlabeledTarget(target.values, target.subjects)
    model, T, _ = fit_cross_unit(source, unlabeled, spec, s)
    pred, _ = predict(model, T)
    return {s: accuracy(pred, target.labels)}, {s: macro_f1(pred, target.labels, model.W2.shape[1])}


# --------------------------------------------------------------------------
# Drivers


def _unit_job(args):
    X, spec, s = args
    return _intra_subject(X, spec, s) if spec.is_intra else _cross_subject(X, spec, s)


def default_jobs() -> int:
    return os.cpu_count() or 1


def _run(X: FeatureMatrix, spec: PipelineSpec, jobs: int | None, name: str | None):
    t0 = time.perf_counter()
    subjects = [int(s) for s in np.unique(X.subjects)]
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    tasks = [(X, spec, s) for s in subjects]
    if jobs == 1 or len(tasks) == 1:
        parts = [_unit_job(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            parts = list(pool.map(_unit_job, tasks))
    acc, f1 = {}, {}
    for a, f in parts:
        acc.update(a)
        f1.update(f)
    acc = dict(sorted(acc.items()))
    f1 = dict(sorted(f1.items()))
    return ExperimentResult(
        spec=spec,
        per_unit_accuracy=acc,
        mean_accuracy=float(np.mean(list(acc.values()))),
        runtime_seconds=time.perf_counter() - t0,
        per_unit_macro_f1=f1,
        name=name or spec.mode,
    )


def run_intra(X: FeatureMatrix, spec: PipelineSpec, jobs: int | None = 1, name: str | None = None) -> ExperimentResult:
    """Per-subject k-fold CV; units are ``(subject, fold)``."""
    if not spec.is_intra:
        raise ArgumentError(f"run_intra needs an intra mode, got {spec.mode}")
    return _run(X, spec, jobs, name)


def run_cross(X: FeatureMatrix, spec: PipelineSpec, jobs: int | None = 1, name: str | None = None) -> ExperimentResult:
    """Leave-one-subject-out; units are target subjects."""
    if spec.is_intra:
        raise ArgumentError(f"run_cross needs a cross mode, got {spec.mode}")
    if len(np.unique(X.subjects)) < 2:
        raise ArgumentError("cross-subject evaluation needs at least two subjects")
    return _run(X, spec, jobs, name)


def run(X: FeatureMatrix, spec: PipelineSpec, jobs: int | None = 1, name: str | None = None) -> ExperimentResult:
    return (run_intra if spec.is_intra else run_cross)(X, spec, jobs, name)


def dimension_sweep(X: FeatureMatrix, spec: PipelineSpec, dims, jobs: int | None = 1) -> list:
    dims = list(dims)
    if not dims:
        raise ArgumentError("dims must be nonempty")
    return [run(X, spec.with_dims(int(d)), jobs) for d in dims]


# --------------------------------------------------------------------------
# CSV export


def unit_label(key) -> str:
    return f"{key[0]}:{key[1]}" if isinstance(key, tuple) else str(key)


def results_csv(results) -> str:
    """``method,unit,accuracy`` rows for one or more results."""
    lines = ["method,unit,accuracy"]
    for r in results:
        for k, v in r.per_unit_accuracy.items():
            lines.append(f"{r.name},{unit_label(k)},{v!r}")
    return "\n".join(lines) + "\n"


def summary_csv(results) -> str:
    """``method,dims,mean_accuracy,std`` rows."""
    lines = ["method,dims,mean_accuracy,std"]
    for r in results:
        d = r.spec.dims if r.spec.dims is not None else ""
        lines.append(f"{r.name},{d},{r.mean_accuracy!r},{r.std_accuracy!r}")
    return "\n".join(lines) + "\n"


def ranks_csv(table, cd: float) -> str:
    lines = ["method,mean_rank"]
    for m, r in zip(table.methods, table.mean_ranks):
        lines.append(f"{m},{float(r)!r}")
    lines.append(f"critical_difference,{cd!r}")
    return "\n".join(lines) + "\n"
