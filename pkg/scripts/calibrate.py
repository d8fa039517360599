"""Grid search over the synthetic cohort knobs.

For every combination of the given knob values, generates the cohort,
extracts features and reports intra-subject, cross-subject and adapted
accuracies plus the share of the intra/cross gap that ``sa_kpca`` recovers.
Cross-subject numbers can be restricted to the first ``--targets`` subjects
to keep a grid point to a few minutes on one core.

Example::

    python3 scripts/calibrate.py --grid effort_jitter=0.1,0.2 window_jitter=0.15 \
        --modes sa_kpca,coral,kliep --targets 7
"""

import argparse
import itertools
import time

import numpy as np

from emgalign.data import split_loso
from emgalign.evaluation import PipelineSpec, Reduction, UnlabeledTarget, fit_cross_unit, run_intra
from emgalign.classify import accuracy, predict
from emgalign.features import extract_matrix
from emgalign.stats import nemenyi_cd, rank_table
from emgalign.synth import CohortConfig, generate_cohort

NEEDS_KPCA = ("sa_kpca", "coral_kpca", "kliep_kpca", "common_subspace_cross")


def _cross(X, mode, targets, seed, dims):
    red = Reduction("pca" if mode == "sa_pca" else "kpca", dims) if mode in NEEDS_KPCA + ("sa_pca",) else None
    spec = PipelineSpec(mode=mode, reduction=red, seed=seed)
    acc = []
    for s in targets:
        src, tgt = split_loso(X, s)
        model, T, _ = fit_cross_unit(src, UnlabeledTarget(tgt.values, tgt.subjects), spec, s)
        acc.append(accuracy(predict(model, T)[0], tgt.labels))
    return np.array(acc)


def _parse_grid(items):
    grid = {}
    for item in items:
        key, _, vals = item.partition("=")
        cast = int if key in ("n_subjects", "windows_per_gesture", "seed") else float
        grid[key] = [cast(v) for v in vals.split(",")]
    return grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", nargs="*", default=[], help="key=v1,v2 entries over CohortConfig fields")
    ap.add_argument("--modes", default="sa_kpca", help="adapted cross modes to report besides the baseline")
    ap.add_argument("--targets", type=int, default=None, help="cross-subject targets (default all)")
    ap.add_argument("--intra-subjects", type=int, default=3, help="subjects used for the intra estimate")
    ap.add_argument("--dims", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rank", action="store_true",
                    help="also print mean ranks of the baseline and --modes and the sa_kpca vs baseline verdict")
    args = ap.parse_args(argv)

    grid = _parse_grid(args.grid)
    modes = [m for m in args.modes.split(",") if m]
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)) if keys else [()]:
        t0 = time.perf_counter()
        cfg = CohortConfig(seed=args.seed, **dict(zip(keys, combo)))
        X = extract_matrix(generate_cohort(cfg))
        n = cfg.n_subjects if args.targets is None else min(args.targets, cfg.n_subjects)
        targets = list(range(n))
        sub = X.take(np.flatnonzero(X.subjects < args.intra_subjects))
        intra = run_intra(sub, PipelineSpec(mode="intra_baseline", seed=args.seed)).mean_accuracy
        base = _cross(X, "cross_baseline", targets, args.seed, args.dims)
        row = [f"{k}={v}" for k, v in zip(keys, combo)]
        row += [f"intra={intra:.3f}", f"cross={base.mean():.3f}"]
        scores = {"cross_baseline": base}
        for m in modes:
            a = scores[m] = _cross(X, m, targets, args.seed, args.dims)
            row.append(f"{m}={a.mean():.3f}")
            if m == "sa_kpca":
                gap = intra - base.mean()
                row.append(f"recovered={(a.mean() - base.mean()) / gap:.2f}" if gap > 0 else "recovered=nan")
                row.append(f"wins={int(np.sum(a > base))}/{n}")
        if args.rank and len(scores) > 1:
            names = list(scores)
            table = rank_table(names, targets, np.column_stack([scores[k] for k in names]))
            R = dict(zip(names, table.mean_ranks))
            row.append("ranks " + ",".join(f"{k}:{R[k]:.2f}" for k in sorted(R, key=R.get)))
            if "sa_kpca" in R and len(names) <= 10:
                cd = nemenyi_cd(len(names), len(targets))
                row.append(f"sa_vs_base={R['cross_baseline'] - R['sa_kpca']:.2f}/cd={cd:.2f}")
        row.append(f"{time.perf_counter() - t0:.0f}s")
        print(" ".join(row), flush=True)


if __name__ == "__main__":
    main()
