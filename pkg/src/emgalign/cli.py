"""Command-line entry point: ``emgalign <command> [flags]``.

Commands map one-to-one onto pipeline stages so intermediate artifacts are
plain files. Every command writes ``manifest.json`` (or ``<output>.manifest.json``
for single-file outputs) with the flag echo, versions, outputs and runtime.

Exit codes: 0 ok, 1 usage, 2 data or format, 3 numeric.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import asdict, fields

import numpy as np

from . import __version__, kernels
from .adapt import fit_coral, fit_kliep, fit_sa
from .classify import MlpConfig
from .data import FeatureMatrix, features_csv, l2_normalize_rows, load_dataset, load_features, save_dataset, save_features
from .decomp import KernelSpec, TsneConfig, fit_projection, project, tsne_embed
from .errors import ArgumentError, DataError, EmgAlignError, FormatError, NumericError
from .evaluation import (
    CROSS_MODES,
    MODES,
    PipelineSpec,
    Reduction,
    UnlabeledTarget,
    default_jobs,
    dimension_sweep,
    fit_cross_unit,
    ranks_csv,
    results_csv,
    run,
    summary_csv,
)
from .features import FeatureConfig, extract_matrix
from .serialize import save_model, training_trace_csv
from .stats import friedman_test, nemenyi_cd, rank_methods, rank_table
from .synth import CohortConfig, generate_cohort

DEFAULT_DIMS = "2,5,10,15,20,30,56"
RANK_METHODS = ("sa_kpca", "sa_pca", "coral", "coral_kpca", "kliep", "kliep_kpca", "cross_baseline")


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so main() owns the exit code."""

    def error(self, message):
        raise ArgumentError(message)


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _float_list(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# --------------------------------------------------------------------------
# Flag groups


def _add_cohort_flags(p):
    g = p.add_argument_group("synthetic cohort")
    g.add_argument("--config", help="key=value cohort config file; explicit flags override it")
    for f in fields(CohortConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        typ = int if f.type in (int, "int") else float
        g.add_argument(flag, type=typ, default=None, help=f"(default {f.default})")


def _cohort(args) -> CohortConfig:
    base = CohortConfig()
    if args.config:
        with open(args.config) as fh:
            base = CohortConfig.from_text(fh.read())
    kw = asdict(base)
    for f in fields(CohortConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            kw[f.name] = v
    kw["seed"] = args.seed
    return CohortConfig(**kw)


def _add_feature_flags(p):
    g = p.add_argument_group("features")
    d = FeatureConfig()
    g.add_argument("--zc-threshold", type=float, default=d.zc_threshold, help=f"(default {d.zc_threshold})")
    g.add_argument("--wamp-threshold", type=float, default=d.wamp_threshold, help=f"(default {d.wamp_threshold})")


def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(zc_threshold=args.zc_threshold, wamp_threshold=args.wamp_threshold)


def _add_input_flags(p):
    g = p.add_argument_group("input (default: synthesise the cohort in memory)")
    g.add_argument("--features", help="feature CSV (subject,gesture,f0,...)")
    g.add_argument("--input", help="raw dataset file; features are extracted first")
    g.add_argument("--format", choices=("binary", "csv"), default=None,
                   help="raw dataset format (default: from the extension)")
    _add_cohort_flags(p)
    _add_feature_flags(p)


def _load_matrix(args) -> FeatureMatrix:
    if args.features and args.input:
        raise ArgumentError("give at most one of --features and --input")
    if args.features:
        return load_features(args.features)
    if args.input:
        return extract_matrix(load_dataset(args.input, args.format), _feature_config(args))
    return extract_matrix(generate_cohort(_cohort(args)), _feature_config(args))


def _add_kernel_flags(p, default_kind="cosine"):
    d = KernelSpec()
    p.add_argument("--kernel", choices=("linear", "cosine", "polynomial"), default=default_kind,
                   help=f"(default {default_kind})")
    p.add_argument("--poly-degree", type=int, default=d.poly_degree, help=f"(default {d.poly_degree})")
    p.add_argument("--poly-gamma", type=float, default=None, help="(default 1/n_features)")
    p.add_argument("--poly-coef0", type=float, default=d.poly_coef0, help=f"(default {d.poly_coef0})")


def _kernel(args) -> KernelSpec:
    return KernelSpec(args.kernel, args.poly_degree, args.poly_gamma, args.poly_coef0)


def _add_pipeline_flags(p, dims_default):
    m = MlpConfig()
    p.add_argument("--mode", choices=MODES, default="cross_baseline", help="(default cross_baseline)")
    help_dims = (f"(default {dims_default})" if dims_default else
                 "(default 10 for modes with a subspace, none for the baselines)")
    p.add_argument("--dims", default=dims_default, help=help_dims)
    p.add_argument("--method", choices=("pca", "kpca", "ica", "tsvd"), default="kpca",
                   help="reduction method (default kpca; sa_pca always uses pca)")
    _add_kernel_flags(p)
    p.add_argument("--hidden", type=int, default=None, help="hidden units (default 100 intra, 10 cross)")
    p.add_argument("--standardize", type=_on_off, default=None, help="on/off (default: per mode)")
    p.add_argument("--l2", type=_on_off, default=None, help="on/off (default on for sa_kpca, coral, kliep)")
    p.add_argument("--lambda", dest="coral_lambda", type=float, default=None,
                   help="CORAL ridge (default 1e-3 * trace(Cs) / n_features)")
    p.add_argument("--sigma-grid", type=_float_list, default=None,
                   help="KLIEP kernel widths (default median distance x 0.25,0.5,1,2,4)")
    p.add_argument("--n-basis", type=int, default=None, help="KLIEP centres (default min(100, n_target))")
    p.add_argument("--k-folds", type=int, default=10, help="(default 10)")
    p.add_argument("--stratified", type=_on_off, default=True, help="on/off (default on)")
    p.add_argument("--max-train-refs", type=int, default=2000, help="KPCA fit rows cap (default 2000)")
    p.add_argument("--max-epochs", type=int, default=m.max_epochs, help=f"(default {m.max_epochs})")
    p.add_argument("--patience", type=int, default=m.patience, help=f"(default {m.patience})")
    p.add_argument("--learning-rate", type=float, default=m.learning_rate, help=f"(default {m.learning_rate})")
    p.add_argument("--batch-size", type=int, default=m.batch_size, help=f"(default {m.batch_size})")


def _spec(args, dims) -> PipelineSpec:
    reduction = None
    if dims is not None:
        method = "pca" if args.mode == "sa_pca" else args.method
        reduction = Reduction(method, int(dims), _kernel(args))
    mlp = MlpConfig(
        max_epochs=args.max_epochs,
        patience=args.patience,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
    )
    return PipelineSpec(
        mode=args.mode,
        reduction=reduction,
        feature_config=_feature_config(args),
        mlp=mlp,
        hidden_units=args.hidden,
        standardize=args.standardize,
        l2=args.l2,
        seed=args.seed,
        k_folds=args.k_folds,
        stratified=args.stratified,
        max_train_refs=args.max_train_refs,
        coral_lambda=args.coral_lambda,
        kliep_sigma_grid=args.sigma_grid,
        kliep_n_basis=args.n_basis,
    )


def _single_dims(args):
    """One subspace size; baselines stay unreduced unless --dims is given."""
    if args.dims in (None, "", "none"):
        return None if args.mode in ("intra_baseline", "cross_baseline") else 10
    d = _int_list(args.dims)
    if len(d) != 1:
        raise ArgumentError("--dims takes one integer here; use the sweep command for a grid")
    return d[0]


# --------------------------------------------------------------------------
# Output helpers


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _out_dir(args):
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _manifest(path, args, outputs, t0, extra=None):
    flags = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": args.command,
        "flags": flags,
        "seed": args.seed,
        "versions": {
            "emgalign": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kernel_backend": kernels.BACKEND,
        },
        "outputs": [os.path.basename(o) for o in outputs],
        "runtime_seconds": round(time.perf_counter() - t0, 3),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _scores_csv(Z, X: FeatureMatrix, rows=None) -> str:
    subs = X.subjects if rows is None else X.subjects[rows]
    labs = X.labels if rows is None else X.labels[rows]
    d = Z.shape[1]
    lines = ["subject,gesture," + ",".join(f"c{i}" for i in range(d))]
    for s, g, z in zip(subs, labs, Z):
        lines.append(f"{int(s)},{int(g)}," + ",".join(repr(float(v)) for v in z))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Commands


def cmd_generate(args):
    t0 = time.perf_counter()
    cfg = _cohort(args)
    ds = generate_cohort(cfg)
    save_dataset(ds, args.out, args.format)
    _manifest(args.out + ".manifest.json", args, [args.out], t0, {"cohort": asdict(cfg)})
    return 0


def cmd_features(args):
    t0 = time.perf_counter()
    X = _load_matrix(args)
    save_features(X, args.out)
    _manifest(args.out + ".manifest.json", args, [args.out], t0)
    return 0


def cmd_eval(args):
    t0 = time.perf_counter()
    X = _load_matrix(args)
    spec = _spec(args, _single_dims(args))
    res = run(X, spec, jobs=args.jobs)
    out = _out_dir(args)
    body = results_csv([res]) + f"{res.name},mean,{res.mean_accuracy!r}\n"
    files = [_write(os.path.join(out, "results.csv"), body),
             _write(os.path.join(out, "summary.csv"), summary_csv([res]))]
    _manifest(os.path.join(out, "manifest.json"), args, files, t0, {"mean_accuracy": res.mean_accuracy})
    print(f"{res.name}: mean accuracy {res.mean_accuracy:.4f} over {len(res.per_unit_accuracy)} units")
    return 0


def cmd_sweep(args):
    t0 = time.perf_counter()
    X = _load_matrix(args)
    dims = _int_list(args.dims)
    if not dims:
        raise ArgumentError("--dims must list at least one value")
    spec = _spec(args, dims[0])
    results = dimension_sweep(X, spec, dims, jobs=args.jobs)
    out = _out_dir(args)
    files = [_write(os.path.join(out, "curve.csv"), summary_csv(results)),
             _write(os.path.join(out, "results.csv"), results_csv(results))]
    _manifest(os.path.join(out, "manifest.json"), args, files, t0)
    for r in results:
        print(f"{r.name} d={r.spec.dims}: {r.mean_accuracy:.4f}")
    return 0


def cmd_project(args):
    t0 = time.perf_counter()
    X = _load_matrix(args)
    fit_rows = X
    if args.exclude_subject is not None:
        keep = X.subjects != args.exclude_subject
        if not keep.any():
            raise DataError("no rows left after --exclude-subject")
        fit_rows = X.take(np.flatnonzero(keep))
    if args.l2:
        fit_rows, X = l2_normalize_rows(fit_rows), l2_normalize_rows(X)
    p = fit_projection(args.method, fit_rows, args.dims, kernel=_kernel(args), seed=args.seed,
                       max_train_refs=args.max_train_refs)
    Z = project(p, X.values)
    files = [_write(args.out, _scores_csv(Z, X))]
    if args.model_out:
        save_model(p, args.model_out)
        files.append(args.model_out)
    _manifest(args.out + ".manifest.json", args, files, t0)
    return 0


def cmd_tsne(args):
    t0 = time.perf_counter()
    X = _load_matrix(args)
    Z = X.values
    if args.dims:
        p = fit_projection("kpca", X, args.dims, kernel=_kernel(args), seed=args.seed,
                           max_train_refs=args.max_train_refs)
        Z = project(p, Z)
    cfg = TsneConfig(perplexity=args.perplexity, iterations=args.iterations, learning_rate=args.learning_rate,
                     max_rows=args.max_rows, seed=args.seed)
    res = tsne_embed(Z, cfg)
    trace = "iteration,kl\n" + "".join(f"{i},{float(v)!r}\n" for i, v in enumerate(res.kl_trace, start=1))
    files = [_write(args.out, _scores_csv(res.embedding, X, res.rows)),
             _write(args.out + ".kl.csv", trace)]
    _manifest(args.out + ".manifest.json", args, files, t0, {"final_kl": float(res.kl_trace[-1])})
    return 0


def _read_results(paths):
    """Accuracy per (method, unit) from ``method,unit,accuracy`` files; the mean row is skipped."""
    table = {}
    for path in paths:
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0].strip() != "method,unit,accuracy":
            raise FormatError(f"{path}: line 1: expected header method,unit,accuracy")
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 3 fields")
            if parts[1] == "mean":
                continue
            try:
                table.setdefault(parts[0], {})[parts[1]] = float(parts[2])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: bad accuracy {parts[2]!r}") from None
    return table


def cmd_stats(args):
    t0 = time.perf_counter()
    table = _read_results(args.results)
    methods = args.methods.split(",") if args.methods else sorted(table)
    missing = [m for m in methods if m not in table]
    if missing:
        raise DataError(f"methods not found in the results: {', '.join(missing)}")
    if len(methods) < 2:
        raise ArgumentError("need at least two methods to rank")
    units = sorted(table[methods[0]])
    for m in methods[1:]:
        if sorted(table[m]) != units:
            raise DataError(f"method {m} does not cover the same units as {methods[0]}")
    r = rank_table(methods, units, [[table[m][u] for m in methods] for u in units])
    chi2, df = friedman_test(r)
    cd = nemenyi_cd(len(methods), len(units), args.alpha)
    out = _out_dir(args)
    files = [_write(os.path.join(out, "ranks.csv"), ranks_csv(r, cd))]
    _manifest(os.path.join(out, "manifest.json"), args, files, t0,
              {"friedman_chi2": chi2, "friedman_df": df, "critical_difference": cd})
    for m, v in sorted(zip(methods, r.mean_ranks), key=lambda t: t[1]):
        print(f"{m}: {v:.3f}")
    print(f"Friedman chi2={chi2:.4f} (df={df}); Nemenyi CD={cd:.4f} at alpha={args.alpha}")
    return 0


def cmd_fit(args):
    t0 = time.perf_counter()
    X = _load_matrix(args)
    if args.mode not in CROSS_MODES:
        raise ArgumentError(f"fit takes a cross-subject mode, got {args.mode}")
    if args.target not in set(X.subjects.tolist()):
        raise ArgumentError(f"target subject {args.target} not in the data")
    spec = _spec(args, _single_dims(args))
    src = X.take(np.flatnonzero(X.subjects != args.target))
    tgt = X.take(np.flatnonzero(X.subjects == args.target))
    model, _, art = fit_cross_unit(src, UnlabeledTarget(tgt.values, tgt.subjects), spec, args.target)
    out = _out_dir(args)
    files = [os.path.join(out, "mlp.emgm")]
    save_model(model, files[0])
    for key in ("projection", "sa", "coral", "kliep"):
        if key in art:
            files.append(os.path.join(out, f"{key}.emgm"))
            save_model(art[key], files[-1])
    files.append(_write(os.path.join(out, "training_trace.csv"), training_trace_csv(model)))
    _manifest(os.path.join(out, "manifest.json"), args, files, t0)
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emgalign", description="Cross-subject EMG gesture pipeline on synthetic or recorded data.")
    parser.add_argument("--version", action="version", version=f"emgalign {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "write a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("binary", "csv"), default=None, help="(default: from the extension)")
    _add_cohort_flags(p)

    p = add("features", cmd_features, "extract the 56-column feature matrix")
    p.add_argument("--out", required=True)
    _add_input_flags(p)

    p = add("eval", cmd_eval, "run one pipeline configuration")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=default_jobs())
    _add_input_flags(p)
    _add_pipeline_flags(p, dims_default=None)

    p = add("sweep", cmd_sweep, "run one configuration over a grid of subspace sizes")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=default_jobs())
    _add_input_flags(p)
    _add_pipeline_flags(p, dims_default=DEFAULT_DIMS)

    p = add("project", cmd_project, "export low-dimensional projections")
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", default=None, help="also save the fitted projection blob")
    p.add_argument("--method", choices=("pca", "kpca", "ica", "tsvd"), default="kpca")
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--l2", type=_on_off, default=False, help="row-normalise before fitting")
    p.add_argument("--exclude-subject", type=int, default=None, help="fit on all other subjects")
    p.add_argument("--max-train-refs", type=int, default=2000)
    _add_kernel_flags(p)
    _add_input_flags(p)

    d = TsneConfig()
    p = add("tsne", cmd_tsne, "exact t-SNE of the KPCA common subspace")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=int, default=10, help="KPCA dims before t-SNE; 0 uses raw features")
    p.add_argument("--perplexity", type=float, default=d.perplexity)
    p.add_argument("--iterations", type=int, default=d.iterations)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--max-rows", type=int, default=d.max_rows)
    p.add_argument("--max-train-refs", type=int, default=2000)
    _add_kernel_flags(p)
    _add_input_flags(p)

    p = add("stats", cmd_stats, "Friedman test and Nemenyi critical difference over result files")
    p.add_argument("results", nargs="+", help="method,unit,accuracy CSV files")
    p.add_argument("--methods", default=",".join(RANK_METHODS), help="comma-separated subset to rank")
    p.add_argument("--alpha", type=float, choices=(0.05, 0.10), default=0.05)
    p.add_argument("--out-dir", default=".")

    p = add("fit", cmd_fit, "fit one leave-one-subject-out unit and save model blobs")
    p.add_argument("--target", type=int, required=True, help="held-out subject id")
    p.add_argument("--out-dir", default=".")
    _add_input_flags(p)
    _add_pipeline_flags(p, dims_default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ArgumentError as exc:
        code, msg = 1, str(exc)
    except (FormatError, DataError) as exc:
        code, msg = 2, str(exc)
    except NumericError as exc:
        code, msg = 3, str(exc)
    except EmgAlignError as exc:
        code, msg = exc.exit_code, str(exc)
    except FileNotFoundError as exc:
        code, msg = 2, f"{exc.strerror}: {exc.filename}"
    except OSError as exc:
        code, msg = 2, str(exc)
    print(f"emgalign: error: {' '.join(msg.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
