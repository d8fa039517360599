"""Compare the compiled and numpy kernel backends on representative inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per kernel and backend, the speed-up, and the
largest absolute difference between the two outputs.
"""

import argparse
import time

import numpy as np

from emgalign import kernels
from emgalign.synth import BANDPASS_A, BANDPASS_B


def _cases(gen):
    x = gen.standard_normal((8 * 64, 1200))
    win = gen.standard_normal((64, 8, 800))
    sym = gen.standard_normal((56, 56))
    sym = sym + sym.T
    pts = gen.standard_normal((300, 10))
    d2 = ((pts[:, None] - pts[None]) ** 2).sum(-1)
    Y = gen.standard_normal((300, 2)) * 1e-2
    P = gen.uniform(size=(300, 300))
    P = P + P.T
    np.fill_diagonal(P, 0.0)
    P /= P.sum()
    return {
        "lfilter_rows": (lambda k: k.lfilter_rows(BANDPASS_B, BANDPASS_A, x)),
        "window_features": (lambda k: k.window_features(win, 0.01, 0.02)),
        "jacobi_eigh": (lambda k: k.jacobi_eigh(sym)),
        "perplexity_search": (lambda k: k.perplexity_search(d2, 30.0)),
        "tsne_gradient": (lambda k: k.tsne_gradient(Y, P, 12.0)),
    }


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _maxdiff(a, b):
    if isinstance(a, tuple):
        return max(_maxdiff(u, v) for u, v in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    compiled = kernels.compiled_backend
    if compiled is None:
        print("compiled backend unavailable; timing the numpy fallback only")
    print(f"{'kernel':<18} {'python_s':>10} {'cython_s':>10} {'speedup':>8} {'max_diff':>10}")
    for name, fn in _cases(np.random.default_rng(args.seed)).items():
        tp, op = _best(lambda: fn(kernels.python_backend), args.repeat)
        if compiled is None:
            print(f"{name:<18} {tp:10.4f} {'-':>10} {'-':>8} {'-':>10}")
            continue
        tc, oc = _best(lambda: fn(compiled), args.repeat)
        print(f"{name:<18} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f} {_maxdiff(op, oc):10.2e}")


if __name__ == "__main__":
    main()
