"""Pure-numpy twins of the compiled kernels in ``_ckernels.pyx``.

Same signatures, same outputs up to floating-point summation order.
"""

import numpy as np


def lfilter_rows(b, a, x):
    """Direct-form II transposed IIR filter along each row of `x`."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    order = len(b) - 1
    y = np.empty_like(x)
    z = np.zeros((order + 1, x.shape[0]))
    # time is the only sequential axis; rows are filtered together
    for i in range(x.shape[1]):
        xi = x[:, i]
        yi = b[0] * xi + z[0]
        for k in range(order - 1):
            z[k] = b[k + 1] * xi + z[k + 1] - a[k + 1] * yi
        z[order - 1] = b[order] * xi - a[order] * yi
        y[:, i] = yi
    return y


def window_features(x, zc_threshold, wamp_threshold):
    """MAV, RMS, WL, ZC, WAMP, MAX, IEMG per channel, channel-major."""
    x = np.asarray(x, dtype=np.float64)
    nw, nc, n = x.shape
    absx = np.abs(x)
    diff = np.abs(np.diff(x, axis=2))
    iemg = absx.sum(axis=2)
    sign_change = (x[:, :, :-1] * x[:, :, 1:]) < 0.0
    feats = np.stack(
        [
            iemg / n,
            np.sqrt((x * x).sum(axis=2) / n),
            diff.sum(axis=2),
            (sign_change & (diff >= zc_threshold)).sum(axis=2),
            (diff >= wamp_threshold).sum(axis=2),
            absx.max(axis=2),
            iemg,
        ],
        axis=2,
    )
    return feats.reshape(nw, nc * 7).astype(np.float64)


def jacobi_eigh(a_in, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition; see the compiled version."""
    A = np.array(a_in, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.sqrt((A * A).sum())
    if scale == 0.0:
        return np.zeros(n), V, 0
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps):
        if np.sqrt(2.0 * (A[iu] ** 2).sum()) <= tol * scale:
            return np.diag(A).copy(), V, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                colp = A[:, p].copy()
                colq = A[:, q]
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp = A[p, :].copy()
                rowq = A[q, :]
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V, -1


def perplexity_search(d2, perplexity, tol=1e-9, max_iter=200):
    """Bisection on per-row Gaussian precision, all rows at once."""
    d2 = np.asarray(d2, dtype=np.float64)
    n = d2.shape[0]
    target = np.log(perplexity)
    off = ~np.eye(n, dtype=bool)
    dmin = np.where(off, d2, np.inf).min(axis=1, keepdims=True)
    shifted = np.where(off, d2 - dmin, 0.0)
    beta = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    P = np.zeros((n, n))
    for _ in range(max_iter):
        act = ~done
        if not act.any():
            break
        b = beta[act][:, None]
        E = np.exp(-b * shifted[act]) * off[act]
        sum_p = E.sum(axis=1)
        h = np.log(sum_p) + beta[act] * (shifted[act] * E).sum(axis=1) / sum_p
        P[act] = E / sum_p[:, None]
        idx = np.flatnonzero(act)
        conv = np.abs(h - target) < tol
        done[idx[conv]] = True
        up = ~conv & (h > target)
        down = ~conv & (h <= target)
        iu, idn = idx[up], idx[down]
        lo[iu] = beta[iu]
        beta[iu] = np.where(np.isinf(hi[iu]), beta[iu] * 2.0, 0.5 * (beta[iu] + hi[iu]))
        hi[idn] = beta[idn]
        beta[idn] = 0.5 * (beta[idn] + lo[idn])
    return P, beta


def tsne_gradient(Y, P, exaggeration):
    """Exact t-SNE gradient and KL(P || Q) for a 2-D embedding."""
    Y = np.asarray(Y, dtype=np.float64)
    sq = (Y * Y).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T
    W = 1.0 / (1.0 + np.maximum(d2, 0.0))
    np.fill_diagonal(W, 0.0)
    Q = W / W.sum()
    mask = P > 0
    kl = float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))).sum())
    M = (exaggeration * P - Q) * W
    G = 4.0 * (M.sum(axis=1)[:, None] * Y - M @ Y)
    return G, kl
