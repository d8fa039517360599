# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a numpy twin with the same signature in
:mod:`emgalign._pykernels`; :mod:`emgalign.kernels` picks one at import.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, exp, log, INFINITY

cnp.import_array()


def lfilter_rows(double[::1] b, double[::1] a, double[:, ::1] x):
    """Direct-form II transposed IIR filter applied along each row of `x`.

    `a[0]` must be 1.
    """
    cdef Py_ssize_t n_rows = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t order = b.shape[0] - 1
    cdef Py_ssize_t r, i, k
    cdef double xi, yi
    out = np.empty((n_rows, n), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef double[::1] z = np.zeros(order + 1, dtype=np.float64)
    for r in range(n_rows):
        for k in range(order + 1):
            z[k] = 0.0
        for i in range(n):
            xi = x[r, i]
            yi = b[0] * xi + z[0]
            for k in range(order - 1):
                z[k] = b[k + 1] * xi + z[k + 1] - a[k + 1] * yi
            z[order - 1] = b[order] * xi - a[order] * yi
            y[r, i] = yi
    return out


def window_features(double[:, :, ::1] x, double zc_threshold, double wamp_threshold):
    """MAV, RMS, WL, ZC, WAMP, MAX, IEMG per channel, channel-major.

    `x` has shape (n_windows, channels, n_samples); output is
    (n_windows, channels * 7).
    """
    cdef Py_ssize_t nw = x.shape[0], nc = x.shape[1], n = x.shape[2]
    cdef Py_ssize_t w, c, i
    cdef double s_abs, s_sq, wl, mx, v, d, prev
    cdef long zc, wamp
    out = np.empty((nw, nc * 7), dtype=np.float64)
    cdef double[:, ::1] f = out
    for w in range(nw):
        for c in range(nc):
            s_abs = 0.0
            s_sq = 0.0
            wl = 0.0
            mx = 0.0
            zc = 0
            wamp = 0
            for i in range(n):
                v = x[w, c, i]
                s_abs += fabs(v)
                s_sq += v * v
                if fabs(v) > mx:
                    mx = fabs(v)
                if i > 0:
                    prev = x[w, c, i - 1]
                    d = fabs(v - prev)
                    wl += d
                    if prev * v < 0.0 and d >= zc_threshold:
                        zc += 1
                    if d >= wamp_threshold:
                        wamp += 1
            f[w, 7 * c + 0] = s_abs / n
            f[w, 7 * c + 1] = sqrt(s_sq / n)
            f[w, 7 * c + 2] = wl
            f[w, 7 * c + 3] = zc
            f[w, 7 * c + 4] = wamp
            f[w, 7 * c + 5] = mx
            f[w, 7 * c + 6] = s_abs
    return out


def jacobi_eigh(double[:, ::1] a_in, double tol=1e-12, int max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` unsorted; sweeps is -1
    when the off-diagonal norm did not fall below ``tol * ||A||_F``.
    """
    cdef Py_ssize_t n = a_in.shape[0]
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double off, scale, apq, theta, t, c, s, akp, akq, app, aqq
    A_arr = np.array(a_in, dtype=np.float64, copy=True)
    V_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] V = V_arr
    scale = 0.0
    for p in range(n):
        for q in range(n):
            scale += A[p, q] * A[p, q]
    scale = sqrt(scale)
    if scale == 0.0:
        return np.zeros(n), V_arr, 0
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += A[p, q] * A[p, q]
        if sqrt(2.0 * off) <= tol * scale:
            return np.diagonal(A_arr).copy(), V_arr, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if fabs(apq) < 1e-300:
                    continue
                app = A[p, p]
                aqq = A[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = A[p, k]
                    akq = A[q, k]
                    A[p, k] = c * akp - s * akq
                    A[q, k] = s * akp + c * akq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    akp = V[k, p]
                    akq = V[k, q]
                    V[k, p] = c * akp - s * akq
                    V[k, q] = s * akp + c * akq
    return np.diagonal(A_arr).copy(), V_arr, -1


def perplexity_search(double[:, ::1] d2, double perplexity, double tol=1e-9,
                      int max_iter=200):
    """Per-row bisection on the Gaussian precision so that each conditional
    distribution has entropy log2(perplexity).

    Returns ``(P, beta)``: row-stochastic conditional probabilities with a
    zero diagonal, and the precision found for each row.
    """
    cdef Py_ssize_t n = d2.shape[0], i, j
    cdef int it
    cdef double target = log(perplexity), beta, lo, hi, sum_p, h, dmin, pij
    P_arr = np.zeros((n, n), dtype=np.float64)
    beta_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] betas = beta_arr
    for i in range(n):
        beta = 1.0
        lo = 0.0
        hi = INFINITY
        dmin = INFINITY
        for j in range(n):
            if j != i and d2[i, j] < dmin:
                dmin = d2[i, j]
        for it in range(max_iter):
            sum_p = 0.0
            h = 0.0
            for j in range(n):
                if j == i:
                    P[i, j] = 0.0
                    continue
                pij = exp(-beta * (d2[i, j] - dmin))
                P[i, j] = pij
                sum_p += pij
                h += (d2[i, j] - dmin) * pij
            # natural-log entropy of the normalised row
            h = log(sum_p) + beta * h / sum_p
            if fabs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == INFINITY else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        for j in range(n):
            P[i, j] /= sum_p
        betas[i] = beta
    return P_arr, beta_arr


def tsne_gradient(double[:, ::1] Y, double[:, ::1] P, double exaggeration):
    """Exact t-SNE gradient and KL(P || Q) for a 2-D embedding.

    `P` is the symmetric joint distribution (without exaggeration applied).
    """
    cdef Py_ssize_t n = Y.shape[0], i, j
    cdef double dx, dy, num, z = 0.0, kl = 0.0, q, mult
    W_arr = np.empty((n, n), dtype=np.float64)
    G_arr = np.zeros((n, 2), dtype=np.float64)
    cdef double[:, ::1] W = W_arr
    cdef double[:, ::1] G = G_arr
    for i in range(n):
        W[i, i] = 0.0
        for j in range(i + 1, n):
            dx = Y[i, 0] - Y[j, 0]
            dy = Y[i, 1] - Y[j, 1]
            num = 1.0 / (1.0 + dx * dx + dy * dy)
            W[i, j] = num
            W[j, i] = num
            z += 2.0 * num
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = W[i, j] / z
            if P[i, j] > 0.0:
                kl += P[i, j] * log(P[i, j] / (q if q > 1e-300 else 1e-300))
            mult = (exaggeration * P[i, j] - q) * W[i, j]
            G[i, 0] += 4.0 * mult * (Y[i, 0] - Y[j, 0])
            G[i, 1] += 4.0 * mult * (Y[i, 1] - Y[j, 1])
    return G_arr, kl
