# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors ``aeris._fallback`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport isnan, fabs

cnp.import_array()


def ewma_forward(const double[::1] x, double alpha):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t t, first = -1
    cdef double s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for t in range(n):
        if not isnan(x[t]):
            first = t
            break
    if first < 0:
        raise ValueError("series has no observed values")
    s = x[first]
    for t in range(first):
        o[t] = s
    for t in range(first, n):
        if not isnan(x[t]):
            s = alpha * x[t] + (1.0 - alpha) * s
        o[t] = s
    return out


def arma_residuals(const double[::1] w, const long[::1] ar_lags,
                   const double[::1] ar_coefs, const long[::1] ma_lags,
                   const double[::1] ma_coefs, double mu, Py_ssize_t start):
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t na = ar_lags.shape[0], nm = ma_lags.shape[0]
    cdef Py_ssize_t t, i, lag
    cdef double v
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] e = out
    for t in range(start, n):
        v = w[t] - mu
        for i in range(na):
            lag = ar_lags[i]
            v -= ar_coefs[i] * (w[t - lag] - mu)
        for i in range(nm):
            lag = ma_lags[i]
            if t - lag >= 0:
                v -= ma_coefs[i] * e[t - lag]
        e[t] = v
    return out


def best_split(const double[:, ::1] X, const double[::1] y,
               const long[::1] features, Py_ssize_t min_leaf):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t k, i, f, best_f = -1
    cdef double best_sse = 0.0, best_thr = 0.0
    cdef double tot_s, tot_q, sl, ql, sr, qr, sse, thr, parent
    cdef double[::1] xs
    cdef double[::1] ys
    cdef bint have = False
    if n < 2 * min_leaf:
        return -1, 0.0, 0.0
    for k in range(features.shape[0]):
        f = features[k]
        order = np.argsort(np.asarray(X[:, f]), kind="mergesort")
        xs = np.ascontiguousarray(np.asarray(X[:, f])[order])
        ys = np.ascontiguousarray(np.asarray(y)[order])
        tot_s = 0.0
        tot_q = 0.0
        for i in range(n):
            tot_s += ys[i]
            tot_q += ys[i] * ys[i]
        parent = tot_q - tot_s * tot_s / n
        sl = 0.0
        ql = 0.0
        for i in range(n - 1):
            sl += ys[i]
            ql += ys[i] * ys[i]
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            if not xs[i] < xs[i + 1]:
                continue
            sr = tot_s - sl
            qr = tot_q - ql
            sse = (ql - sl * sl / (i + 1)) + (qr - sr * sr / (n - i - 1))
            if sse < parent and (not have or sse < best_sse):
                thr = 0.5 * (xs[i] + xs[i + 1])
                if thr >= xs[i + 1]:
                    thr = xs[i]
                best_sse = sse
                best_thr = thr
                best_f = f
                have = True
    if not have:
        return -1, 0.0, 0.0
    return best_f, best_thr, best_sse


def cd_sweep(const double[:, ::1] XT, double[::1] r, double[::1] beta,
             const double[::1] col_sq, double l1, double l2):
    """One cyclic coordinate-descent pass. ``XT`` is the transposed design."""
    cdef Py_ssize_t p = XT.shape[0], n = XT.shape[1]
    cdef Py_ssize_t j, i
    cdef double rho, old, new, z, delta, max_change = 0.0
    for j in range(p):
        old = beta[j]
        rho = 0.0
        for i in range(n):
            rho += XT[j, i] * r[i]
        rho = rho / n + col_sq[j] * old
        if rho > l1:
            z = rho - l1
        elif rho < -l1:
            z = rho + l1
        else:
            z = 0.0
        new = z / (col_sq[j] + l2) if col_sq[j] + l2 > 0 else 0.0
        delta = new - old
        if delta != 0.0:
            for i in range(n):
                r[i] -= XT[j, i] * delta
            beta[j] = new
        if fabs(delta) > max_change:
            max_change = fabs(delta)
    return max_change
