"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and results match the compiled module; only speed differs.
"""
import numpy as np


def ewma_forward(x, alpha):
    x = np.asarray(x, dtype=np.float64)
    observed = np.flatnonzero(~np.isnan(x))
    if observed.size == 0:
        raise ValueError("series has no observed values")
    first = observed[0]
    out = np.empty(x.shape[0])
    s = x[first]
    out[:first] = s
    for t in range(first, x.shape[0]):
        v = x[t]
        if v == v:
            s = alpha * v + (1.0 - alpha) * s
        out[t] = s
    return out


def arma_residuals(w, ar_lags, ar_coefs, ma_lags, ma_coefs, mu, start):
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[0]
    e = np.zeros(n)
    ar = list(zip(ar_lags.tolist(), ar_coefs.tolist()))
    ma = list(zip(ma_lags.tolist(), ma_coefs.tolist()))
    wl = w.tolist()
    el = e.tolist()
    for t in range(start, n):
        v = wl[t] - mu
        for lag, c in ar:
            v -= c * (wl[t - lag] - mu)
        for lag, c in ma:
            if t - lag >= 0:
                v -= c * el[t - lag]
        el[t] = v
    return np.array(el)


def best_split(X, y, features, min_leaf):
    n = X.shape[0]
    if n < 2 * min_leaf:
        return -1, 0.0, 0.0
    best = None
    idx = np.arange(1, n)  # left-side sizes
    valid_size = (idx >= min_leaf) & (n - idx >= min_leaf)
    for f in features:
        order = np.argsort(X[:, f], kind="mergesort")
        xs = X[order, f]
        ys = y[order]
        cs = np.cumsum(ys)
        cq = np.cumsum(ys * ys)
        tot_s, tot_q = cs[-1], cq[-1]
        parent = tot_q - tot_s * tot_s / n
        sl, ql = cs[:-1], cq[:-1]
        sr, qr = tot_s - sl, tot_q - ql
        sse = (ql - sl * sl / idx) + (qr - sr * sr / (n - idx))
        ok = valid_size & (xs[:-1] < xs[1:]) & (sse < parent)
        if best is not None:
            ok &= sse < best[2]
        if not ok.any():
            continue
        cand = np.flatnonzero(ok)
        i = cand[np.argmin(sse[cand])]
        thr = 0.5 * (xs[i] + xs[i + 1])
        if thr >= xs[i + 1]:
            thr = xs[i]
        best = (int(f), float(thr), float(sse[i]))
    if best is None:
        return -1, 0.0, 0.0
    return best


def cd_sweep(XT, r, beta, col_sq, l1, l2):
    p, n = XT.shape
    max_change = 0.0
    for j in range(p):
        old = beta[j]
        rho = XT[j] @ r / n + col_sq[j] * old
        z = np.sign(rho) * max(abs(rho) - l1, 0.0)
        denom = col_sq[j] + l2
        new = z / denom if denom > 0 else 0.0
        delta = new - old
        if delta != 0.0:
            r -= XT[j] * delta
            beta[j] = new
        max_change = max(max_change, abs(delta))
    return max_change
