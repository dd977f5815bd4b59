"""ARIMAX / SARIMAX by conditional sum of squares.

The model is regression with ARIMA errors, estimated in two stages:

    y_t = c + x_t'b + u_t
    (1 - B)^d (1 - B^s)^D u_t = w_t
    phi(B) Phi(B^s) (w_t - mu) = theta(B) Theta(B^s) e_t

``mu`` is the sample mean of ``w`` when no differencing is applied and zero
otherwise. Pre-sample shocks are zero; the CSS objective sums squared
residuals from the first index where every AR lag is observed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from aeris import checkpoint, kernels

COEF_BOUND = 0.99


@dataclass(frozen=True)
class ArimaOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 1

    def __post_init__(self):
        if min(self.p, self.d, self.q, self.P, self.D, self.Q) < 0:
            raise ValueError("orders must be non-negative")
        if self.s < 1:
            raise ValueError("seasonal period must be >= 1")
        if self.s == 1 and (self.P or self.D or self.Q):
            raise ValueError("seasonal terms need s > 1")

    @property
    def n_arma(self):
        return self.p + self.q + self.P + self.Q

    @property
    def diff_steps(self):
        return [1] * self.d + [self.s] * self.D

    @property
    def max_ar_lag(self):
        return self.p + self.P * self.s

    @property
    def max_ma_lag(self):
        return self.q + self.Q * self.s

    def as_tuple(self):
        return (self.p, self.d, self.q, self.P, self.D, self.Q, self.s)


# differencing

def difference(series, d=0, D=0, s=1):
    """Apply ``(1-B)^d (1-B^s)^D``; returns the differenced series and the
    per-step heads needed to undo it."""
    x = np.asarray(series, dtype=np.float64)
    steps = [1] * d + [s] * D
    if x.size <= sum(steps):
        raise ValueError(f"series of length {x.size} too short for differencing {steps}")
    state = []
    for lag in steps:
        state.append((lag, x[:lag].copy()))
        x = x[lag:] - x[:-lag]
    return x, state


def integrate(w, state):
    """Exact inverse of :func:`difference`."""
    x = np.asarray(w, dtype=np.float64)
    for lag, head in reversed(state):
        out = np.empty(x.size + lag)
        out[:lag] = head
        for t in range(lag, out.size):
            out[t] = x[t - lag] + out[t - lag]
        x = out
    return x


def _levels(u, steps):
    levels = [np.asarray(u, dtype=np.float64)]
    for lag in steps:
        prev = levels[-1]
        levels.append(prev[lag:] - prev[:-lag])
    return levels


def _undifference_future(levels, steps, w_future):
    """Map future values of the most-differenced level back to level 0."""
    fut = np.asarray(w_future, dtype=np.float64)
    for k in range(len(steps) - 1, -1, -1):
        lag = steps[k]
        hist = levels[k]
        out = np.empty(fut.size)
        for j in range(fut.size):
            back = j - lag
            out[j] = fut[j] + (out[back] if back >= 0 else hist[hist.size + back])
        fut = out
    return fut


# lag polynomials

def _poly_mul(a, b):
    return np.convolve(a, b)


def expand_polynomials(order, ar, ma, sar, sma):
    """Return sparse (lags, coefs) for the AR and MA sides of the expanded model.

    AR coefficients ``a_l`` satisfy ``w_t - mu = sum a_l (w_{t-l} - mu) + ...``;
    MA coefficients ``m_l`` multiply ``e_{t-l}``.
    """
    s = order.s
    ar_poly = np.concatenate([[1.0], -np.asarray(ar, dtype=np.float64)])
    sar_poly = np.zeros(order.P * s + 1)
    sar_poly[0] = 1.0
    for j, c in enumerate(sar, start=1):
        sar_poly[j * s] = -c
    full_ar = _poly_mul(ar_poly, sar_poly)
    ma_poly = np.concatenate([[1.0], np.asarray(ma, dtype=np.float64)])
    sma_poly = np.zeros(order.Q * s + 1)
    sma_poly[0] = 1.0
    for j, c in enumerate(sma, start=1):
        sma_poly[j * s] = c
    full_ma = _poly_mul(ma_poly, sma_poly)
    ar_lags = np.flatnonzero(full_ar[1:] != 0) + 1
    ma_lags = np.flatnonzero(full_ma[1:] != 0) + 1
    return ar_lags, -full_ar[ar_lags], ma_lags, full_ma[ma_lags]


def _split_params(order, theta):
    i = 0
    out = []
    for n in (order.p, order.q, order.P, order.Q):
        out.append(np.asarray(theta[i:i + n], dtype=np.float64))
        i += n
    return out


def css_residuals(w, order, theta, mu=0.0):
    ar, ma, sar, sma = _split_params(order, theta)
    ar_lags, ar_c, ma_lags, ma_c = expand_polynomials(order, ar, ma, sar, sma)
    return kernels.arma_residuals(w, ar_lags, ar_c, ma_lags, ma_c, mu, order.max_ar_lag)


# optimisation

@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    history: list
    iterations: int


def nelder_mead(fn, x0, step=0.05, ftol=1e-10, xtol=1e-8, max_iter=None):
    """Plain Nelder-Mead; ``history`` holds the best value after each iteration."""
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.size
    max_iter = max_iter or 400 * max(n, 1)
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] += step
        simplex.append(v)
    simplex = np.array(simplex)
    fvals = np.array([fn(v) for v in simplex])
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        order = np.argsort(fvals, kind="mergesort")
        simplex, fvals = simplex[order], fvals[order]
        history.append(float(fvals[0]))
        if fvals[-1] - fvals[0] < ftol and np.max(np.abs(simplex[1:] - simplex[0])) < xtol:
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = fn(xr)
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = fn(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = fn(xc)
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
                fvals[1:] = [fn(v) for v in simplex[1:]]
    best = int(np.argmin(fvals))
    history.append(float(fvals[best]))
    return SimplexResult(simplex[best].copy(), float(fvals[best]), history, it)


def _hannan_rissanen(w, order):
    """Initial ARMA guesses from a long-AR residual proxy, clipped to (-0.9, 0.9)."""
    n = w.size
    s = order.s
    ar_lags = list(range(1, order.p + 1)) + [j * s for j in range(1, order.P + 1)]
    ma_lags = list(range(1, order.q + 1)) + [j * s for j in range(1, order.Q + 1)]
    k = len(ar_lags) + len(ma_lags)
    if k == 0:
        return np.zeros(0)
    if ma_lags:
        m = min(max(ar_lags + ma_lags) + 8, max(n // 4, 1))
        X = np.column_stack([w[m - l:n - l] for l in range(1, m + 1)])
        yy = w[m:]
        coef, *_ = np.linalg.lstsq(X, yy, rcond=None)
        ehat = np.zeros(n)
        ehat[m:] = yy - X @ coef
        start = m + max(ar_lags + ma_lags)
    else:
        ehat = np.zeros(n)
        start = max(ar_lags)
    if n - start <= k:
        return np.zeros(k)
    cols = [w[start - l:n - l] for l in ar_lags] + [ehat[start - l:n - l] for l in ma_lags]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), w[start:], rcond=None)
    return np.clip(coef, -0.9, 0.9)


@dataclass
class ArimaModel:
    order: ArimaOrder
    ar: np.ndarray
    ma: np.ndarray
    sar: np.ndarray
    sma: np.ndarray
    exog_coef: np.ndarray
    exog_intercept: float
    mu: float
    sigma2: float
    clamped: bool = False
    css_history: list = field(default_factory=list, repr=False)
    u_tail: np.ndarray = field(default=None, repr=False)
    e_tail: np.ndarray = field(default=None, repr=False)
    fitted: np.ndarray = field(default=None, repr=False)
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def theta(self):
        return np.concatenate([self.ar, self.ma, self.sar, self.sma])

    @property
    def n_exog(self):
        return self.exog_coef.size

    def _exog_part(self, exog, n):
        if self.n_exog == 0:
            return np.zeros(n)
        if exog is None:
            raise ValueError("model has exogenous regressors; future_exog is required")
        X = np.asarray(exog, dtype=np.float64).reshape(n, -1)
        if X.shape[1] != self.n_exog:
            raise ValueError(f"expected {self.n_exog} exogenous columns, got {X.shape[1]}")
        return self.exog_intercept + X @ self.exog_coef

    def filter(self, y, exog=None):
        """One-step residuals of the fixed-parameter model over a whole series.

        Returns ``(u, w, e)``: de-exogenised level, differenced series, residuals
        (aligned with ``w``).
        """
        y = np.asarray(y, dtype=np.float64)
        u = y - self._exog_part(exog, y.size) if self.n_exog else y.copy()
        w, _ = difference(u, self.order.d, self.order.D, self.order.s)
        e = css_residuals(w, self.order, self.theta, self.mu)
        return u, w, e

    def _forecast_w(self, w_hist, e_hist, h):
        ar_lags, ar_c, ma_lags, ma_c = expand_polynomials(self.order, self.ar, self.ma, self.sar, self.sma)
        wl = list(w_hist)
        el = list(e_hist)
        nw, ne = len(wl), len(el)
        out = []
        for j in range(h):
            v = self.mu
            for lag, c in zip(ar_lags, ar_c):
                idx = nw + j - lag
                wv = wl[idx] if idx < nw else out[idx - nw]
                v += c * (wv - self.mu)
            for lag, c in zip(ma_lags, ma_c):
                idx = ne + j - lag
                if 0 <= idx < ne:
                    v += c * el[idx]
            out.append(v)
        return np.array(out)

    def forecast(self, h, future_exog=None):
        """Forecast ``h`` steps past the end of the training series."""
        if h < 1:
            raise ValueError("h must be >= 1")
        ex = self._exog_part(future_exog, h) if self.n_exog else np.zeros(h)
        return self._forecast_from(self.u_tail, self.e_tail, h) + ex

    def _forecast_from(self, u_hist, e_hist, h):
        steps = self.order.diff_steps
        levels = _levels(u_hist, steps)
        w_future = self._forecast_w(levels[-1], e_hist, h)
        return _undifference_future(levels, steps, w_future)

    def rolling_forecast(self, y, exog, origins, h, future_exog=None):
        """Forecast ``1..h`` steps from each origin index of ``y`` using only
        data up to that origin.

        ``future_exog(origin)`` returns an ``(h, k)`` array of regressors for
        the forecast window; by default the last observed regressors are held.
        Returns an array ``(len(origins), h)``.
        """
        y = np.asarray(y, dtype=np.float64)
        exog_arr = None if exog is None else np.asarray(exog, dtype=np.float64).reshape(y.size, -1)
        u, _, e = self.filter(y, exog_arr)
        lag_total = sum(self.order.diff_steps)
        keep = lag_total + self.order.max_ar_lag + self.order.max_ma_lag + 1
        out = np.empty((len(origins), h))
        for i, t in enumerate(origins):
            t = int(t)
            lo = max(0, t + 1 - keep - lag_total)
            u_hist = u[lo:t + 1]
            e_hist = e[max(0, t + 1 - lag_total - (self.order.max_ma_lag + 1)):t + 1 - lag_total]
            fc = self._forecast_from(u_hist, e_hist, h)
            if self.n_exog:
                fx = (future_exog(t) if future_exog is not None
                      else np.repeat(exog_arr[t:t + 1], h, axis=0))
                fc = fc + self._exog_part(fx, h)
            out[i] = fc
        return out

    def to_dict(self):
        tolist = lambda a: [float(v) for v in np.asarray(a).ravel()]  # noqa: E731
        return {
            "model": "arima", "order": list(self.order.as_tuple()),
            "ar": tolist(self.ar), "ma": tolist(self.ma), "sar": tolist(self.sar), "sma": tolist(self.sma),
            "exog_coef": tolist(self.exog_coef), "exog_intercept": float(self.exog_intercept),
            "mu": float(self.mu), "sigma2": float(self.sigma2), "clamped": bool(self.clamped),
            "u_tail": tolist(self.u_tail), "e_tail": tolist(self.e_tail),
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda k: np.array(d[k], dtype=np.float64)  # noqa: E731
        return cls(ArimaOrder(*d["order"]), arr("ar"), arr("ma"), arr("sar"), arr("sma"),
                   arr("exog_coef"), d["exog_intercept"], d["mu"], d["sigma2"], d["clamped"],
                   u_tail=arr("u_tail"), e_tail=arr("e_tail"))

    def save(self, path):
        checkpoint.save(path, "arima", self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(checkpoint.load(path, "arima"))


def fit(series, exog=None, order=ArimaOrder(1, 0, 0), ftol=1e-10):
    """Two-stage CSS fit: OLS on the regressors, then ARMA on the differenced errors."""
    y = np.asarray(series, dtype=np.float64)
    if np.isnan(y).any():
        raise ValueError("series contains missing values")
    n = y.size
    if sum(order.diff_steps) >= n:
        raise ValueError("series too short for the requested differencing")
    if exog is not None:
        X = np.asarray(exog, dtype=np.float64).reshape(n, -1)
        if np.isnan(X).any():
            raise ValueError("exog contains missing values")
        A = np.column_stack([np.ones(n), X])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        c0, b = float(coef[0]), coef[1:]
        u = y - c0 - X @ b
    else:
        c0, b = 0.0, np.zeros(0)
        u = y.copy()
    w, _ = difference(u, order.d, order.D, order.s)
    mu = float(w.mean()) if not order.diff_steps else 0.0
    start = order.max_ar_lag
    if w.size - start < max(order.n_arma + 1, 2):
        raise ValueError("series too short for the requested order")

    def clamp(theta):
        return np.clip(theta, -COEF_BOUND, COEF_BOUND)

    def objective(theta):
        e = css_residuals(w, order, clamp(theta), mu)[start:]
        return float(e @ e) / e.size

    if order.n_arma:
        x0 = _hannan_rissanen(w - mu, order)
        res = nelder_mead(objective, x0, ftol=ftol)
        theta = clamp(res.x)
        clamped = bool(np.any(np.abs(res.x) >= COEF_BOUND))
        history = res.history
    else:
        theta = np.zeros(0)
        clamped = False
        history = [objective(theta)]
    e = css_residuals(w, order, theta, mu)
    sigma2 = float(np.mean(e[start:] ** 2))
    ar, ma, sar, sma = _split_params(order, theta)
    lag_total = sum(order.diff_steps)
    keep = lag_total + order.max_ar_lag + order.max_ma_lag + 1
    fitted = np.full(n, np.nan)
    fitted[lag_total + start:] = y[lag_total + start:] - e[start:]
    model = ArimaModel(order, ar, ma, sar, sma, b, c0, mu, sigma2, clamped, history,
                       u_tail=u[-keep:].copy(), e_tail=e[-(order.max_ma_lag + 1):].copy(),
                       fitted=fitted, residuals=e)
    return model


def holdout_rmse(series, exog, order, holdout=0.1):
    y = np.asarray(series, dtype=np.float64)
    n = y.size
    cut = n - max(1, int(round(holdout * n)))
    ex_train = None if exog is None else np.asarray(exog, dtype=np.float64).reshape(n, -1)[:cut]
    model = fit(y[:cut], ex_train, order)
    origins = np.arange(cut - 1, n - 1)
    # regressors at the target hour are treated as known in this one-step score
    fx = None
    if exog is not None:
        X = np.asarray(exog, dtype=np.float64).reshape(n, -1)
        fx = lambda t: X[t + 1:t + 2]  # noqa: E731
    pred = model.rolling_forecast(y, exog, origins, 1, fx)[:, 0]
    err = y[cut:] - pred
    return float(np.sqrt(np.mean(err ** 2))), model


def order_search(series, exog=None, p_range=range(3), q_range=range(3), d=1,
                 seasonal_ranges=None, s=1, holdout=0.1):
    """Grid search over ARIMA orders scored by one-step RMSE on the last
    ``holdout`` fraction. Ties prefer fewer parameters.

    ``seasonal_ranges`` is ``(P_range, D_range, Q_range)``.
    """
    P_r, D_r, Q_r = seasonal_ranges if seasonal_ranges else ([0], [0], [0])
    results = []
    for p, q, P, D, Q in itertools.product(p_range, q_range, P_r, D_r, Q_r):
        try:
            order = ArimaOrder(p, d, q, P, D, Q, s if (P or D or Q) else 1)
            rmse, _ = holdout_rmse(series, exog, order, holdout)
        except (ValueError, np.linalg.LinAlgError, FloatingPointError):
            continue
        if np.isfinite(rmse):
            results.append((rmse, order.n_arma, order.as_tuple(), order))
    if not results:
        raise RuntimeError("every candidate order failed to fit")
    results.sort(key=lambda r: r[:3])
    return results[0][3], [(r[3], r[0]) for r in results]
