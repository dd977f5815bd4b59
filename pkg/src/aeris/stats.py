"""Descriptive statistics, correlation and ADF/KPSS stationarity testing."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

ADF_CRITICAL_5PCT = -2.86  # constant-only regression
KPSS_CRITICAL_5PCT = 0.463  # level stationarity
MIN_TEST_LENGTH = 20


@dataclass(frozen=True)
class StatTestResult:
    statistic: float
    critical_5pct: float
    reject_null: bool
    lags: int = 0


@dataclass(frozen=True)
class StationarityVerdict:
    column: str
    adf: StatTestResult
    kpss: StatTestResult
    verdict: str


def describe(series):
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot describe an empty series")
    if np.isnan(x).any():
        raise ValueError("series contains missing values")
    return {"min": float(x.min()), "max": float(x.max()), "mean": float(x.mean()), "std": float(x.std())}


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson needs equal-length 1-d inputs, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(xc @ xc)
    sy = np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise ValueError("pearson correlation is undefined for a constant input")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def correlation_matrix(frame, columns=None):
    columns = frame.names if columns is None else list(columns)
    k = len(columns)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = pearson(frame[columns[i]], frame[columns[j]])
    return columns, out


def schwert_lag(n):
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(series, max_lag=None):
    """Augmented Dickey-Fuller with constant.

    Regresses the first difference on a constant, the lagged level and
    ``max_lag`` lagged differences; the statistic is the t-ratio of the
    lagged-level coefficient.
    """
    y = np.asarray(series, dtype=np.float64)
    n = y.size
    if n < MIN_TEST_LENGTH:
        raise ValueError(f"ADF needs at least {MIN_TEST_LENGTH} observations, got {n}")
    k = schwert_lag(n) if max_lag is None else int(max_lag)
    dy = np.diff(y)
    m = dy.size - k  # usable rows
    if m <= k + 2:
        raise ValueError(f"lag {k} too large for {n} observations")
    cols = [np.ones(m), y[k:-1]]
    for j in range(1, k + 1):
        cols.append(dy[k - j:-j])
    X = np.column_stack(cols)
    target = dy[k:]
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ target)
    resid = target - X @ beta
    sigma2 = resid @ resid / (m - X.shape[1])
    rinv = np.linalg.inv(r)
    var_beta1 = sigma2 * (rinv[1] @ rinv[1])
    stat = float(beta[1] / np.sqrt(var_beta1))
    return StatTestResult(stat, ADF_CRITICAL_5PCT, stat < ADF_CRITICAL_5PCT, k)


def kpss_bandwidth(n):
    return int(np.floor(4.0 * (n / 100.0) ** 0.25))


def kpss_test(series, bandwidth=None):
    """Level-stationarity KPSS with a Bartlett-kernel long-run variance."""
    y = np.asarray(series, dtype=np.float64)
    n = y.size
    if n < MIN_TEST_LENGTH:
        raise ValueError(f"KPSS needs at least {MIN_TEST_LENGTH} observations, got {n}")
    lag = kpss_bandwidth(n) if bandwidth is None else int(bandwidth)
    e = y - y.mean()
    s = np.cumsum(e)
    lrv = e @ e
    for j in range(1, lag + 1):
        lrv += 2.0 * (1.0 - j / (lag + 1.0)) * (e[j:] @ e[:-j])
    lrv /= n
    if lrv <= 0:
        raise ValueError("KPSS long-run variance is zero (constant series)")
    stat = float((s @ s) / (n * n) / lrv)
    return StatTestResult(stat, KPSS_CRITICAL_5PCT, stat > KPSS_CRITICAL_5PCT, lag)


def classify(adf_reject, kpss_reject):
    if not adf_reject:
        return "non-stationary"
    return "difference-stationary" if kpss_reject else "fully-stationary"


def stationarity_report(frame, columns=None, max_lag=None):
    columns = frame.names if columns is None else columns
    out = []
    for name in columns:
        a = adf_test(frame[name], max_lag)
        k = kpss_test(frame[name])
        out.append(StationarityVerdict(name, a, k, classify(a.reject_null, k.reject_null)))
    return out


def histogram(series, bins=30):
    counts, edges = np.histogram(np.asarray(series, dtype=np.float64), bins=bins)
    return counts, edges


# CSV emitters used by `aeris analyze`

def _num(v):
    return f"{v:.6f}"


def write_stats_csv(frame, path, columns=None):
    columns = frame.names if columns is None else columns
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column", "min", "max", "mean", "std"])
        for c in columns:
            d = describe(frame[c])
            w.writerow([c] + [_num(d[k]) for k in ("min", "max", "mean", "std")])


def write_correlation_csv(frame, path, columns=None):
    names, mat = correlation_matrix(frame, columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column"] + names)
        for name, row in zip(names, mat):
            w.writerow([name] + [_num(v) for v in row])


def write_stationarity_csv(verdicts, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column", "adf_stat", "kpss_stat", "verdict"])
        for v in verdicts:
            w.writerow([v.column, _num(v.adf.statistic), _num(v.kpss.statistic), v.verdict])


def write_histogram_csv(series, path, bins=30):
    counts, edges = histogram(series, bins)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([_num(lo), _num(hi), int(c)])
