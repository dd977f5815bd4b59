"""Hourly air-quality frames: parsing, cleaning, feature engineering, windows."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field

import numpy as np

from aeris import kernels

TIMESTAMP = "timestamp"
POLLUTANTS = ("NO2", "SO2", "CO", "O3", "PM10", "PM2.5")
SCHEMA = ("NO2", "SO2", "CO", "O3", "wind_direction", "temperature", "wind_speed", "PM10", "PM2.5")
TARGET = "PM2.5"
DEFAULT_LAGS = {"PM2.5": list(range(1, 25)), "NO2": [1, 2, 3], "SO2": [1, 2, 3],
                "O3": [1, 2, 3], "CO": [1, 2, 3]}

_TS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2}) (\d{2})$")
_HOUR = np.timedelta64(1, "h")


class ParseError(ValueError):
    pass


class TimeSeriesFrame:
    """Hourly-indexed columns of float64 where NaN marks a missing cell.

    Arrays are read-only; every operation returns a new frame.
    ``unusable_prefix`` counts leading rows that lag features leave incomplete.
    """

    def __init__(self, timestamps, columns, unusable_prefix=0):
        ts = np.asarray(timestamps, dtype="datetime64[h]").copy()
        n = ts.shape[0]
        if n > 1 and not np.all(np.diff(ts) == _HOUR):
            raise ValueError("timestamps must be strictly increasing with a 1-hour step")
        cols = {}
        for name, values in columns.items():
            arr = np.array(values, dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError(f"column {name!r} has length {arr.shape[0]}, expected {n}")
            arr.setflags(write=False)
            cols[name] = arr
        ts.setflags(write=False)
        self.timestamps = ts
        self.columns = cols
        self.unusable_prefix = int(unusable_prefix)

    @property
    def n_rows(self):
        return self.timestamps.shape[0]

    def __len__(self):
        return self.n_rows

    @property
    def names(self):
        return list(self.columns)

    def __getitem__(self, name):
        return self.columns[name]

    def mask(self, name):
        """Boolean array, True where the cell is missing."""
        return np.isnan(self.columns[name])

    def missing_count(self):
        return {k: int(np.isnan(v).sum()) for k, v in self.columns.items()}

    def replace(self, columns=None, unusable_prefix=None):
        merged = dict(self.columns)
        merged.update(columns or {})
        prefix = self.unusable_prefix if unusable_prefix is None else unusable_prefix
        return TimeSeriesFrame(self.timestamps, merged, prefix)

    def select(self, names):
        return TimeSeriesFrame(self.timestamps, {k: self.columns[k] for k in names}, self.unusable_prefix)

    def slice_rows(self, start, stop):
        sub = {k: v[start:stop] for k, v in self.columns.items()}
        prefix = max(0, self.unusable_prefix - start)
        return TimeSeriesFrame(self.timestamps[start:stop], sub, prefix)

    def matrix(self, names=None):
        names = self.names if names is None else list(names)
        return np.column_stack([self.columns[k] for k in names]) if names else np.empty((self.n_rows, 0))

    def equals(self, other):
        if self.names != other.names or not np.array_equal(self.timestamps, other.timestamps):
            return False
        return all(np.array_equal(self[k], other[k], equal_nan=True) for k in self.names)


def _parse_float(text):
    text = text.strip().strip('"').strip()
    if text == "" or text.lower() in ("nan", "na"):
        return np.nan
    return float(text.replace(",", "."))


def _parse_timestamp(text, row):
    m = _TS_RE.match(text.strip().strip('"'))
    if not m:
        raise ParseError(f"row {row}: malformed timestamp {text!r} (expected 'yyyy-mm-dd hh')")
    y, mo, d, h = m.groups()
    try:
        return np.datetime64(f"{y}-{mo}-{d}T{h}", "h")
    except ValueError:
        raise ParseError(f"row {row}: invalid timestamp {text!r}") from None


def parse_dataset(path, schema=SCHEMA, delimiter=";"):
    """Read a ``;``-separated hourly CSV into a gap-free frame.

    Decimal commas are accepted, blanks become missing, rows are sorted and
    absent hours are inserted as all-missing rows.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    return parse_text(text, schema, delimiter)


def parse_text(text, schema=SCHEMA, delimiter=";"):
    reader = csv.reader(io.StringIO(text), delimiter=delimiter, quotechar='"')
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file") from None
    if not header or header[0] != TIMESTAMP:
        raise ParseError(f"first column must be {TIMESTAMP!r}, got {header[:1]}")
    names = header[1:]
    unknown = [h for h in names if h not in schema]
    if unknown:
        raise ParseError(f"unknown column(s) {unknown}; schema is {list(schema)}")
    absent = [s for s in schema if s not in names]
    if absent:
        raise ParseError(f"missing column(s) {absent}")
    if len(set(names)) != len(names):
        raise ParseError("duplicate column names in header")

    stamps, rows = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} fields, got {len(rec)}")
        stamps.append(_parse_timestamp(rec[0], lineno))
        try:
            rows.append([_parse_float(v) for v in rec[1:]])
        except ValueError as exc:
            raise ParseError(f"row {lineno}: {exc}") from None
    if not stamps:
        raise ParseError("no data rows")
    ts = np.array(stamps, dtype="datetime64[h]")
    order = np.argsort(ts, kind="mergesort")
    ts = ts[order]
    dup = np.flatnonzero(np.diff(ts) == np.timedelta64(0, "h"))
    if dup.size:
        raise ParseError(f"duplicate timestamp {ts[dup[0]]}")
    values = np.array(rows, dtype=np.float64)[order]
    full = np.arange(ts[0], ts[-1] + _HOUR, _HOUR)
    pos = ((ts - ts[0]) // _HOUR).astype(np.int64)
    cols = {}
    for name in schema:
        col = np.full(full.shape[0], np.nan)
        col[pos] = values[:, names.index(name)]
        cols[name] = col
    return TimeSeriesFrame(full, cols)


def _fmt(v):
    return "" if np.isnan(v) else repr(float(v))


def write_csv(frame, path, delimiter=";", allow_missing=True):
    """Write a frame with decimal dots and ``yyyy-mm-dd hh`` timestamps."""
    if not allow_missing:
        bad = [k for k, v in frame.missing_count().items() if v]
        if bad:
            raise ValueError(f"cleaned output may not contain missing cells (columns {bad})")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([TIMESTAMP] + frame.names)
        stamps = [str(t).replace("T", " ") for t in frame.timestamps]
        mat = frame.matrix()
        for i, s in enumerate(stamps):
            w.writerow([s] + [_fmt(v) for v in mat[i]])


# cleaning

@dataclass
class CleaningConfig:
    ewma_span: int = 10
    outlier_threshold: float = 5.0
    clamp_columns: tuple = POLLUTANTS
    outlier_columns: tuple = POLLUTANTS
    threshold_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ewma_span < 1:
            raise ValueError("ewma_span must be >= 1")
        if not self.outlier_threshold > 0:
            raise ValueError("outlier_threshold must be > 0")
        for k, v in self.threshold_overrides.items():
            if not v > 0:
                raise ValueError(f"threshold override for {k!r} must be > 0")

    def threshold_for(self, column):
        return self.threshold_overrides.get(column, self.outlier_threshold)


def fbewma(series, span):
    """Average of forward and backward EWMA with ``alpha = 2 / (span + 1)``.

    Each pass is seeded at its first observed value and carries its state
    across missing cells.
    """
    if span < 1:
        raise ValueError("span must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("series is empty")
    if np.isnan(x).all():
        raise ValueError("series has no observed values")
    alpha = 2.0 / (span + 1.0)
    fwd = kernels.ewma_forward(x, alpha)
    bwd = kernels.ewma_forward(x[::-1], alpha)[::-1]
    return 0.5 * (fwd + bwd)


def remove_outliers(frame, config):
    """Blank cells deviating from their FBEWMA by more than the threshold.

    Returns the new frame and the per-column replacement counts.
    """
    out, counts = {}, {}
    for name in config.outlier_columns:
        if name not in frame.columns:
            continue
        x = frame[name]
        if np.isnan(x).all():
            counts[name] = 0
            continue
        smooth = fbewma(x, config.ewma_span)
        with np.errstate(invalid="ignore"):
            hit = np.abs(x - smooth) > config.threshold_for(name)
        y = x.copy()
        y[hit] = np.nan
        out[name] = y
        counts[name] = int(hit.sum())
    return frame.replace(out), counts


def interpolate_linear(frame):
    """Fill interior gaps linearly and extend edges with the nearest observation.

    A single observation fills its whole column.
    """
    out = {}
    idx = np.arange(frame.n_rows, dtype=np.float64)
    for name, x in frame.columns.items():
        obs = ~np.isnan(x)
        if obs.all():
            continue
        if not obs.any():
            raise ValueError(f"column {name!r} has no observed values")
        out[name] = np.interp(idx, idx[obs], x[obs])
    return frame.replace(out)


def clamp_negatives(frame, columns=POLLUTANTS):
    out = {}
    for name in columns:
        if name not in frame.columns:
            raise KeyError(f"no column {name!r}")
        x = frame[name]
        if np.any(x < 0):
            out[name] = np.where(x < 0, 0.0, x)
    return frame.replace(out)


def clean(frame, config=None):
    """Outlier removal, interpolation and clamping in sequence."""
    config = config or CleaningConfig()
    cleaned, counts = remove_outliers(frame, config)
    cleaned = interpolate_linear(cleaned)
    cleaned = clamp_negatives(cleaned, [c for c in config.clamp_columns if c in cleaned.columns])
    return cleaned, counts


# features

def add_lag_features(frame, spec=None):
    spec = DEFAULT_LAGS if spec is None else spec
    out = {}
    max_lag = 0
    for name, lags in spec.items():
        x = frame[name]
        for k in lags:
            k = int(k)
            if k < 1:
                raise ValueError(f"lag must be >= 1, got {k}")
            if k >= frame.n_rows:
                raise ValueError(f"lag {k} is not shorter than the frame ({frame.n_rows} rows)")
            shifted = np.full(frame.n_rows, np.nan)
            shifted[k:] = x[:-k]
            out[f"{name}_lag{k}"] = shifted
            max_lag = max(max_lag, k)
    return frame.replace(out, unusable_prefix=max(frame.unusable_prefix, max_lag))


_SEASON_OF_MONTH = np.array([0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0])  # Jan..Dec


def add_calendar_features(frame):
    """weekday (Monday=0), weekend flag, meteorological season (winter=0 .. autumn=3)."""
    days = frame.timestamps.astype("datetime64[D]").astype(np.int64)
    weekday = (days + 3) % 7  # 1970-01-01 was a Thursday
    months = frame.timestamps.astype("datetime64[M]").astype(np.int64) % 12
    return frame.replace({
        "weekday": weekday.astype(np.float64),
        "weekend": (weekday >= 5).astype(np.float64),
        "season": _SEASON_OF_MONTH[months].astype(np.float64),
    })


class MinMaxScaler:
    """Per-column min/max scaling to [0, 1], fitted on training rows only."""

    def __init__(self, mins=None, maxs=None):
        self.mins = dict(mins) if mins else None
        self.maxs = dict(maxs) if maxs else None

    @property
    def fitted(self):
        return self.mins is not None

    def fit(self, frame, columns=None):
        columns = frame.names if columns is None else columns
        self.mins = {c: float(np.nanmin(frame[c])) for c in columns}
        self.maxs = {c: float(np.nanmax(frame[c])) for c in columns}
        return self

    def _check(self, name):
        if not self.fitted:
            raise RuntimeError("scaler used before fit")
        if name not in self.mins:
            raise KeyError(f"scaler has no statistics for column {name!r}")

    def transform_column(self, name, values):
        self._check(name)
        lo, hi = self.mins[name], self.maxs[name]
        values = np.asarray(values, dtype=np.float64)
        if hi == lo:
            return np.where(np.isnan(values), np.nan, 0.0)
        return (values - lo) / (hi - lo)

    def inverse_column(self, name, values):
        self._check(name)
        lo, hi = self.mins[name], self.maxs[name]
        return lo + np.asarray(values, dtype=np.float64) * (hi - lo)

    def transform(self, frame):
        if not self.fitted:
            raise RuntimeError("scaler used before fit")
        return frame.replace({c: self.transform_column(c, frame[c]) for c in frame.names if c in self.mins})

    def inverse(self, frame):
        if not self.fitted:
            raise RuntimeError("scaler used before fit")
        return frame.replace({c: self.inverse_column(c, frame[c]) for c in frame.names if c in self.mins})

    def to_dict(self):
        return {"mins": self.mins, "maxs": self.maxs}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mins"], d["maxs"])


def minmax_scaler(train_frame, columns=None):
    return MinMaxScaler().fit(train_frame, columns)


def chronological_split(frame, ratio=0.8):
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    cut = int(np.floor(ratio * frame.n_rows))
    return frame.slice_rows(0, cut), frame.slice_rows(cut, frame.n_rows)


@dataclass
class SupervisedWindowSet:
    X: np.ndarray
    y: np.ndarray
    horizons: list
    scaler: MinMaxScaler | None
    feature_names: list
    origins: np.ndarray  # timestamp of the latest feature row per sample
    mode: str
    target: str = TARGET

    @property
    def n_samples(self):
        return self.y.shape[0]

    def subset(self, idx):
        return SupervisedWindowSet(self.X[idx], self.y[idx], self.horizons, self.scaler,
                                   self.feature_names, self.origins[idx], self.mode, self.target)


def make_windows(frame, lookback, horizons, mode="sequence", target=TARGET, columns=None,
                 scaler=None, origin_index=None):
    """Pair lookback windows (or flattened feature rows) with multi-horizon targets.

    Sample ``i`` ends at row ``t_i`` and targets ``target[t_i + h]`` for each
    horizon. If ``scaler`` is given the frame is scaled with it first.
    ``origin_index`` restricts samples to the given end rows.
    """
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    horizons = [int(h) for h in horizons]
    if not horizons or min(horizons) < 1:
        raise ValueError("horizons must be positive")
    if mode not in ("tabular", "sequence"):
        raise ValueError(f"unknown mode {mode!r}")
    columns = frame.names if columns is None else list(columns)
    if scaler is not None:
        frame = scaler.transform(frame)
    hmax = max(horizons)
    n = frame.n_rows
    first = max(lookback - 1, frame.unusable_prefix)
    last = n - 1 - hmax
    if last < first:
        raise ValueError(f"insufficient rows: {n} rows for lookback {lookback} and horizon {hmax}")
    if origin_index is None:
        ends = np.arange(first, last + 1)
    else:
        ends = np.asarray(origin_index, dtype=np.int64)
        if ends.size and (ends.min() < first or ends.max() > last):
            raise ValueError("requested origins fall outside the usable range")
    data = frame.matrix(columns)
    tgt = frame[target]
    win = np.lib.stride_tricks.sliding_window_view(data, lookback, axis=0)  # (n-L+1, C, L)
    X = np.ascontiguousarray(np.swapaxes(win[ends - lookback + 1], 1, 2))  # (S, L, C)
    if mode == "tabular":
        X = X.reshape(X.shape[0], -1)
        if lookback == 1:
            names = columns
        else:
            names = [f"{c}@t-{lookback - 1 - j}" for j in range(lookback) for c in columns]
    else:
        names = columns
    y = np.column_stack([tgt[ends + h] for h in horizons]) if ends.size else np.empty((0, len(horizons)))
    if np.isnan(X).any() or np.isnan(y).any():
        raise ValueError("windows contain missing values; clean the frame first")
    return SupervisedWindowSet(X, y, horizons, scaler, names, frame.timestamps[ends], mode, target)
