"""Forecast metrics, the multi-horizon evaluation harness and report rendering."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("baseline", "statistical", "linear", "tree", "feedforward", "recurrent",
            "convolutional", "attention")
UNDEFINED = "NA"


def metrics(y_true, y_pred):
    """Return ``(mae, rmse, r2)``; ``r2`` is NaN when ``y_true`` is constant."""
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise ValueError(f"need equal nonzero lengths, got {y_true.size} and {y_pred.size}")
    e = y_true - y_pred
    mae = float(np.mean(np.abs(e)))
    rmse = float(np.sqrt(np.mean(e * e)))
    dev = y_true - y_true.mean()
    ss_tot = float(dev @ dev)
    r2 = 1.0 - float(e @ e) / ss_tot if ss_tot > 0 else math.nan
    return mae, rmse, r2


@dataclass(frozen=True)
class MetricsRecord:
    model: str
    horizon: int
    mae: float
    rmse: float
    r2: float
    n_test: int
    family: str = "baseline"


@dataclass
class MetricsTable:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, record):
        if any(r.model == record.model and r.horizon == record.horizon for r in self.records):
            raise ValueError(f"duplicate record for {record.model!r} at {record.horizon}h")
        self.records.append(record)

    def get(self, model, horizon):
        for r in self.records:
            if r.model == model and r.horizon == horizon:
                return r
        raise KeyError((model, horizon))

    @property
    def horizons(self):
        return sorted({r.horizon for r in self.records})

    def models(self):
        """Model names in report order: family, then first appearance."""
        seen = []
        for r in self.records:
            if r.model not in [m for m, _ in seen]:
                seen.append((r.model, r.family))
        rank = {f: i for i, f in enumerate(FAMILIES)}
        return [m for m, f in sorted(seen, key=lambda mf: rank.get(mf[1], len(FAMILIES)))]

    def family(self, model):
        return next(r.family for r in self.records if r.model == model)


class Forecaster:
    """Interface for the harness: ``predict(origins, horizons)`` returns
    forecasts in original units, shape ``(len(origins), len(horizons))``."""

    name = "model"
    family = "baseline"
    horizons = None  # None: any horizon

    def check_horizons(self, horizons):
        if self.horizons is not None:
            missing = [h for h in horizons if h not in self.horizons]
            if missing:
                raise ValueError(f"{self.name}: no output head for horizon(s) {missing} "
                                 f"(heads: {list(self.horizons)})")

    def predict(self, origins, horizons):
        raise NotImplementedError


class Persistence(Forecaster):
    """Forecast equals the last observed target value."""

    name = "persistence"
    family = "baseline"

    def __init__(self, target_values):
        self.target = np.asarray(target_values, dtype=np.float64)

    def predict(self, origins, horizons):
        return np.repeat(self.target[origins][:, None], len(horizons), axis=1)


def evaluate_all(forecasters, target_values, origins, horizons=(1, 2, 4, 8)):
    """Score every forecaster on the same origins (row indices of the last
    observation). A persistence baseline is inserted first if absent."""
    y = np.asarray(target_values, dtype=np.float64)
    origins = np.asarray(origins, dtype=np.int64)
    horizons = [int(h) for h in horizons]
    if origins.size == 0:
        raise ValueError("no evaluation origins")
    if origins.max() + max(horizons) >= y.size:
        raise ValueError("origins leave no room for the longest horizon")
    forecasters = list(forecasters)
    if not any(isinstance(f, Persistence) for f in forecasters):
        forecasters.insert(0, Persistence(y))
    for f in forecasters:
        f.check_horizons(horizons)
    table = MetricsTable()
    for f in forecasters:
        pred = np.asarray(f.predict(origins, horizons), dtype=np.float64)
        if pred.shape != (origins.size, len(horizons)):
            raise ValueError(f"{f.name}: prediction shape {pred.shape} != {(origins.size, len(horizons))}")
        for j, h in enumerate(horizons):
            mae, rmse, r2 = metrics(y[origins + h], pred[:, j])
            table.add(MetricsRecord(f.name, h, mae, rmse, r2, int(origins.size), f.family))
    return table


def _num(v):
    return UNDEFINED if math.isnan(v) else f"{v:.6f}"


def _best(table, horizon, metric):
    vals = [getattr(r, metric) for r in table.records if r.horizon == horizon]
    vals = [v for v in vals if not math.isnan(v)]
    if not vals:
        return None
    return max(vals) if metric == "r2" else min(vals)


def render_report(table, format="csv"):
    """Render the table as long-format CSV or a markdown grid with one column block per horizon.

    In markdown the best value per column (lowest MAE/RMSE, highest R2) is
    bold.
    """
    if not table.records:
        raise ValueError("empty metrics table")
    models = table.models()
    if format == "csv":
        buf = io.StringIO()
        buf.write("model,horizon,mae,rmse,r2,n\n")
        for m in models:
            for h in table.horizons:
                try:
                    r = table.get(m, h)
                except KeyError:
                    continue
                buf.write(f"{m},{h},{_num(r.mae)},{_num(r.rmse)},{_num(r.r2)},{r.n_test}\n")
        return buf.getvalue()
    if format not in ("markdown", "md"):
        raise ValueError(f"unknown report format {format!r}")
    hs = table.horizons
    best = {(h, k): _best(table, h, k) for h in hs for k in ("mae", "rmse", "r2")}
    head = ["Family", "Model"] + [f"{h}h {k}" for h in hs for k in ("MAE", "RMSE", "R2")]
    lines = ["| " + " | ".join(head) + " |", "|" + "|".join(["---"] * 2 + ["---:"] * (3 * len(hs))) + "|"]
    for m in models:
        cells = [table.family(m), m]
        for h in hs:
            try:
                r = table.get(m, h)
            except KeyError:
                cells += [""] * 3
                continue
            for k in ("mae", "rmse", "r2"):
                v = getattr(r, k)
                s = UNDEFINED if math.isnan(v) else f"{v:.3f}"
                if best[(h, k)] is not None and not math.isnan(v) and v == best[(h, k)]:
                    s = f"**{s}**"
                cells.append(s)
        lines.append("| " + " | ".join(cells) + " |")
    n = table.records[0].n_test
    lines.append("")
    lines.append(f"Test origins: {n}. Best value per column in bold.")
    for k, v in sorted(table.metadata.items()):
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"
