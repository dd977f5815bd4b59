import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeris import eval as ev
from aeris import pipeline
from aeris.data import MinMaxScaler
from aeris.neural import ModelSpec, build_model
from aeris.neural import train as TR
from aeris.numcore import SeededRng


def ar1(phi, n, seed, level=30.0):
    e = SeededRng(seed).normal(size=n)
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x + level


class Fixed(ev.Forecaster):
    def __init__(self, name, fn, family="linear", horizons=None):
        self.name, self.fn, self.family, self.horizons = name, fn, family, horizons

    def predict(self, origins, horizons):
        return np.column_stack([self.fn(origins, h) for h in horizons])


# metrics

def test_perfect_predictions():
    y = np.array([1.0, 4.0, 2.0, 8.0])
    assert ev.metrics(y, y) == (0.0, 0.0, 1.0)


def test_mean_prediction_has_zero_r2():
    y = np.array([1.0, 4.0, 2.0, 8.0])
    assert ev.metrics(y, np.full(4, y.mean()))[2] == pytest.approx(0.0, abs=1e-15)


def test_metrics_by_hand():
    mae, rmse, r2 = ev.metrics([1.0, 2.0, 3.0], [1.0, 2.0, 5.0])
    assert mae == pytest.approx(2 / 3) and rmse == pytest.approx(math.sqrt(4 / 3))
    assert r2 == pytest.approx(1 - 4 / 2)


def test_constant_truth_gives_undefined_r2():
    mae, rmse, r2 = ev.metrics(np.full(5, 3.0), np.arange(5.0))
    assert math.isnan(r2) and mae == pytest.approx(1.4)


def test_metrics_reject_bad_lengths():
    with pytest.raises(ValueError):
        ev.metrics([], [])
    with pytest.raises(ValueError):
        ev.metrics([1.0, 2.0], [1.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10_000))
def test_metric_invariants(n, seed):
    rng = SeededRng(seed)
    y, p = rng.normal(size=n) * 5, rng.normal(size=n) * 5
    mae, rmse, r2 = ev.metrics(y, p)
    assert 0 <= mae <= rmse + 1e-12 and r2 <= 1.0
    perm = rng.permutation(n)
    assert np.allclose(ev.metrics(y[perm], p[perm]), (mae, rmse, r2), rtol=1e-12)


# harness

def test_persistence_row_zero_and_identical_twin():
    y = ar1(0.8, 300, seed=1)
    twin = Fixed("twin", lambda o, h: y[o])
    table = ev.evaluate_all([twin], y, np.arange(200, 290))
    assert table.records[0].model == "persistence" and table.models()[0] == "persistence"
    for h in (1, 2, 4, 8):
        a, b = table.get("persistence", h), table.get("twin", h)
        assert (a.mae, a.rmse, a.r2) == (b.mae, b.rmse, b.r2)


def test_persistence_not_duplicated():
    y = ar1(0.8, 100, seed=2)
    table = ev.evaluate_all([ev.Persistence(y)], y, np.arange(50, 90))
    assert table.models() == ["persistence"] and len(table.records) == 4


def test_persistence_beats_mean_on_autocorrelated_series():
    y = ar1(0.9, 2000, seed=3)
    origins = np.arange(1000, 1990)
    mean = Fixed("mean", lambda o, h: np.full(o.size, y[:1000].mean()))
    table = ev.evaluate_all([mean], y, origins)
    for h in (1, 2, 4, 8):
        assert table.get("persistence", h).r2 > table.get("mean", h).r2


def test_missing_head_rejected():
    y = ar1(0.5, 100, seed=4)
    headless = Fixed("ff", lambda o, h: y[o], horizons=[1, 2, 4])
    with pytest.raises(ValueError, match=r"\[8\]"):
        ev.evaluate_all([headless], y, np.arange(50, 90))


def test_origins_must_leave_room():
    y = ar1(0.5, 100, seed=5)
    with pytest.raises(ValueError):
        ev.evaluate_all([], y, np.arange(50, 95))


def test_duplicate_record_rejected():
    t = ev.MetricsTable()
    t.add(ev.MetricsRecord("a", 1, 1.0, 1.0, 0.5, 10))
    with pytest.raises(ValueError):
        t.add(ev.MetricsRecord("a", 1, 2.0, 2.0, 0.1, 10))


def test_metrics_in_original_units():
    lo, hi = 5.0, 85.0
    scaler = MinMaxScaler({"PM2.5": lo}, {"PM2.5": hi})
    model = build_model(ModelSpec("mlp", horizons=(1, 2, 4, 8)), 3)
    tm = TR.TrainedModel(model, scaler, "PM2.5")
    X = SeededRng(6).uniform(size=(40, 3))
    y_scaled = SeededRng(7).uniform(size=48)
    y = lo + y_scaled * (hi - lo)
    origins = np.arange(40)

    class Net(ev.Forecaster):
        name, family, horizons = "net", "feedforward", [1, 2, 4, 8]

        def predict(self, o, hs):
            return TR.predict(tm, X[o])

    table = ev.evaluate_all([Net()], y, origins)
    raw = model(X).data
    for j, h in enumerate((1, 2, 4, 8)):
        mae_s, rmse_s, r2_s = ev.metrics(y_scaled[origins + h], raw[:, j])
        r = table.get("net", h)
        assert r.mae == pytest.approx(mae_s * (hi - lo), rel=1e-12)
        assert r.rmse == pytest.approx(rmse_s * (hi - lo), rel=1e-12)
        assert r.r2 == pytest.approx(r2_s, rel=1e-9)


# rendering

def sample_table():
    t = ev.MetricsTable(metadata={"Tabular strategy": "direct"})
    rows = [("gru", "recurrent", 1, 0.5, 0.7, 0.95), ("persistence", "baseline", 1, 0.7, 0.9, 0.90),
            ("ridge", "linear", 1, 0.6, 0.8, 0.93), ("gru", "recurrent", 2, 0.8, 1.0, 0.9),
            ("persistence", "baseline", 2, 1.0, 1.3, 0.8), ("ridge", "linear", 2, 0.9, 1.1, math.nan)]
    for m, f, h, a, b, c in rows:
        t.add(ev.MetricsRecord(m, h, a, b, c, 50, f))
    return t


def test_family_order_persistence_first():
    assert sample_table().models() == ["persistence", "ridge", "gru"]


def test_csv_layout():
    lines = ev.render_report(sample_table(), "csv").splitlines()
    assert lines[0] == "model,horizon,mae,rmse,r2,n"
    assert lines[1] == "persistence,1,0.700000,0.900000,0.900000,50"
    assert lines[4] == "ridge,2,0.900000,1.100000,NA,50"
    assert len(lines) == 7


def test_one_model_one_horizon():
    t = ev.MetricsTable()
    t.add(ev.MetricsRecord("persistence", 1, 1.0, 2.0, 0.5, 3))
    md = ev.render_report(t, "markdown").splitlines()
    rows = [l for l in md if l.startswith("| ") and "---" not in l]
    assert len(rows) == 2 and rows[0].count("|") - 1 == 2 + 3


def test_markdown_best_flags():
    md = ev.render_report(sample_table(), "markdown")
    gru = next(l for l in md.splitlines() if "| gru |" in l)
    assert gru.count("**") == 12  # best in all six columns
    ridge = next(l for l in md.splitlines() if "| ridge |" in l)
    assert "**" not in ridge and "NA" in ridge


def test_rendering_deterministic():
    t = sample_table()
    for fmt in ("csv", "markdown"):
        assert ev.render_report(t, fmt) == ev.render_report(t, fmt)
    assert ev.render_report(t, "md").endswith("Tabular strategy: direct\n")


def test_render_rejects_empty_and_unknown():
    with pytest.raises(ValueError):
        ev.render_report(ev.MetricsTable())
    with pytest.raises(ValueError):
        ev.render_report(sample_table(), "html")


def test_json_round_trip_keeps_nan():
    t = sample_table()
    back = pipeline.table_from_json(pipeline.table_to_json(t))
    assert ev.render_report(back, "csv") == ev.render_report(t, "csv")
