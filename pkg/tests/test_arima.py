import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeris import arima
from aeris.arima import ArimaModel, ArimaOrder
from aeris.numcore import SeededRng


def simulate_ar1(phi, n, seed, burn=200):
    e = SeededRng(seed).normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(1, n + burn):
        x[t] = phi * x[t - 1] + e[t]
    return x[burn:]


def bare_model(order, ar=(), ma=(), mu=0.0):
    z = np.zeros(0)
    return ArimaModel(order, np.array(ar, float), np.array(ma, float), z, z, z, 0.0, mu, 1.0)


# differencing

def test_difference_ramp():
    w, _ = arima.difference(np.arange(1.0, 11.0), d=1)
    assert np.array_equal(w, np.ones(9))


def test_seasonal_difference_length():
    w, _ = arima.difference(np.arange(100.0) ** 1.5, d=1, D=1, s=24)
    assert w.size == 75


def test_difference_too_short():
    with pytest.raises(ValueError):
        arima.difference(np.arange(5.0), d=1, D=1, s=24)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2), st.integers(1, 12), st.integers(0, 10_000))
def test_difference_integrate_round_trip(d, D, s, seed):
    x = SeededRng(seed).normal(size=60).cumsum()
    w, state = arima.difference(x, d, D, s)
    assert np.allclose(arima.integrate(w, state), x, rtol=0, atol=1e-9)


def test_round_trip_is_exact_on_integers():
    x = SeededRng(1).integers(-50, 50, size=80).astype(float)
    w, state = arima.difference(x, 1, 1, 24)
    assert np.array_equal(arima.integrate(w, state), x)


def test_order_validation():
    with pytest.raises(ValueError):
        ArimaOrder(p=-1)
    with pytest.raises(ValueError):
        ArimaOrder(1, 0, 0, 1, 0, 0, 1)


# estimation

def test_ar1_recovery():
    x = simulate_ar1(0.7, 5000, seed=3)
    m = arima.fit(x, order=ArimaOrder(1, 0, 0))
    assert 0.65 <= m.ar[0] <= 0.75


def test_ma1_recovery():
    e = SeededRng(4).normal(size=4001)
    x = e[1:] + 0.4 * e[:-1]
    m = arima.fit(x, order=ArimaOrder(0, 0, 1))
    assert m.ma[0] == pytest.approx(0.4, abs=0.05)


def test_seasonal_ar_recovery():
    e = SeededRng(5).normal(size=3000)
    x = np.zeros(3000)
    for t in range(12, 3000):
        x[t] = 0.6 * x[t - 12] + e[t]
    m = arima.fit(x[200:], order=ArimaOrder(0, 0, 0, 1, 0, 0, 12))
    assert m.sar[0] == pytest.approx(0.6, abs=0.05)


def test_random_walk_model():
    x = SeededRng(6).normal(size=300).cumsum()
    m = arima.fit(x, order=ArimaOrder(0, 1, 0))
    assert np.allclose(m.residuals, np.diff(x))
    assert np.allclose(m.forecast(5), x[-1])


def test_exog_coefficient_recovered():
    rng = SeededRng(7)
    z = rng.normal(size=2000)
    y = 2.0 * z + rng.normal(size=2000)
    m = arima.fit(y, exog=z, order=ArimaOrder(0, 0, 0))
    assert m.exog_coef[0] == pytest.approx(2.0, abs=0.05)


def test_exog_needs_future_values():
    rng = SeededRng(8)
    z = rng.normal(size=300)
    m = arima.fit(2 * z + rng.normal(size=300), exog=z, order=ArimaOrder(1, 0, 0))
    with pytest.raises(ValueError, match="future_exog"):
        m.forecast(3)
    assert m.forecast(3, np.zeros((3, 1))).shape == (3,)


def test_css_history_non_increasing():
    m = arima.fit(simulate_ar1(0.5, 800, seed=9), order=ArimaOrder(2, 0, 1))
    h = m.css_history
    assert len(h) > 1 and all(b <= a for a, b in zip(h, h[1:]))


def test_near_unit_root_clamped_and_flagged():
    x = SeededRng(10).normal(size=2000).cumsum()
    m = arima.fit(x, order=ArimaOrder(1, 0, 0))
    assert abs(m.ar[0]) <= arima.COEF_BOUND
    assert m.clamped


def test_missing_values_rejected():
    x = simulate_ar1(0.5, 100, seed=11)
    x[10] = np.nan
    with pytest.raises(ValueError):
        arima.fit(x)


# forecasting

def test_ar1_forecast_closed_form():
    m = bare_model(ArimaOrder(1, 0, 0), ar=[0.6])
    m.u_tail, m.e_tail = np.array([1.0, 2.5]), np.zeros(1)
    assert np.allclose(m.forecast(4), 2.5 * 0.6 ** np.arange(1, 5))


def test_ma1_forecast_by_hand():
    y = np.array([1.0, -0.5, 2.0, 0.0, 1.5])
    theta = 0.5
    e = []
    for t, v in enumerate(y):  # zero pre-sample shock
        e.append(v - (theta * e[-1] if t else 0.0))
    m = bare_model(ArimaOrder(0, 0, 1), ma=[theta])
    fc = m.rolling_forecast(y, None, [4], 3)[0]
    assert fc[0] == pytest.approx(theta * e[-1], abs=1e-14)
    assert np.array_equal(fc[1:], [0.0, 0.0])


def test_zero_order_forecast_is_mean():
    x = SeededRng(12).normal(size=200) + 3.0
    m = arima.fit(x, order=ArimaOrder(0, 0, 0))
    assert np.allclose(m.forecast(3), x.mean())


def test_one_step_rolling_matches_fitted():
    x = simulate_ar1(0.6, 400, seed=13) + 5.0
    m = arima.fit(x, order=ArimaOrder(1, 1, 1))
    origins = np.arange(10, 399)
    fc = m.rolling_forecast(x, None, origins, 1)[:, 0]
    assert np.allclose(fc, m.fitted[origins + 1], atol=1e-10)


def test_arima_010_is_persistence():
    x = SeededRng(14).normal(size=300).cumsum()
    m = arima.fit(x, order=ArimaOrder(0, 1, 0))
    origins = np.arange(50, 290)
    fc = m.rolling_forecast(x, None, origins, 8)
    assert np.array_equal(fc, np.repeat(x[origins][:, None], 8, axis=1))


def test_forecast_rejects_bad_horizon():
    m = arima.fit(simulate_ar1(0.5, 100, seed=15))
    with pytest.raises(ValueError):
        m.forecast(0)


# order search and persistence

def test_order_search_single_candidate():
    x = simulate_ar1(0.5, 300, seed=16)
    best, table = arima.order_search(x, p_range=[1], q_range=[0], d=0)
    assert best == ArimaOrder(1, 0, 0) and len(table) == 1


def test_order_search_finds_ar_structure():
    x = simulate_ar1(0.8, 1500, seed=17)
    best, _ = arima.order_search(x, p_range=range(3), q_range=range(3), d=0)
    assert best.p >= 1


def test_checkpoint_round_trip(tmp_path):
    rng = SeededRng(18)
    z = rng.normal(size=400)
    m = arima.fit(simulate_ar1(0.5, 400, seed=19) + z, exog=z, order=ArimaOrder(1, 1, 1))
    m.save(tmp_path / "a.json")
    back = ArimaModel.load(tmp_path / "a.json")
    fx = np.ones((4, 1))
    assert np.array_equal(back.forecast(4, fx), m.forecast(4, fx))
