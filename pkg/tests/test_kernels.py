"""The compiled kernels and the numpy fallback must agree."""
import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeris import _fallback, kernels
from aeris.numcore import SeededRng

compiled = pytest.importorskip("aeris._kernels", reason="compiled kernels not built")
IMPLS = [_fallback, compiled]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.one_of(st.floats(-1e3, 1e3), st.just(np.nan)), min_size=1, max_size=50)
       .filter(lambda xs: any(x == x for x in xs)),
       st.floats(0.01, 1.0))
def test_ewma_backends_agree(xs, alpha):
    a, b = (kernels.ewma_forward(xs, alpha, impl=i) for i in IMPLS)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-10)


def test_ewma_all_missing_rejected_by_both():
    for impl in IMPLS:
        with pytest.raises(ValueError):
            kernels.ewma_forward([np.nan, np.nan], 0.5, impl=impl)


@pytest.mark.parametrize("seed", range(4))
def test_arma_residual_backends_agree(seed):
    rng = SeededRng(seed)
    w = rng.normal(size=300)
    ar_lags, ma_lags = [1, 24, 25], [1, 2]
    ar, ma = rng.uniform(-0.5, 0.5, size=3), rng.uniform(-0.5, 0.5, size=2)
    a, b = (kernels.arma_residuals(w, ar_lags, ar, ma_lags, ma, mu=0.3, start=25, impl=i) for i in IMPLS)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_arma_residuals_against_loop():
    w = np.array([1.0, 2.0, -1.0, 0.5, 3.0])
    e = kernels.arma_residuals(w, [1], [0.5], [1], [0.25])
    want = []
    for t in range(5):
        pred = (0.5 * w[t - 1] if t >= 1 else 0.0) + (0.25 * want[t - 1] if t >= 1 else 0.0)
        want.append(w[t] - pred)
    assert np.allclose(e, want)


@pytest.mark.parametrize("seed", range(6))
def test_best_split_backends_agree(seed):
    rng = SeededRng(seed)
    X = np.round(rng.uniform(0, 3, size=(60, 4)), 1)
    y = rng.normal(size=60)
    feats = np.array([0, 2, 3])
    a, b = (kernels.best_split(X, y, feats, 3, impl=i) for i in IMPLS)
    assert a[0] == b[0] and a[1] == b[1] and a[2] == pytest.approx(b[2], rel=1e-12)


def test_best_split_no_gain():
    X = np.ones((5, 2))
    for impl in IMPLS:
        assert kernels.best_split(X, np.arange(5.0), [0, 1], 1, impl=impl)[0] == -1


@pytest.mark.parametrize("seed", range(4))
def test_cd_sweep_backends_agree(seed):
    rng = SeededRng(seed)
    Z = rng.normal(size=(40, 5))
    y = rng.normal(size=40)
    out = []
    for impl in IMPLS:
        beta, r = np.zeros(5), y.copy()
        XT = np.ascontiguousarray(Z.T)
        col_sq = (Z * Z).mean(axis=0)
        changes = [kernels.cd_sweep(XT, r, beta, col_sq, 0.05, 0.1, impl=impl) for _ in range(5)]
        out.append((beta.copy(), r.copy(), changes))
    assert np.allclose(out[0][0], out[1][0], rtol=1e-12, atol=1e-14)
    assert np.allclose(out[0][1], out[1][1], rtol=1e-12, atol=1e-14)
    assert np.allclose(out[0][2], out[1][2], rtol=1e-12, atol=1e-14)


def test_pure_python_switch():
    env = dict(os.environ, AERIS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import aeris.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    if os.environ.get("AERIS_PURE_PYTHON", "") in ("", "0"):
        assert importlib.import_module("aeris.kernels").BACKEND == "compiled"
