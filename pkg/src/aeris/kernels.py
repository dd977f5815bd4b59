"""Kernel dispatch.

The compiled extension ``aeris._kernels`` is used when it imports; otherwise
the numpy fallback is used. Set ``AERIS_PURE_PYTHON=1`` to force the fallback.
``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from aeris import _fallback

if os.environ.get("AERIS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from aeris import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"


def _lags(a):
    return np.ascontiguousarray(a, dtype=np.int64).astype(np.dtype("long"), copy=False)


def ewma_forward(x, alpha, impl=None):
    """Forward EWMA seeded at the first observed value; NaNs carry the state."""
    impl = impl or _impl
    return impl.ewma_forward(np.ascontiguousarray(x, dtype=np.float64), float(alpha))


def arma_residuals(w, ar_lags, ar_coefs, ma_lags, ma_coefs, mu=0.0, start=0, impl=None):
    """One-step residuals of a sparse-lag ARMA filter with zero pre-sample shocks."""
    impl = impl or _impl
    return impl.arma_residuals(
        np.ascontiguousarray(w, dtype=np.float64),
        _lags(ar_lags),
        np.ascontiguousarray(ar_coefs, dtype=np.float64),
        _lags(ma_lags),
        np.ascontiguousarray(ma_coefs, dtype=np.float64),
        float(mu),
        int(start),
    )


def best_split(X, y, features, min_leaf, impl=None):
    """Return ``(feature, threshold, child_sse)``; feature is -1 when no split helps."""
    impl = impl or _impl
    f, thr, sse = impl.best_split(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        _lags(np.sort(np.asarray(features))),
        int(min_leaf),
    )
    return int(f), float(thr), float(sse)


def cd_sweep(XT, r, beta, col_sq, l1, l2, impl=None):
    """In-place coordinate-descent sweep over all coefficients; returns max |change|."""
    impl = impl or _impl
    return float(impl.cd_sweep(XT, r, beta, col_sq, float(l1), float(l2)))
