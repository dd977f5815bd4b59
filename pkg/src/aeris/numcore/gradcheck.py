"""Central finite-difference gradient checking."""
import numpy as np

from aeris.numcore.tensor import GradTape


def relative_error(analytic, numeric, floor=1e-5):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``; returns the maximum."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_gradient(fn, param, h=1e-5):
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = fn().item()
        flat[i] = old - h
        fm = fn().item()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def gradcheck(fn, params, h=1e-5):
    """Compare tape gradients of scalar ``fn()`` against central differences.

    Returns the worst relative error over all parameter entries.
    """
    with GradTape() as tape:
        loss = fn()
    analytic = tape.gradient(loss, params)
    worst = 0.0
    for p, a in zip(params, analytic):
        worst = max(worst, relative_error(a, numeric_gradient(fn, p, h)))
    return worst
