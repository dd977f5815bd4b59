"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on the same seeded inputs through both backends; outputs are
checked for agreement before timing. Reports the best-of-``repeat`` wall time.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from aeris import _fallback, kernels
from aeris.numcore import SeededRng

try:
    from aeris import _kernels as compiled
except ImportError:
    compiled = None


def cases():
    rng = SeededRng(0)
    x = rng.normal(size=20_000).cumsum()
    x[rng.integers(0, x.size, size=500)] = np.nan
    yield "ewma_forward (n=20000)", lambda impl: kernels.ewma_forward(x, 2 / 11, impl=impl)

    w = rng.normal(size=8760)
    ar_lags, ma_lags = [1, 2, 24, 25, 26], [1, 24, 25]
    ar, ma = rng.uniform(-0.3, 0.3, size=5), rng.uniform(-0.3, 0.3, size=3)
    yield "arma_residuals (n=8760, 5 AR + 3 MA lags)", lambda impl: kernels.arma_residuals(
        w, ar_lags, ar, ma_lags, ma, 0.1, 26, impl=impl)

    X = rng.normal(size=(2000, 30))
    y = rng.normal(size=2000)
    feats = np.arange(30)
    yield "best_split (2000 x 30)", lambda impl: kernels.best_split(X, y, feats, 1, impl=impl)

    Z = rng.normal(size=(2000, 60))
    XT = np.ascontiguousarray(Z.T)
    col_sq = (Z * Z).mean(axis=0)
    yz = rng.normal(size=2000)

    def sweep(impl):
        beta, r = np.zeros(60), yz.copy()
        for _ in range(5):
            kernels.cd_sweep(XT, r, beta, col_sq, 0.01, 0.1, impl=impl)
        return beta

    yield "cd_sweep x5 (2000 x 60)", sweep


def agree(a, b):
    if isinstance(a, tuple):
        return a[0] == b[0] and np.isclose(a[1], b[1]) and np.isclose(a[2], b[2], rtol=1e-10)
    return np.allclose(a, b, rtol=1e-10, atol=1e-10, equal_nan=True)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write results here")
    args = p.parse_args(argv)
    if compiled is None:
        print("compiled kernels not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    print(f"{'kernel':<44} {'fallback ms':>12} {'compiled ms':>12} {'speedup':>8}")
    for name, fn in cases():
        if not agree(fn(_fallback), fn(compiled)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        t = {}
        for label, impl in (("fallback", _fallback), ("compiled", compiled)):
            number = 1 if label == "fallback" else 5
            t[label] = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat)) / number
        rows.append({"kernel": name, "fallback_s": t["fallback"], "compiled_s": t["compiled"],
                     "speedup": t["fallback"] / t["compiled"]})
        print(f"{name:<44} {t['fallback'] * 1e3:>12.2f} {t['compiled'] * 1e3:>12.2f} "
              f"{t['fallback'] / t['compiled']:>7.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
