"""Least squares, ridge, elastic net (coordinate descent) and linear SVR."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aeris import checkpoint, kernels


class RankDeficientError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, coef=None, intercept=None):
        super().__init__(msg)
        self.coef = coef
        self.intercept = intercept


@dataclass
class LinearModel:
    kind: str
    coef: np.ndarray
    intercept: float
    params: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.coef.shape[0]:
            raise ValueError(f"expected {self.coef.shape[0]} features, got shape {X.shape}")
        return X @ self.coef + self.intercept

    def to_dict(self):
        return {"model": self.kind, "params": self.params,
                "coef": [float(c) for c in self.coef], "intercept": float(self.intercept)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["model"], np.array(d["coef"], dtype=np.float64), float(d["intercept"]), dict(d["params"]))

    def save(self, path):
        checkpoint.save(path, "linear", self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(checkpoint.load(path, "linear"))


def _center(X, y, fit_intercept):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"X must be (n, p) and y (n,), got {X.shape} and {y.shape}")
    if fit_intercept:
        xm, ym = X.mean(axis=0), y.mean()
    else:
        xm, ym = np.zeros(X.shape[1]), 0.0
    return X - xm, y - ym, xm, ym


def fit_ols(X, y, fit_intercept=True):
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    n, p = Xc.shape
    if n < p + int(fit_intercept):
        raise RankDeficientError(f"OLS needs at least {p + int(fit_intercept)} samples for {p} features, "
                                 f"got {n}; use fit_ridge")
    q, r = np.linalg.qr(Xc)
    d = np.abs(np.diag(r))
    if d.size and d.min() <= 1e-10 * max(d.max(), 1.0):
        raise RankDeficientError("design matrix is rank deficient; use fit_ridge with a positive penalty")
    beta = np.linalg.solve(r, q.T @ yc)
    return LinearModel("ols", beta, float(ym - xm @ beta), {"fit_intercept": fit_intercept})


def fit_ridge(X, y, lam, fit_intercept=True):
    """Closed form ``(X'X + lam I)^-1 X'y`` on centred data; intercept unpenalised."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    p = Xc.shape[1]
    beta = np.linalg.solve(Xc.T @ Xc + lam * np.eye(p), Xc.T @ yc)
    return LinearModel("ridge", beta, float(ym - xm @ beta), {"lam": float(lam), "fit_intercept": fit_intercept})


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def elasticnet_objective(Z, y, beta, l1, l2):
    r = y - Z @ beta
    return r @ r / (2 * y.size) + l1 * np.abs(beta).sum() + 0.5 * l2 * beta @ beta


def fit_elasticnet(X, y, l1, l2=0.0, fit_intercept=True, tol=1e-8, max_sweeps=10_000):
    """Cyclic coordinate descent for

        (1/2n)||y - Xb||^2 + l1 ||b||_1 + (l2/2) ||b||^2

    on internally standardised features (population std). ``model.history``
    holds the objective after every sweep.
    """
    if l1 < 0 or l2 < 0:
        raise ValueError("penalties must be >= 0")
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    n, p = Xc.shape
    scale = np.sqrt((Xc * Xc).mean(axis=0))
    live = scale > 0
    Z = np.zeros_like(Xc)
    Z[:, live] = Xc[:, live] / scale[live]
    ZT = np.ascontiguousarray(Z.T)
    col_sq = (Z * Z).mean(axis=0)
    beta = np.zeros(p)
    r = yc.copy()
    history = [elasticnet_objective(Z, yc, beta, l1, l2)]
    for _ in range(max_sweeps):
        change = kernels.cd_sweep(ZT, r, beta, col_sq, l1, l2)
        history.append(elasticnet_objective(Z, yc, beta, l1, l2))
        if change < tol:
            break
    else:
        coef = np.where(live, beta / np.where(live, scale, 1.0), 0.0)
        raise ConvergenceError(f"no convergence in {max_sweeps} sweeps", coef, float(ym - xm @ coef))
    coef = np.where(live, beta / np.where(live, scale, 1.0), 0.0)
    kind = "lasso" if l2 == 0 else "elasticnet"
    model = LinearModel(kind, coef, float(ym - xm @ coef),
                        {"l1": float(l1), "l2": float(l2), "fit_intercept": fit_intercept})
    model.history = history
    return model


def fit_lasso(X, y, lam, **kw):
    return fit_elasticnet(X, y, lam, 0.0, **kw)


def alpha_l1_ratio(alpha, l1_ratio):
    """Map the (alpha, l1_ratio) parametrisation onto (l1, l2)."""
    return alpha * l1_ratio, alpha * (1.0 - l1_ratio)


def svr_objective(X, y, beta, b, C, eps):
    r = y - X @ beta - b
    return 0.5 * beta @ beta + C * np.maximum(np.abs(r) - eps, 0.0).sum()


def fit_svr_linear(X, y, C=100.0, eps=0.1, iters=20_000, step=1.0, decay=0.999):
    """Linear epsilon-insensitive SVR in the primal.

    Minimises ``0.5 ||b||^2 + C sum max(0, |r| - eps)`` by normalised
    subgradient steps with geometric step decay, returning the best iterate.
    """
    if C <= 0 or eps < 0:
        raise ValueError("need C > 0 and eps >= 0")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = X.shape[1]
    starts = [(np.zeros(p), float(y.mean())), (np.zeros(p), float(np.median(y)))]
    beta, b = min(starts, key=lambda s: svr_objective(X, y, s[0], s[1], C, eps))
    beta = beta.copy()
    best = (svr_objective(X, y, beta, b, C, eps), beta.copy(), b)
    eta = step * max(1.0, float(np.abs(y).max()))
    for _ in range(iters):
        r = y - X @ beta - b
        s = np.where(r > eps, -1.0, np.where(r < -eps, 1.0, 0.0))
        g_beta = beta + C * (X.T @ s)
        g_b = C * s.sum()
        norm = np.sqrt(g_beta @ g_beta + g_b * g_b)
        if norm == 0.0:
            break
        beta = beta - eta * g_beta / norm
        b = b - eta * g_b / norm
        eta *= decay
        obj = svr_objective(X, y, beta, b, C, eps)
        if obj < best[0]:
            best = (obj, beta.copy(), b)
    return LinearModel("svr", best[1], float(best[2]), {"C": float(C), "eps": float(eps)})


@dataclass
class CvSearchSpec:
    folds: int = 4
    grid: tuple = tuple(np.logspace(-4, 1, 50))
    scoring: str = "neg_mse"

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if len(self.grid) == 0:
            raise ValueError("grid must not be empty")


def contiguous_folds(n, k):
    """Time-ordered, non-shuffled fold boundaries."""
    edges = np.linspace(0, n, k + 1).astype(int)
    return [(edges[i], edges[i + 1]) for i in range(k)]


def kfold_search(X, y, spec, fitter):
    """Pick the grid value with the best mean negative MSE and refit on all data.

    ``fitter(X, y, value)`` returns a model with ``predict``. Returns
    ``(best_value, refit_model, mean_scores)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(spec.grid) == 0:
        raise ValueError("grid must not be empty")
    if spec.folds > X.shape[0]:
        raise ValueError("more folds than samples")
    folds = contiguous_folds(X.shape[0], spec.folds)
    scores = []
    for value in spec.grid:
        fold_scores = []
        for lo, hi in folds:
            mask = np.ones(X.shape[0], dtype=bool)
            mask[lo:hi] = False
            model = fitter(X[mask], y[mask], value)
            err = y[lo:hi] - model.predict(X[lo:hi])
            fold_scores.append(-(err @ err) / err.size)
        scores.append(float(np.mean(fold_scores)))
    best = int(np.argmax(scores))
    value = spec.grid[best]
    return value, fitter(X, y, value), scores
