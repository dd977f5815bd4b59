import numpy as np
import pytest

from aeris import linear
from aeris.numcore import SeededRng


def problem(seed=0, n=50, p=5, noise=0.1):
    rng = SeededRng(seed)
    X = rng.normal(size=(n, p))
    beta = rng.uniform(-2, 2, size=p)
    y = X @ beta + 1.5 + noise * rng.normal(size=n)
    return X, y, beta


def orthonormal_design(seed, n=40, p=4):
    """Centred columns with ``X'X / n = I``, so internal standardisation is a no-op."""
    A = SeededRng(seed).normal(size=(n, p))
    q, _ = np.linalg.qr(A - A.mean(axis=0))
    return q * np.sqrt(n)


def gd_oracle(X, y, steps=200_000):
    """Plain full-batch gradient descent on the centred least-squares loss."""
    Xc, yc = X - X.mean(axis=0), y - y.mean()
    lr = 1.0 / np.linalg.eigvalsh(Xc.T @ Xc / len(y)).max()
    b = np.zeros(X.shape[1])
    for _ in range(steps):
        g = Xc.T @ (Xc @ b - yc) / len(y)
        b -= lr * g
        if np.abs(g).max() < 1e-14:
            break
    return b, y.mean() - X.mean(axis=0) @ b


# ols and ridge

def test_ols_exact_recovery():
    X, _, beta = problem()
    y = X @ beta + 1.5
    m = linear.fit_ols(X, y)
    assert np.abs(y - m.predict(X)).max() < 1e-9


def test_ols_identity_design():
    y = np.array([3.0, -1.0, 2.0, 5.0])
    assert np.allclose(linear.fit_ols(np.eye(4), y, fit_intercept=False).coef, y, atol=1e-14)
    with pytest.raises(linear.RankDeficientError):
        linear.fit_ols(np.eye(4), y)  # the intercept makes five parameters


def test_ols_matches_gradient_descent():
    X, y, _ = problem(1)
    b, c = gd_oracle(X, y)
    m = linear.fit_ols(X, y)
    assert np.abs(m.coef - b).max() < 1e-6 and abs(m.intercept - c) < 1e-6


def test_ols_rank_deficient_advises_ridge():
    X, y, _ = problem(2)
    X = np.column_stack([X, X[:, 0]])
    with pytest.raises(linear.RankDeficientError, match="ridge"):
        linear.fit_ols(X, y)


def test_ridge_zero_equals_ols():
    X, y, _ = problem(3)
    assert np.abs(linear.fit_ridge(X, y, 0.0).coef - linear.fit_ols(X, y).coef).max() < 1e-8


def test_ridge_identity_design():
    y = np.array([3.0, -1.0, 2.0])
    m = linear.fit_ridge(np.eye(3), y, 0.5, fit_intercept=False)
    assert np.allclose(m.coef, y / 1.5, atol=1e-14)


def test_ridge_shrinkage_limit():
    X, y, _ = problem(4)
    m = linear.fit_ridge(X, y, 1e12)
    assert np.linalg.norm(m.coef) < 1e-8 and m.intercept == pytest.approx(y.mean(), abs=1e-6)


def test_ridge_norm_monotone_over_grid():
    X, y, _ = problem(5)
    norms = [np.linalg.norm(linear.fit_ridge(X, y, lam).coef) for lam in linear.CvSearchSpec().grid]
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


# elastic net

def test_elasticnet_unpenalised_equals_ols():
    X, y, _ = problem(6)
    m = linear.fit_elasticnet(X, y, 0.0, 0.0, tol=1e-12)
    assert np.abs(m.coef - linear.fit_ols(X, y).coef).max() < 1e-6


@pytest.mark.parametrize("l1, l2", [(0.1, 0.0), (0.3, 0.5), (0.05, 2.0), (0.0, 1.0)])
def test_elasticnet_orthonormal_closed_form(l1, l2):
    X = orthonormal_design(7)
    y = X @ np.array([1.0, -0.2, 0.05, 0.6]) + 0.3 * SeededRng(8).normal(size=X.shape[0])
    b_ols = X.T @ (y - y.mean()) / X.shape[0]
    want = linear.soft_threshold(b_ols, l1) / (1.0 + l2)
    assert np.abs(linear.fit_elasticnet(X, y, l1, l2).coef - want).max() < 1e-6


def test_lasso_null_threshold_gives_exact_zeros():
    X, y, _ = problem(9)
    Z = (X - X.mean(axis=0)) / X.std(axis=0)
    lam_max = np.abs(Z.T @ (y - y.mean())).max() / len(y)
    m = linear.fit_lasso(X, y, lam_max * 1.0001)
    assert np.all(m.coef == 0.0) and m.intercept == pytest.approx(y.mean())
    assert np.any(linear.fit_lasso(X, y, lam_max * 0.9).coef != 0.0)


def test_elasticnet_objective_monotone():
    X, y, _ = problem(10, n=80, p=8, noise=1.0)
    h = linear.fit_elasticnet(X, y, 0.05, 0.1).history
    assert all(b <= a + 1e-15 for a, b in zip(h, h[1:]))


def test_elasticnet_non_convergence_carries_iterate():
    X, y, _ = problem(11)
    X = np.column_stack([X, X[:, 0] + 1e-3 * X[:, 1]])
    with pytest.raises(linear.ConvergenceError) as err:
        linear.fit_elasticnet(X, y, 1e-6, 0.0, tol=1e-15, max_sweeps=3)
    assert err.value.coef is not None and err.value.coef.shape == (6,)


def test_alpha_l1_ratio():
    assert linear.alpha_l1_ratio(2.0, 0.25) == (0.5, 1.5)


# svr

def test_svr_wide_tube_gives_zero_slope():
    X, y, _ = problem(12)
    eps = np.abs(y - y.mean()).max() + 1.0
    m = linear.fit_svr_linear(X, y, C=10.0, eps=eps)
    assert np.all(m.coef == 0.0)
    assert np.abs(y - m.predict(X)).max() <= eps


def test_svr_recovers_ols_direction():
    X, _, beta = problem(13, n=60, p=3)
    y = X @ beta + 1.5
    m = linear.fit_svr_linear(X, y, C=1e4, eps=0.0, iters=40_000, decay=0.9995)
    ols = linear.fit_ols(X, y).coef
    cos = m.coef @ ols / (np.linalg.norm(m.coef) * np.linalg.norm(ols))
    assert 1.0 - cos < 1e-3
    assert np.abs(m.coef - ols).max() < 1e-3


def test_svr_duplicated_samples_halved_c():
    X, y, _ = problem(14, n=30, p=3, noise=1.0)
    a = linear.fit_svr_linear(X, y, C=2.0, eps=0.1, iters=3000)
    b = linear.fit_svr_linear(np.vstack([X, X]), np.r_[y, y], C=1.0, eps=0.1, iters=3000)
    assert np.allclose(a.coef, b.coef, atol=1e-9) and a.intercept == pytest.approx(b.intercept, abs=1e-9)


def test_svr_never_worse_than_zero_model():
    for seed in range(3):
        X, y, _ = problem(15 + seed, noise=2.0)
        m = linear.fit_svr_linear(X, y, C=100.0, eps=0.1, iters=2000)
        zero = min(linear.svr_objective(X, y, np.zeros(X.shape[1]), b, 100.0, 0.1) for b in (0.0, y.mean()))
        assert linear.svr_objective(X, y, m.coef, m.intercept, 100.0, 0.1) <= zero


def test_svr_rejects_bad_params():
    X, y, _ = problem(18)
    with pytest.raises(ValueError):
        linear.fit_svr_linear(X, y, C=0.0)


# cross-validation

def test_folds_are_contiguous():
    assert linear.contiguous_folds(10, 4) == [(0, 2), (2, 5), (5, 7), (7, 10)]


def test_kfold_single_value():
    X, y, _ = problem(19)
    spec = linear.CvSearchSpec(folds=4, grid=(0.7,))
    value, model, _ = linear.kfold_search(X, y, spec, linear.fit_ridge)
    assert value == 0.7 and model.params["lam"] == 0.7


def test_kfold_picks_more_shrinkage_under_noise():
    X, clean, _ = problem(20, n=40, p=10, noise=0.0)
    noisy = clean + 8.0 * SeededRng(21).normal(size=clean.size)
    spec = linear.CvSearchSpec()
    lam_clean, *_ = linear.kfold_search(X, clean, spec, linear.fit_ridge)
    lam_noisy, *_ = linear.kfold_search(X, noisy, spec, linear.fit_ridge)
    assert lam_noisy > lam_clean


def test_cv_spec_validation():
    with pytest.raises(ValueError):
        linear.CvSearchSpec(folds=1)
    with pytest.raises(ValueError):
        linear.CvSearchSpec(grid=())


def test_grid_is_log_spaced_over_range():
    g = np.array(linear.CvSearchSpec().grid)
    assert g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(10.0)
    assert np.allclose(np.diff(np.log(g)), np.log(g[1] / g[0]))


# model behaviour

def test_prediction_scales_without_intercept():
    X, y, _ = problem(22)
    m = linear.fit_ols(X, y, fit_intercept=False)
    assert np.allclose(m.predict(3.0 * X), 3.0 * m.predict(X))


def test_predict_rejects_wrong_width():
    X, y, _ = problem(23)
    with pytest.raises(ValueError):
        linear.fit_ols(X, y).predict(X[:, :2])


def test_checkpoint_round_trip(tmp_path):
    X, y, _ = problem(24)
    m = linear.fit_elasticnet(X, y, 0.01, 0.2)
    m.save(tmp_path / "m.json")
    back = linear.LinearModel.load(tmp_path / "m.json")
    assert np.array_equal(back.coef, m.coef) and back.intercept == m.intercept and back.params == m.params
