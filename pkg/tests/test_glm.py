import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.special import expit

from temvip import LearnerSpec, fit_linear_penalized, fit_logistic_penalized
from temvip.exceptions import (
    NoConvergenceWarning,
    OneClassOnly,
    SeparationWarning,
)
from temvip.glm import fit_offset_logistic_slopes, lasso_lambda_max


class TestLinearPenalized:
    def test_lasso_dead_zone(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(60, 8))
        y = rng.normal(size=60)
        lam_max = lasso_lambda_max(X, y)
        fit = fit_linear_penalized(X, y, LearnerSpec.lasso("linear", lam_max * 1.0001))
        np.testing.assert_array_equal(fit.coef, np.zeros(8))
        assert fit.intercept == pytest.approx(y.mean())

    def test_unpenalized_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5, 2))
        y = rng.normal(size=5)
        spec = LearnerSpec.unpenalized("linear", tol=1e-13, max_iter=5000)
        fit = fit_linear_penalized(X, y, spec)
        # independent oracle: solve the normal equations with an intercept column
        Xi = np.column_stack([np.ones(5), X])
        beta_ls = np.linalg.solve(Xi.T @ Xi, Xi.T @ y)
        np.testing.assert_allclose([fit.intercept, *fit.coef], beta_ls, atol=1e-9)

    def test_pure_ridge_closed_form_no_intercept(self):
        # identity design, objective (1/2n)||y - X b||^2 + (lam/2)||b||^2
        # has the closed form b = y / (1 + n lam); lam = 0.5 with n = 2 gives y/2
        y = np.array([2.0, 2.0])
        X = np.eye(2)
        fit = fit_linear_penalized(
            X, y, LearnerSpec.ridge("linear", 0.5, fit_intercept=False, tol=1e-14)
        )
        np.testing.assert_allclose(fit.coef, [1.0, 1.0], atol=1e-12)
        fit2 = fit_linear_penalized(
            X, y, LearnerSpec.ridge("linear", 1.0, fit_intercept=False, tol=1e-14)
        )
        np.testing.assert_allclose(fit2.coef, y / 3.0, atol=1e-12)

    def test_elastic_net_kkt_at_convergence(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(120, 15))
        y = X[:, 0] - 0.5 * X[:, 3] + rng.normal(size=120)
        spec = LearnerSpec(family="linear", lam=0.08, alpha=0.9, tol=1e-12, max_iter=2000)
        fit = fit_linear_penalized(X, y, spec)
        n = len(y)
        r = y - fit.intercept - X @ fit.coef
        grad = np.abs(X.T @ r / n - spec.lam * (1 - spec.alpha) * fit.coef)
        zero = fit.coef == 0.0
        assert zero.any() and (~zero).any()
        # subgradient condition for inactive coordinates
        assert (np.abs(X.T @ r / n)[zero] <= spec.lam * spec.alpha + 1e-8).all()
        # stationarity for active coordinates
        active_grad = X.T @ r / n - spec.lam * (1 - spec.alpha) * fit.coef
        np.testing.assert_allclose(
            active_grad[~zero], spec.lam * spec.alpha * np.sign(fit.coef[~zero]), atol=1e-8
        )

    def test_saturated_interpolation(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(6, 5))
        y = rng.normal(size=6)
        spec = LearnerSpec.unpenalized("linear", tol=1e-14, max_iter=20000)
        fit = fit_linear_penalized(X, y, spec)
        np.testing.assert_allclose(fit.predict(X), y, atol=1e-6)

    def test_no_convergence_warning(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(40, 1))
        X = np.hstack([base + 0.01 * rng.normal(size=(40, 1)) for _ in range(6)])
        y = rng.normal(size=40)
        with pytest.warns(NoConvergenceWarning):
            fit = fit_linear_penalized(X, y, LearnerSpec.unpenalized("linear", max_iter=2, tol=1e-14))
        assert not fit.converged


class TestLogisticPenalized:
    def test_intercept_only_mle(self):
        y = np.array([1.0, 0.0, 0.0, 0.0] * 5)
        X = np.random.default_rng(6).normal(size=(20, 3))
        fit = fit_logistic_penalized(X, y, LearnerSpec.intercept("logistic"))
        assert fit.intercept == pytest.approx(np.log(0.25 / 0.75), abs=1e-9)
        assert fit.coef.size == 0

    def test_full_shrinkage_leaves_intercept_at_logit_mean(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(50, 4))
        y = (rng.random(50) < 0.3).astype(float)
        fit = fit_logistic_penalized(X, y, LearnerSpec.lasso("logistic", 50.0, tol=1e-12))
        np.testing.assert_array_equal(fit.coef, np.zeros(4))
        ybar = y.mean()
        assert fit.intercept == pytest.approx(np.log(ybar / (1 - ybar)), abs=1e-8)

    def test_separation_detected_and_clipped(self):
        X = np.array([[-1.0], [-1.0], [1.0], [1.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        with pytest.warns(SeparationWarning):
            fit = fit_logistic_penalized(
                X, y, LearnerSpec.unpenalized("logistic", max_iter=500, tol=1e-10)
            )
        assert fit.separation
        preds = fit.predict(np.array([[50.0], [-50.0]]))
        assert (preds > 0.0).all() and (preds < 1.0).all()

    def test_one_class_only(self):
        with pytest.raises(OneClassOnly):
            fit_logistic_penalized(
                np.ones((5, 1)), np.ones(5), LearnerSpec.unpenalized("logistic")
            )

    def test_against_irls_free_oracle(self):
        # moderate problem; compare fitted probabilities to a direct Newton solve
        rng = np.random.default_rng(8)
        X = rng.normal(size=(200, 3))
        eta = 0.5 + X @ np.array([0.8, -0.4, 0.0])
        y = (rng.random(200) < expit(eta)).astype(float)
        fit = fit_logistic_penalized(X, y, LearnerSpec.unpenalized("logistic", tol=1e-12))
        Xi = np.column_stack([np.ones(200), X])
        beta = np.zeros(4)
        for _ in range(60):
            p = expit(Xi @ beta)
            Wd = p * (1 - p)
            beta = beta + np.linalg.solve(Xi.T * Wd @ Xi, Xi.T @ (y - p))
        np.testing.assert_allclose([fit.intercept, *fit.coef], beta, atol=1e-7)


class TestOffsetLogisticSlopes:
    def test_matches_scalar_mle(self):
        rng = np.random.default_rng(9)
        n = 300
        h = rng.normal(size=n)
        offset = rng.normal(scale=0.5, size=n)
        y = (rng.random(n) < expit(offset + 0.7 * h)).astype(float)

        def nll(eps):
            p = expit(offset + eps * h)
            return -(y * np.log(p) + (1 - y) * np.log(1 - p)).sum()

        oracle = minimize_scalar(nll, bounds=(-5, 5), method="bounded",
                                 options={"xatol": 1e-12})
        eps = fit_offset_logistic_slopes(h[:, None], y, offset)
        assert eps[0] == pytest.approx(oracle.x, abs=1e-7)

    def test_batched_columns_independent(self):
        rng = np.random.default_rng(10)
        n = 150
        H = rng.normal(size=(n, 3))
        offset = rng.normal(scale=0.3, size=n)
        y = (rng.random(n) < expit(offset)).astype(float)
        eps_all = fit_offset_logistic_slopes(H, y, offset)
        for j in range(3):
            eps_j = fit_offset_logistic_slopes(H[:, [j]], y, offset)
            assert eps_all[j] == pytest.approx(eps_j[0], abs=1e-10)

    def test_zero_column_gets_zero_slope(self):
        y = np.array([1.0, 0.0, 1.0, 0.0])
        eps = fit_offset_logistic_slopes(np.zeros((4, 1)), y, np.zeros(4))
        assert eps[0] == 0.0

    def test_fractional_outcome_supported(self):
        rng = np.random.default_rng(11)
        h = rng.normal(size=100)
        y = rng.random(100)  # quasi-Bernoulli responses in [0, 1]
        eps = fit_offset_logistic_slopes(h[:, None], y, np.zeros(100))
        p = expit(eps[0] * h)
        assert abs((h * (y - p)).sum()) < 1e-8
