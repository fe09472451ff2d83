import numpy as np
import pytest
from scipy.stats import norm

from temvip import (
    BinaryOutcome,
    ContinuousOutcome,
    Estimand,
    InferenceConfig,
    LearnerSpec,
    ObservedDataset,
    assemble_eif_matrix,
    benjamini_hochberg,
    classify_tems,
    estimate_tem_vips,
    onestep_estimate,
    tml_estimate_continuous,
    wald_inference,
)
from temvip.eif import uncentered_eif_absolute
from temvip.exceptions import DegenerateVarianceWarning, PositiveOutcomeRequired
from tests.conftest import make_survival_dataset


class TestOnestep:
    def test_residual_free_reduces_to_regression_coefficient(self):
        rng = np.random.default_rng(41)
        n = 80
        W = rng.normal(size=(n, 2))
        W -= W.mean(axis=0)
        A = np.tile([0, 1], n // 2).astype(float)
        q1 = 1.0 + 3.0 * W[:, 0]
        q0 = 1.0
        q_obs = A * q1 + (1 - A) * q0
        y = q_obs  # zero residuals
        d = uncentered_eif_absolute(y, A, np.full(n, 0.5), q_obs, q1, np.full(n, q0))
        theta = onestep_estimate(W, d)
        assert theta[0] == pytest.approx(3.0, abs=1e-12)

    def test_zero_effect_dgp_estimates_near_zero(self):
        rng = np.random.default_rng(42)
        n = 4000
        W = rng.normal(size=(n, 3))
        A = (rng.random(n) < 0.5).astype(int)
        y = 1.0 + 0.5 * W[:, 0] + rng.normal(size=n)
        ds = ObservedDataset(W, A, ContinuousOutcome(y))
        res = estimate_tem_vips(
            ds, Estimand.absolute(), "onestep",
            known_propensity=0.5,
            outcome_menu=[LearnerSpec.unpenalized("linear", interactions=True)],
        )
        assert np.abs(res.estimates).max() < 0.15


class TestTmlContinuous:
    def test_zero_residual_means_zero_tilt(self):
        rng = np.random.default_rng(43)
        n = 60
        W = rng.normal(size=(n, 2))
        W -= W.mean(axis=0)
        a = np.tile([0.0, 1.0], n // 2)
        q = np.full(n, 0.3)
        theta, d_mat, states = tml_estimate_continuous(
            y=q, a=a, g=np.full(n, 0.5), W=W, q_obs=q, q1=q, q0=q, scale="absolute"
        )
        assert all(s.n_iter == 0 for s in states)
        assert all(s.converged for s in states)
        np.testing.assert_allclose(theta, np.zeros(2), atol=1e-12)

    def test_targeting_zeroes_eif_means(self):
        rng = np.random.default_rng(44)
        n, p = 200, 6
        W = rng.normal(size=(n, p))
        W -= W.mean(axis=0)
        a = (rng.random(n) < 0.5).astype(float)
        y = np.clip(rng.beta(2, 2, size=n) + 0.1 * a * W[:, 0], 0.01, 0.99)
        g = np.full(n, 0.5)
        q_obs = np.clip(y + rng.normal(scale=0.05, size=n), 0.01, 0.99)
        q1 = np.clip(q_obs + 0.05, 0.01, 0.99)
        q0 = np.clip(q_obs - 0.05, 0.01, 0.99)
        for scale in ("absolute", "relative"):
            theta, d_mat, states = tml_estimate_continuous(
                y, a, g, W, q_obs, q1, q0, scale=scale
            )
            eif = assemble_eif_matrix(W, d_mat, theta)
            assert (np.abs(eif.column_means) < 1e-4 * np.sqrt(eif.sigma2)).all()
            assert all(s.converged for s in states)

    def test_absolute_scale_uses_single_tilt(self):
        rng = np.random.default_rng(45)
        n, p = 150, 3
        W = rng.normal(size=(n, p))
        W -= W.mean(axis=0)
        a = (rng.random(n) < 0.5).astype(float)
        y = np.clip(0.5 + 0.2 * a * W[:, 0] + rng.normal(scale=0.1, size=n), 0.01, 0.99)
        q = np.clip(0.5 + 0.1 * a * W[:, 0], 0.01, 0.99)
        theta, _, states = tml_estimate_continuous(
            y, a, np.full(n, 0.5), W, q, np.clip(0.5 + 0.1 * W[:, 0], 0.01, 0.99),
            np.full(n, 0.5), scale="absolute"
        )
        assert all(s.n_iter <= 1 for s in states)


class TestWaldInference:
    def test_ci_hand_example(self):
        res = wald_inference(
            np.array([2.0]), np.array([4.0]), n=100, covariate_names=("w1",)
        )
        z = norm.ppf(0.975)
        assert res.std_err[0] == pytest.approx(0.2)
        assert res.ci_lower[0] == pytest.approx(2.0 - z * 0.2, abs=1e-6)
        assert res.ci_upper[0] == pytest.approx(2.0 + z * 0.2, abs=1e-6)
        assert res.ci_lower[0] == pytest.approx(1.6080072, abs=1e-6)
        assert res.ci_upper[0] == pytest.approx(2.3919928, abs=1e-6)

    def test_zero_estimate_p_value_one(self):
        res = wald_inference(np.array([0.0]), np.array([2.0]), 50, ("w1",))
        assert res.p_value[0] == pytest.approx(1.0)

    def test_degenerate_variance_flagged_not_zero(self):
        with pytest.warns(DegenerateVarianceWarning):
            res = wald_inference(np.array([1.0, 0.5]), np.array([0.0, 1.0]), 50, ("a", "b"))
        assert np.isnan(res.p_value[0])
        assert not np.isnan(res.p_value[1])
        assert np.isnan(res.p_adj[0])

    def test_null_threshold_interval_null(self):
        cfg = InferenceConfig(null_threshold=0.5)
        res = wald_inference(np.array([0.3, 2.0]), np.array([1.0, 1.0]), 100, ("a", "b"), cfg=cfg)
        assert res.p_value[0] == pytest.approx(1.0)  # inside the null
        expected = 2 * norm.sf((2.0 - 0.5) / 0.1)
        assert res.p_value[1] == pytest.approx(expected)

    def test_ci_ordering_invariant(self):
        res = wald_inference(np.array([-1.0, 0.0, 3.0]), np.array([1.0, 2.0, 0.5]), 80,
                             ("a", "b", "c"))
        assert (res.ci_lower <= res.estimates).all()
        assert (res.estimates <= res.ci_upper).all()
        assert (res.p_adj >= res.p_value - 1e-15).all()


class TestBenjaminiHochberg:
    def test_all_ones(self):
        np.testing.assert_array_equal(benjamini_hochberg(np.ones(5)), np.ones(5))

    def test_single_p_unchanged(self):
        np.testing.assert_array_equal(benjamini_hochberg(np.array([0.03])), [0.03])

    def test_hand_example(self):
        np.testing.assert_allclose(
            benjamini_hochberg(np.array([0.005, 0.2, 0.9])), [0.015, 0.3, 0.9], atol=1e-12
        )

    def test_step_up_collapse(self):
        np.testing.assert_allclose(
            benjamini_hochberg(np.array([0.01, 0.02, 0.03, 0.04])), [0.04] * 4, atol=1e-12
        )

    def test_unsorted_input(self):
        np.testing.assert_allclose(
            benjamini_hochberg(np.array([0.9, 0.005, 0.2])), [0.9, 0.015, 0.3], atol=1e-12
        )

    def test_monotone_in_ranks(self):
        rng = np.random.default_rng(46)
        p = rng.random(40)
        q = benjamini_hochberg(p)
        order = np.argsort(p)
        assert (np.diff(q[order]) >= -1e-15).all()
        assert (q >= p - 1e-15).all()


class TestClassify:
    def test_significant_and_large(self):
        assert classify_tems(np.array([0.01]), np.array([0.2]), 0.05, 0.05)[0]

    def test_significant_but_small(self):
        assert not classify_tems(np.array([0.01]), np.array([0.01]), 0.05, 0.05)[0]

    def test_not_significant(self):
        assert not classify_tems(np.array([0.2]), np.array([5.0]), 0.05, 0.0)[0]


class TestPipeline:
    def test_z_statistic_invariant_to_column_rescaling(self, small_continuous):
        ds = small_continuous
        menus = dict(
            propensity_menu=[LearnerSpec.unpenalized("logistic", tol=1e-12)],
            outcome_menu=[LearnerSpec.unpenalized("linear", interactions=True, tol=1e-12)],
        )
        res1 = estimate_tem_vips(ds, Estimand.absolute(), "onestep", **menus)
        W2 = ds.covariates.copy()
        c = 12.5
        W2[:, 0] *= c
        ds2 = ObservedDataset(W2, ds.treatment, ds.outcome, ds.covariate_names)
        res2 = estimate_tem_vips(ds2, Estimand.absolute(), "onestep", **menus)
        z1 = res1.estimates / res1.std_err
        z2 = res2.estimates / res2.std_err
        np.testing.assert_allclose(z2, z1, atol=1e-8)
        assert res2.estimates[0] == pytest.approx(res1.estimates[0] / c, rel=1e-6)

    def test_relative_requires_positive_outcome(self):
        rng = np.random.default_rng(47)
        W = rng.normal(size=(40, 2))
        A = np.tile([0, 1], 20)
        y = rng.normal(size=40)  # contains non-positive values
        ds = ObservedDataset(W, A, ContinuousOutcome(y))
        with pytest.raises(PositiveOutcomeRequired):
            estimate_tem_vips(ds, Estimand.relative(), "onestep")

    def test_onestep_and_tml_agree_to_first_order(self):
        # paired replicates; the estimators differ by o(1/sqrt(n))
        hits = total = 0
        for rep in range(8):
            rng = np.random.default_rng(500 + rep)
            n, p = 1000, 6
            W = rng.normal(size=(n, p))
            A = (rng.random(n) < 0.5).astype(int)
            s = W[:, :2].sum(axis=1)
            y = 1.0 + np.abs(s) + (2.0 * A - 1.0) * s + rng.normal(size=n)
            ds = ObservedDataset(W, A, ContinuousOutcome(y))
            kw = dict(
                known_propensity=0.5,
                outcome_menu=[LearnerSpec.lasso("linear", 0.02, interactions=True)],
            )
            r_os = estimate_tem_vips(ds, Estimand.absolute(), "onestep", **kw)
            kw_tml = dict(
                known_propensity=0.5,
                outcome_menu=[LearnerSpec.lasso("logistic", 0.002, interactions=True)],
            )
            r_tml = estimate_tem_vips(ds, Estimand.absolute(), "tml", **kw_tml)
            diff = np.abs(r_os.estimates - r_tml.estimates)
            bound = 2.0 * np.sqrt(r_os.sigma2 / n)
            hits += int((diff < bound).sum())
            total += p
        assert hits / total >= 0.9

    def test_binary_outcome_both_estimators(self, small_binary):
        for est in ("onestep", "tml"):
            res = estimate_tem_vips(
                small_binary, Estimand.relative(), est,
                propensity_menu=[LearnerSpec.lasso("logistic", 0.02)],
                outcome_menu=[LearnerSpec.lasso("logistic", 0.01, interactions=True)],
            )
            assert np.isfinite(res.estimates).all()
            assert np.isfinite(res.std_err).all()
            assert (res.std_err > 0).all()

    def test_survival_both_estimators(self):
        ds = make_survival_dataset(seed=48)
        for est in ("onestep", "tml"):
            res = estimate_tem_vips(
                ds, Estimand.absolute_survival(4), est,
                known_propensity=0.5,
                hazard_menu=[LearnerSpec.lasso("logistic", 0.01, interactions=True)],
            )
            assert np.isfinite(res.estimates).all()
            if est == "tml":
                assert res.diagnostics["tilt_unconverged"] == 0
