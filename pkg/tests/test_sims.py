import numpy as np
import pytest

from temvip import SimScenario, generate, oracle_truth, run_replicates
from temvip.data import BinaryOutcome, ContinuousOutcome, SurvivalOutcome
from temvip.sims import classification_counts, _covariance_factor


class TestGenerate:
    def test_deterministic(self):
        a = generate(SimScenario("cont_obs", n=64, seed=9, replicate=3))
        b = generate(SimScenario("cont_obs", n=64, seed=9, replicate=3))
        assert np.array_equal(a.covariates, b.covariates)
        assert np.array_equal(a.treatment, b.treatment)
        assert np.array_equal(a.outcome.y, b.outcome.y)

    def test_replicates_differ(self):
        a = generate(SimScenario("cont_obs", n=64, seed=9, replicate=3))
        c = generate(SimScenario("cont_obs", n=64, seed=9, replicate=4))
        assert not np.array_equal(a.covariates, c.covariates)

    def test_cont_obs_shapes(self):
        ds = generate(SimScenario("cont_obs", n=125, seed=0))
        assert ds.covariates.shape == (125, 500)
        assert set(np.unique(ds.treatment)) <= {0, 1}
        assert isinstance(ds.outcome, ContinuousOutcome)

    def test_bin_obs_shapes(self):
        ds = generate(SimScenario("bin_obs", n=80, seed=0))
        assert ds.covariates.shape == (80, 100)
        assert isinstance(ds.outcome, BinaryOutcome)
        assert set(np.unique(ds.outcome.y)) <= {0.0, 1.0}

    def test_tte_rct_grid_and_censor_codes(self):
        ds = generate(SimScenario("tte_rct", n=400, seed=1))
        assert ds.covariates.shape == (400, 300)
        assert isinstance(ds.outcome, SurvivalOutcome)
        assert ds.outcome.time.max() <= 10
        assert ds.outcome.time.min() >= 1
        assert set(np.unique(ds.outcome.censored)) <= {0, 1}

    def test_cont_obs_marginals(self):
        n = 100_000
        ds = generate(SimScenario("cont_obs", n=n, seed=5))
        cols = ds.covariates[:, :8]
        assert np.abs(cols.mean(axis=0)).max() < 4 / np.sqrt(n)
        assert np.abs(cols.var(axis=0) - 1.0).max() < 4 * np.sqrt(2.0 / n)

    def test_tte_rct_treatment_balance(self):
        n = 40_000
        ds = generate(SimScenario("tte_rct", n=n, seed=6))
        assert abs(ds.treatment.mean() - 0.5) < 4 / np.sqrt(n)

    def test_covariances_positive_definite(self):
        for name in ("bin_obs", "tte_rct"):
            L = _covariance_factor(name)
            assert np.isfinite(L).all()
            assert (np.diag(L) > 0).all()


class TestOracleTruth:
    def test_cont_obs_closed_form(self):
        oracle = oracle_truth("cont_obs")
        np.testing.assert_array_equal(oracle.values[:5], np.full(5, 5.0))
        np.testing.assert_array_equal(oracle.values[5:], np.zeros(495))
        assert oracle.tem_set == (0, 1, 2, 3, 4)
        assert oracle.provenance == "closed-form"

    def test_bin_obs_far_covariate_is_null(self):
        oracle = oracle_truth("bin_obs", draws=150_000)
        assert abs(oracle.values[49]) < 3 * oracle.mc_se[49]
        # the in-block modifiers are clearly nonzero
        assert (np.abs(oracle.values[:5]) > 5 * oracle.mc_se[:5]).all()

    def test_doubling_draws_consistent(self):
        a = oracle_truth("bin_obs", draws=60_000, seed=3)
        b = oracle_truth("bin_obs", draws=120_000, seed=3)
        combined = np.sqrt(a.mc_se**2 + b.mc_se**2)
        assert (np.abs(a.values - b.values) < 3 * combined).all()

    def test_tte_truth_signs(self):
        oracle = oracle_truth("tte_rct", draws=100_000)
        assert oracle.tem_set == tuple(range(10))
        # survival contrast moves with each in-block covariate
        assert (np.abs(oracle.values[:10]) > 5 * oracle.mc_se[:10]).all()
        assert np.abs(oracle.values[20:]).max() < 4 * oracle.mc_se[20:].max()


class TestClassificationCounts:
    def test_hand_example(self):
        p = 500
        tem = np.zeros(p, dtype=bool)
        tem[:5] = True  # truth set {1..5}
        pred = np.zeros(p, dtype=bool)
        pred[[0, 1, 5]] = True  # predicted {1, 2, 6}
        fdr, tpr, tnr = classification_counts(tem, pred)
        assert fdr == pytest.approx(1.0 / 3.0)
        assert tpr == pytest.approx(2.0 / 5.0)
        assert tnr == pytest.approx(494.0 / 495.0)

    def test_no_discoveries_fdr_zero(self):
        tem = np.array([True, False, False])
        fdr, tpr, tnr = classification_counts(tem, np.zeros(3, dtype=bool))
        assert fdr == 0.0
        assert tpr == 0.0
        assert tnr == 1.0


class TestRunReplicates:
    def test_small_grid_smoke(self):
        out = run_replicates(
            ["bin_obs"], [150], estimators=("onestep",), reps=2, seed=4,
            oracle_draws=20_000, n_jobs=1,
        )
        assert not out.failures
        assert len(out.metrics) == 1
        m = out.metrics[0]
        assert m.replicates == 2
        assert 0.0 <= m.fdr <= 1.0 and 0.0 <= m.tnr <= 1.0 and 0.0 <= m.tpr <= 1.0
        assert len(out.tidy_rows) == 2 * 100
        row = out.tidy_rows[0]
        assert {"scenario", "n", "rep", "estimator", "covariate", "estimate",
                "std_err", "p_adj", "truth"} <= set(row)

    def test_parallel_matches_serial(self):
        kw = dict(estimators=("onestep",), reps=2, seed=4, oracle_draws=20_000)
        serial = run_replicates(["bin_obs"], [150], n_jobs=1, **kw)
        parallel = run_replicates(["bin_obs"], [150], n_jobs=2, **kw)
        for a, b in zip(serial.tidy_rows, parallel.tidy_rows):
            assert a == b
        assert [m.row() for m in serial.metrics] == [m.row() for m in parallel.metrics]
