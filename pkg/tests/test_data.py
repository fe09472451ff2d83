import numpy as np
import pytest

from temvip import (
    BinaryOutcome,
    ContinuousOutcome,
    ObservedDataset,
    SurvivalOutcome,
    TimeGrid,
    center_and_filter,
    discretize_times,
    rescale_outcome_unit_interval,
    validate,
)
from temvip.exceptions import (
    AllColumnsDropped,
    BadTreatmentCode,
    DegenerateOutcome,
    EmptyData,
    NonFiniteData,
    NonPositiveTime,
    SurvivalGridViolation,
)


def _ds(W, A, y):
    return ObservedDataset(np.asarray(W, float), np.asarray(A), ContinuousOutcome(y))


class TestValidate:
    def test_valid_dataset_is_identity(self):
        ds = _ds([[1.0], [2.0], [3.0], [4.0]], [0, 1, 0, 1], np.arange(4.0))
        assert validate(ds) is ds

    def test_bad_treatment_code(self):
        ds = _ds([[1.0], [2.0], [3.0]], [0, 1, 2], np.arange(3.0))
        with pytest.raises(BadTreatmentCode, match="row 2"):
            validate(ds)

    def test_survival_time_off_grid(self):
        out = SurvivalOutcome([1, 0, 2], [0, 0, 1], TimeGrid(3))
        ds = ObservedDataset(np.ones((3, 1)) * [[1.0], [2.0], [3.0]], [0, 1, 0], out)
        with pytest.raises(SurvivalGridViolation, match="row 1"):
            validate(ds)

    def test_non_finite_covariate_names_location(self):
        W = np.ones((3, 2))
        W[2, 1] = np.nan
        ds = ObservedDataset(W, [0, 1, 0], ContinuousOutcome(np.arange(3.0)),
                             covariate_names=("age", "dose"))
        with pytest.raises(NonFiniteData, match="dose"):
            validate(ds)

    def test_too_few_rows(self):
        with pytest.raises(EmptyData):
            validate(_ds([[1.0]], [1], [0.5]))

    def test_binary_outcome_codes(self):
        ds = ObservedDataset(np.ones((3, 1)), [0, 1, 0], BinaryOutcome([0, 1, 1]))
        ds = ObservedDataset(
            np.array([[1.0], [2.0], [0.5]]), [0, 1, 0], BinaryOutcome([0, 1, 1])
        )
        assert validate(ds) is ds
        bad = ObservedDataset(
            np.array([[1.0], [2.0], [0.5]]), [0, 1, 0], BinaryOutcome(np.array([0.0, 0.5, 1.0]))
        )
        with pytest.raises(NonFiniteData):
            validate(bad)


class TestCenterAndFilter:
    def test_centering_subtracts_mean(self):
        ds = _ds([[1.0], [2.0], [3.0]], [0, 1, 0], np.zeros(3))
        out, report = center_and_filter(ds)
        np.testing.assert_allclose(out.covariates[:, 0], [-1.0, 0.0, 1.0])
        assert out.covariates[:, 0].var(ddof=1) == pytest.approx(1.0)
        assert report.dropped_columns == ()

    def test_zero_variance_column_dropped(self):
        W = np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]])
        ds = ObservedDataset(W, [0, 1, 0], ContinuousOutcome(np.zeros(3)),
                             covariate_names=("a", "b"))
        out, report = center_and_filter(ds)
        assert out.covariate_names == ("a",)
        assert report.dropped_columns == ("b",)

    def test_all_columns_dropped(self):
        W = np.full((4, 2), 3.0)
        ds = ObservedDataset(W, [0, 1, 0, 1], ContinuousOutcome(np.zeros(4)))
        with pytest.raises(AllColumnsDropped):
            center_and_filter(ds)

    def test_centering_idempotent_exactly(self):
        rng = np.random.default_rng(5)
        W = rng.normal(3.0, 2.0, size=(40, 4))
        ds = ObservedDataset(W, rng.integers(0, 2, 40), ContinuousOutcome(np.zeros(40)))
        once, _ = center_and_filter(ds)
        twice, _ = center_and_filter(once)
        assert np.array_equal(once.covariates, twice.covariates)

    def test_row_order_and_column_order_preserved(self):
        rng = np.random.default_rng(6)
        W = rng.normal(size=(10, 3))
        ds = ObservedDataset(W, rng.integers(0, 2, 10), ContinuousOutcome(np.zeros(10)),
                             covariate_names=("x", "y", "z"))
        out, _ = center_and_filter(ds)
        assert out.covariate_names == ("x", "y", "z")
        np.testing.assert_allclose(out.covariates, W - W.mean(axis=0), atol=1e-14)


class TestRescaleOutcome:
    def test_affine_map(self):
        y2, scale = rescale_outcome_unit_interval(np.array([0.0, 5.0, 10.0]))
        np.testing.assert_allclose(y2, [0.0, 0.5, 1.0])
        assert scale == (0.0, 10.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateOutcome):
            rescale_outcome_unit_interval(np.array([3.0, 3.0]))

    def test_already_unit_interval_unchanged(self):
        y2, scale = rescale_outcome_unit_interval(np.array([0.0, 0.25, 1.0]))
        np.testing.assert_allclose(y2, [0.0, 0.25, 1.0])
        assert scale == (0.0, 1.0)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        y = rng.normal(10.0, 4.0, size=200)
        y2, (lo, hi) = rescale_outcome_unit_interval(y)
        np.testing.assert_allclose(y2 * (hi - lo) + lo, y, atol=1e-12)


class TestDiscretizeTimes:
    def test_ceiling_map(self):
        bins, grid = discretize_times(np.array([0.4, 1.0, 1.7]), 1.0)
        np.testing.assert_array_equal(bins, [1, 1, 2])
        assert grid.t_max == 2

    def test_integers_unchanged(self):
        t = np.array([1.0, 4.0, 2.0, 7.0])
        bins, grid = discretize_times(t, 1.0)
        np.testing.assert_array_equal(bins, t.astype(int))
        assert grid.t_max == 7

    def test_zero_time_rejected(self):
        with pytest.raises(NonPositiveTime):
            discretize_times(np.array([0.0, 1.0]), 1.0)

    def test_boundary_goes_to_lower_bin(self):
        bins, _ = discretize_times(np.array([0.2, 0.4]), 0.2)
        np.testing.assert_array_equal(bins, [1, 2])
