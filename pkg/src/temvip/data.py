"""Dataset containers, validation, and preprocessing.

The estimators in this package operate on an :class:`ObservedDataset`: an
``n x p`` covariate matrix, a binary treatment vector, and one outcome
payload (continuous, binary, or right-censored time-to-event on a discrete
grid). Estimation requires covariates that are mean-centered with positive
variance; :func:`center_and_filter` produces such a dataset and reports what
it changed.

Censoring convention: for survival payloads, ``censored[i] == 1`` means the
event time was censored (the event happened strictly after follow-up ended),
``censored[i] == 0`` means the event was observed. This is the opposite of
the "event indicator" many libraries use, so the field is named accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .exceptions import (
    AllColumnsDropped,
    BadTreatmentCode,
    DegenerateOutcome,
    EmptyData,
    NonFiniteData,
    NonPositiveTime,
    SurvivalGridViolation,
)

# Columns whose post-centering mean magnitude is below this multiple of the
# column RMS are left untouched, which makes centering exactly idempotent.
_CENTER_SKIP_REL = 1e-14


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Discrete event-time grid ``1, 2, ..., t_max``."""

    t_max: int

    def __post_init__(self):
        if self.t_max < 1:
            raise SurvivalGridViolation(f"time grid must contain at least one point, got t_max={self.t_max}")

    @property
    def points(self) -> np.ndarray:
        return np.arange(1, self.t_max + 1)

    def contains(self, horizon: int) -> bool:
        return 1 <= horizon <= self.t_max


@dataclass(frozen=True)
class ContinuousOutcome:
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _freeze(np.asarray(self.y, dtype=float)))


@dataclass(frozen=True)
class BinaryOutcome:
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _freeze(np.asarray(self.y, dtype=float)))


@dataclass(frozen=True)
class SurvivalOutcome:
    """Right-censored discrete event times.

    ``time`` holds the follow-up time (min of event and censoring time) on
    the grid, ``censored`` the censoring indicator (1 = censored).
    """

    time: np.ndarray
    censored: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        object.__setattr__(self, "time", _freeze(np.asarray(self.time, dtype=int)))
        object.__setattr__(self, "censored", _freeze(np.asarray(self.censored, dtype=int)))

    @property
    def event(self) -> np.ndarray:
        """Observed-event indicator, the complement of ``censored``."""
        return 1 - self.censored


OutcomePayload = Union[ContinuousOutcome, BinaryOutcome, SurvivalOutcome]


@dataclass(frozen=True)
class ObservedDataset:
    covariates: np.ndarray
    treatment: np.ndarray
    outcome: OutcomePayload
    covariate_names: Tuple[str, ...] = ()

    def __post_init__(self):
        W = np.asarray(self.covariates, dtype=float)
        if W.ndim != 2:
            raise EmptyData(f"covariates must be a 2-d matrix, got ndim={W.ndim}")
        object.__setattr__(self, "covariates", _freeze(W))
        object.__setattr__(self, "treatment", _freeze(np.asarray(self.treatment)))
        if not self.covariate_names:
            object.__setattr__(
                self, "covariate_names", tuple(f"w{j + 1}" for j in range(W.shape[1]))
            )
        else:
            object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class PreprocessReport:
    dropped_columns: Tuple[str, ...]
    centers: np.ndarray
    scale_info: Optional[Tuple[float, float]] = None
    centered_within: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "centers", _freeze(np.asarray(self.centers, dtype=float)))


def validate(ds: ObservedDataset) -> ObservedDataset:
    """Check dataset invariants, returning the dataset unchanged if they hold.

    Raises
    ------
    EmptyData, NonFiniteData, BadTreatmentCode, SurvivalGridViolation
        Each error message names the offending column or row.
    """
    W, A = ds.covariates, ds.treatment
    if ds.n < 2:
        raise EmptyData(f"need at least 2 observations, got n={ds.n}")
    if ds.p < 1:
        raise EmptyData("need at least 1 covariate column")
    if len(ds.covariate_names) != ds.p:
        raise EmptyData(f"{len(ds.covariate_names)} names for {ds.p} covariate columns")
    bad = ~np.isfinite(W)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFiniteData(f"non-finite covariate at row {i}, column {ds.covariate_names[j]!r}")
    if A.shape != (ds.n,):
        raise BadTreatmentCode(f"treatment must be a length-{ds.n} vector")
    if not np.isin(A, (0, 1)).all():
        i = int(np.nonzero(~np.isin(A, (0, 1)))[0][0])
        raise BadTreatmentCode(f"treatment at row {i} is {A[i]!r}; expected 0 or 1")

    out = ds.outcome
    if isinstance(out, (ContinuousOutcome, BinaryOutcome)):
        y = out.y
        if y.shape != (ds.n,):
            raise EmptyData(f"outcome must be a length-{ds.n} vector")
        if not np.isfinite(y).all():
            i = int(np.nonzero(~np.isfinite(y))[0][0])
            raise NonFiniteData(f"non-finite outcome at row {i}")
        if isinstance(out, BinaryOutcome) and not np.isin(y, (0, 1)).all():
            i = int(np.nonzero(~np.isin(y, (0, 1)))[0][0])
            raise NonFiniteData(f"binary outcome at row {i} is {y[i]!r}; expected 0 or 1")
    elif isinstance(out, SurvivalOutcome):
        tt, dd = out.time, out.censored
        if tt.shape != (ds.n,) or dd.shape != (ds.n,):
            raise EmptyData(f"survival time and censoring must be length-{ds.n} vectors")
        if not np.isin(dd, (0, 1)).all():
            i = int(np.nonzero(~np.isin(dd, (0, 1)))[0][0])
            raise SurvivalGridViolation(f"censoring indicator at row {i} is {dd[i]!r}; expected 0 or 1")
        off = (tt < 1) | (tt > out.grid.t_max)
        if off.any():
            i = int(np.nonzero(off)[0][0])
            raise SurvivalGridViolation(
                f"follow-up time {tt[i]} at row {i} is off the grid 1..{out.grid.t_max}"
            )
    else:
        raise EmptyData(f"unrecognized outcome payload {type(out).__name__}")
    return ds


def center_and_filter(
    ds: ObservedDataset, var_tol: float = 1e-12
) -> Tuple[ObservedDataset, PreprocessReport]:
    """Mean-center covariate columns and drop those without variability.

    Covariates are centered but deliberately not scaled to unit variance: the
    importance parameters divide by the covariate second moment already, and
    rescaling would change their units. Columns whose sample variance (ddof=1)
    does not exceed ``var_tol`` are removed and reported. Row order is
    preserved.

    Centering is exactly idempotent: columns whose mean is already negligible
    relative to their RMS are returned bit-identical.
    """
    W = ds.covariates
    means = W.mean(axis=0)
    rms = np.sqrt((W**2).mean(axis=0))
    subtract = np.abs(means) > _CENTER_SKIP_REL * np.maximum(rms, np.finfo(float).tiny)
    centers = np.where(subtract, means, 0.0)
    Wc = W - centers

    variances = Wc.var(axis=0, ddof=1)
    keep = variances > var_tol
    if not keep.any():
        raise AllColumnsDropped(f"no covariate has sample variance above {var_tol}")
    dropped = tuple(name for name, k in zip(ds.covariate_names, keep) if not k)
    kept_names = tuple(name for name, k in zip(ds.covariate_names, keep) if k)

    out = ObservedDataset(
        covariates=Wc[:, keep],
        treatment=ds.treatment,
        outcome=ds.outcome,
        covariate_names=kept_names,
    )
    report = PreprocessReport(
        dropped_columns=dropped,
        centers=centers,
        centered_within=float(np.max(np.abs(out.covariates.mean(axis=0)))),
    )
    return out, report


def rescale_outcome_unit_interval(y: np.ndarray) -> Tuple[np.ndarray, Tuple[float, float]]:
    """Affinely map a continuous outcome onto [0, 1].

    Returns the rescaled vector and ``(min, max)`` so that estimates on the
    rescaled scale can be mapped back by multiplying by ``max - min``.
    """
    y = np.asarray(y, dtype=float)
    lo, hi = float(y.min()), float(y.max())
    if hi <= lo:
        raise DegenerateOutcome(f"outcome is constant at {lo}; cannot rescale to the unit interval")
    return (y - lo) / (hi - lo), (lo, hi)


def discretize_times(raw_times: np.ndarray, bin_width: float) -> Tuple[np.ndarray, TimeGrid]:
    """Bin positive event times onto an integer grid.

    Bin ``k`` contains times in ``((k-1) * bin_width, k * bin_width]``; the
    grid spans ``1 .. ceil(max / bin_width)``. Times already on an integer
    grid pass through unchanged when ``bin_width == 1``.
    """
    if bin_width <= 0:
        raise NonPositiveTime(f"bin width must be positive, got {bin_width}")
    t = np.asarray(raw_times, dtype=float)
    if not np.isfinite(t).all():
        i = int(np.nonzero(~np.isfinite(t))[0][0])
        raise NonPositiveTime(f"non-finite time at row {i}")
    if (t <= 0).any():
        i = int(np.nonzero(t <= 0)[0][0])
        raise NonPositiveTime(f"time {t[i]} at row {i} is not positive")
    # small backoff so boundary times (k * bin_width) land in bin k despite
    # floating-point division error
    bins = np.ceil(t / bin_width - 1e-9).astype(int)
    bins = np.maximum(bins, 1)
    return bins, TimeGrid(int(bins.max()))
