"""Efficient influence functions for the four importance parameters.

Every estimand here projects a per-observation treatment-effect contrast onto
each centered covariate: the parameter for covariate j is
``E[f(W) W_j] / E[W_j^2]`` where ``f`` is the conditional effect on the
chosen scale (difference or log-ratio of outcome regressions; difference of
restricted-mean-survival sums or log-ratio of survival probabilities). The
influence function of that projection has the common shape

    D_j(O) = W_j / E[W_j^2] * (d(O) - W_j * theta_j)

where ``d`` is the uncentered influence function of the underlying effect
parameter. This module computes ``d`` for each estimand kind and assembles
the per-covariate matrix ``D`` along with its column second moments, which
drive all standard errors.

For survival kinds the ``d`` functions use the observed-event increment
``(1 - censored) * 1{follow-up == u}``; censoring enters through the left
limit of its survival curve (its value at the previous grid point).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .data import SurvivalOutcome
from .exceptions import FloorAppliedWarning, GridExceeded
from .nuisance import DEFAULT_Q_FLOOR, SurvivalNuisanceFit, lag_one


@dataclass(frozen=True)
class Estimand:
    """Which importance parameter to target.

    ``scale`` is "absolute" (difference contrast) or "relative" (log-ratio
    contrast); ``horizon`` is the grid time for survival outcomes and must be
    None otherwise.
    """

    scale: str
    horizon: Optional[int] = None

    def __post_init__(self):
        if self.scale not in ("absolute", "relative"):
            raise ValueError(f"unknown scale {self.scale!r}")

    @property
    def is_survival(self) -> bool:
        return self.horizon is not None

    @classmethod
    def absolute(cls) -> "Estimand":
        return cls("absolute")

    @classmethod
    def relative(cls) -> "Estimand":
        return cls("relative")

    @classmethod
    def absolute_survival(cls, horizon: int) -> "Estimand":
        return cls("absolute", int(horizon))

    @classmethod
    def relative_survival(cls, horizon: int) -> "Estimand":
        return cls("relative", int(horizon))

    def label(self) -> str:
        base = self.scale
        return f"{base}-survival(t={self.horizon})" if self.is_survival else base


def observed_arm_prob(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """P[A = a_i | W_i]: g where treated, 1 - g where not."""
    a = np.asarray(a, dtype=float)
    return a * g + (1.0 - a) * (1.0 - g)


def signed_inverse_weight(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """(2A - 1) / P[A = observed arm | W], the usual signed inverse weight."""
    a = np.asarray(a, dtype=float)
    return (2.0 * a - 1.0) / observed_arm_prob(a, g)


def _floor(values: np.ndarray, floor: float, what: str) -> np.ndarray:
    hits = int(np.sum(values < floor))
    if hits:
        warnings.warn(f"{what}: {hits} value(s) floored at {floor}", FloorAppliedWarning)
        return np.maximum(values, floor)
    return values


def uncentered_eif_absolute(y, a, g, q_obs, q1, q0) -> np.ndarray:
    """Uncentered influence function of the average treatment effect."""
    return signed_inverse_weight(a, g) * (np.asarray(y, float) - q_obs) + q1 - q0


def uncentered_eif_relative(y, a, g, q_obs, q1, q0, q_floor: float = DEFAULT_Q_FLOOR) -> np.ndarray:
    """Uncentered influence function of the log-ratio of expected outcomes.

    Outcome-regression values below ``q_floor`` are floored (with a warning)
    before they appear in denominators or logs.
    """
    q_obs = _floor(np.asarray(q_obs, float), q_floor, "relative effect: observed-arm regression")
    q1 = _floor(np.asarray(q1, float), q_floor, "relative effect: treated-arm regression")
    q0 = _floor(np.asarray(q0, float), q_floor, "relative effect: control-arm regression")
    resid = (np.asarray(y, float) - q_obs) / q_obs
    return signed_inverse_weight(a, g) * resid + np.log(q1) - np.log(q0)


def event_increments(outcome: SurvivalOutcome, horizon: int) -> Tuple[np.ndarray, np.ndarray]:
    """Observed-event indicator and at-risk matrices on grid times 1..horizon."""
    u = np.arange(1, horizon + 1)[None, :]
    time = outcome.time[:, None]
    at_risk = (time >= u).astype(float)
    d_event = ((outcome.censored[:, None] == 0) & (time == u)).astype(float)
    return d_event, at_risk


def martingale_prefix(d_event, at_risk, haz_obs, surv_obs, cens_lag_obs) -> np.ndarray:
    """Running sums M(u) of the inverse-weighted hazard residuals.

    M(u) = sum_{v <= u, subject at risk at v}
               (dN(v) - hazard(v)) / (censoring(v-) * survival(v)).
    """
    increments = at_risk * (d_event - haz_obs) / (cens_lag_obs * surv_obs)
    return np.cumsum(increments, axis=1)


def _check_horizon(fit: SurvivalNuisanceFit, horizon: int) -> None:
    if horizon > fit.horizon:
        raise GridExceeded(
            f"requested horizon {horizon} exceeds the fitted range 1..{fit.horizon}"
        )


def uncentered_eif_absolute_survival(
    outcome: SurvivalOutcome,
    a: np.ndarray,
    g: np.ndarray,
    fit: SurvivalNuisanceFit,
    horizon: int,
) -> np.ndarray:
    """Uncentered influence function of the difference in restricted mean
    survival times up to ``horizon``.

    Equals ``sum_{u<=t} [S(u|1,W) - S(u|0,W)]`` plus an inverse-weighted
    martingale correction on the observed arm; the correction enters with a
    negative sign because an excess of observed events is evidence of lower
    survival.
    """
    _check_horizon(fit, horizon)
    t = horizon
    haz_obs, surv_obs, cens_lag = (m[:, :t] for m in fit.observed(a))
    d_event, at_risk = event_increments(outcome, t)
    M = martingale_prefix(d_event, at_risk, haz_obs, surv_obs, cens_lag)
    plug = (fit.surv1[:, :t] - fit.surv0[:, :t]).sum(axis=1)
    correction = (surv_obs * M).sum(axis=1)
    return plug - signed_inverse_weight(a, g) * correction


def uncentered_eif_relative_survival(
    outcome: SurvivalOutcome,
    a: np.ndarray,
    g: np.ndarray,
    fit: SurvivalNuisanceFit,
    horizon: int,
    q_floor: float = DEFAULT_Q_FLOOR,
) -> np.ndarray:
    """Uncentered influence function of the log-ratio of survival at ``horizon``."""
    _check_horizon(fit, horizon)
    t = horizon
    haz_obs, surv_obs, cens_lag = (m[:, :t] for m in fit.observed(a))
    d_event, at_risk = event_increments(outcome, t)
    M = martingale_prefix(d_event, at_risk, haz_obs, surv_obs, cens_lag)
    s1 = _floor(fit.surv1[:, t - 1], q_floor, "relative survival: treated-arm survival")
    s0 = _floor(fit.surv0[:, t - 1], q_floor, "relative survival: control-arm survival")
    return np.log(s1) - np.log(s0) - signed_inverse_weight(a, g) * M[:, t - 1]


@dataclass(frozen=True)
class EifMatrix:
    """Per-observation, per-covariate influence values and their second moments."""

    matrix: np.ndarray
    sigma2: np.ndarray
    second_moments: np.ndarray

    @property
    def column_means(self) -> np.ndarray:
        return self.matrix.mean(axis=0)


def assemble_eif_matrix(W: np.ndarray, d: np.ndarray, estimates: np.ndarray) -> EifMatrix:
    """Build D[i, j] = W_ij / mean_k(W_kj^2) * (d_i - W_ij * theta_j).

    ``d`` may be a single vector shared by all covariates (one-step and
    estimating-equation use) or an (n, p) matrix whose column j was evaluated
    under covariate j's own targeted nuisances (TML use). ``sigma2`` holds
    the column means of D^2, the variance estimates behind every Wald
    interval here.
    """
    W = np.asarray(W, dtype=float)
    d = np.asarray(d, dtype=float)
    m2 = (W**2).mean(axis=0)
    inner = (d if d.ndim == 2 else d[:, None]) - W * np.asarray(estimates, float)[None, :]
    D = W * inner / m2[None, :]
    return EifMatrix(matrix=D, sigma2=(D**2).mean(axis=0), second_moments=m2)
