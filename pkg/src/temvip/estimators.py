"""One-step and targeted maximum likelihood estimators with Wald inference.

The one-step estimator of covariate j's importance is the weighted average
``sum_i W_ij d_i / sum_i W_ij^2`` of the uncentered effect influence values;
it solves the estimating equation exactly, so the empirical influence-function
means vanish at the estimates by construction.

The TML estimators instead tilt the fitted nuisances along a least-favorable
direction until the influence-function means are negligible, then plug the
tilted fits into the parameter. For continuous and binary outcomes the tilt
is a one-dimensional offset logistic fluctuation of the outcome regression
per covariate (a single update suffices on the absolute scale; the relative
scale re-derives its direction from the updated regression and iterates).
For time-to-event outcomes the conditional hazard is fluctuated over the
long-format at-risk rows and the survival curve rebuilt, iterating until the
fluctuation coefficient is numerically zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from .data import (
    BinaryOutcome,
    ContinuousOutcome,
    ObservedDataset,
    SurvivalOutcome,
    center_and_filter,
    rescale_outcome_unit_interval,
    validate,
)
from .eif import (
    EifMatrix,
    Estimand,
    assemble_eif_matrix,
    event_increments,
    martingale_prefix,
    signed_inverse_weight,
    uncentered_eif_absolute,
    uncentered_eif_absolute_survival,
    uncentered_eif_relative,
    uncentered_eif_relative_survival,
)
from .exceptions import (
    DegenerateVarianceWarning,
    FloorAppliedWarning,
    HazardBoundaryWarning,
    PositiveOutcomeRequired,
    TiltMaxIterWarning,
)
from .glm import LearnerSpec, fit_offset_logistic_slopes, lasso_lambda_max
from .nuisance import (
    DEFAULT_CENSORING_FLOOR,
    DEFAULT_Q_FLOOR,
    DEFAULT_TRUNCATION,
    CrossFitPlan,
    OutcomeRegressionFit,
    PropensityFit,
    SurvivalNuisanceFit,
    _long_design,
    _long_format,
    _outcome_design,
    fit_outcome_regression,
    fit_propensity,
    fit_survival_nuisances,
    lag_one,
)

_LOGIT_HAZ_LIM = float(logit(1.0 - 1e-6))  # tilted hazards stay in [1e-6, 1-1e-6]


@dataclass(frozen=True)
class InferenceConfig:
    alpha: float = 0.05
    tilt_tol: float = 1e-4
    max_tilt_iter: int = 20
    null_threshold: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.null_threshold < 0:
            raise ValueError("null threshold must be >= 0")


@dataclass
class TiltState:
    epsilon: float
    n_iter: int
    converged: bool
    h_max: float


@dataclass
class TemVipResult:
    """Per-covariate estimates with influence-function-based inference."""

    covariate_names: Tuple[str, ...]
    estimates: np.ndarray
    std_err: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    p_value: np.ndarray
    p_adj: np.ndarray
    sigma2: np.ndarray
    n: int
    estimator: str
    estimand: Estimand
    alpha: float
    tem: Optional[np.ndarray] = None
    tilt_states: Optional[List[TiltState]] = None
    diagnostics: Dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    def classify(self, fdr_level: float = 0.05, effect_threshold: float = 0.0) -> np.ndarray:
        self.tem = classify_tems(self.p_adj, self.estimates, fdr_level, effect_threshold)
        return self.tem

    def rows(self):
        tem = self.tem if self.tem is not None else np.zeros(self.p, dtype=bool)
        for j, name in enumerate(self.covariate_names):
            yield {
                "covariate": name,
                "estimate": self.estimates[j],
                "std_err": self.std_err[j],
                "ci_lower": self.ci_lower[j],
                "ci_upper": self.ci_upper[j],
                "p_value": self.p_value[j],
                "p_adj": self.p_adj[j],
                "tem_flag": int(tem[j]),
            }


# ---------------------------------------------------------------------------
# one-step / estimating-equation estimator


def onestep_estimate(W: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve the estimating equations: theta_j = sum_i W_ij d_i / sum_i W_ij^2."""
    W = np.asarray(W, dtype=float)
    return (W.T @ np.asarray(d, dtype=float)) / (W**2).sum(axis=0)


def uncentered_effect_eif(
    ds: ObservedDataset,
    estimand: Estimand,
    g: np.ndarray,
    outcome_fit: Optional[OutcomeRegressionFit] = None,
    survival_fit: Optional[SurvivalNuisanceFit] = None,
    q_floor: float = DEFAULT_Q_FLOOR,
    outcome_values: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-observation uncentered influence values of the base effect parameter."""
    a = ds.treatment
    if estimand.is_survival:
        if survival_fit is None:
            raise ValueError("survival estimands need fitted survival nuisances")
        if estimand.scale == "absolute":
            return uncentered_eif_absolute_survival(ds.outcome, a, g, survival_fit, estimand.horizon)
        return uncentered_eif_relative_survival(
            ds.outcome, a, g, survival_fit, estimand.horizon, q_floor=q_floor
        )
    if outcome_fit is None:
        raise ValueError("non-survival estimands need a fitted outcome regression")
    y = outcome_values if outcome_values is not None else ds.outcome.y
    if estimand.scale == "absolute":
        return uncentered_eif_absolute(y, a, g, outcome_fit.q_obs, outcome_fit.q1, outcome_fit.q0)
    return uncentered_eif_relative(
        y, a, g, outcome_fit.q_obs, outcome_fit.q1, outcome_fit.q0, q_floor=q_floor
    )


# ---------------------------------------------------------------------------
# TML: continuous and binary outcomes


def tml_estimate_continuous(
    y: np.ndarray,
    a: np.ndarray,
    g: np.ndarray,
    W: np.ndarray,
    q_obs: np.ndarray,
    q1: np.ndarray,
    q0: np.ndarray,
    scale: str,
    cfg: InferenceConfig = InferenceConfig(),
    q_floor: float = DEFAULT_Q_FLOOR,
) -> Tuple[np.ndarray, np.ndarray, List[TiltState]]:
    """Tilt the outcome regression per covariate and return plug-in estimates.

    ``y`` must live in [0, 1] (rescale unrestricted outcomes first) and the
    regression values in (0, 1). Returns ``(estimates, d_matrix, states)``
    where column j of ``d_matrix`` holds the uncentered influence values
    evaluated under covariate j's tilted regression.
    """
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    n, p = W.shape
    m2 = (W**2).mean(axis=0)
    siw = signed_inverse_weight(a, g)
    base_obs = (W / m2[None, :]) * siw[:, None]
    base1 = (W / m2[None, :]) / g[:, None]
    base0 = -(W / m2[None, :]) / (1.0 - g)[:, None]

    lo = np.tile(logit(np.clip(q_obs, 1e-12, 1 - 1e-12))[:, None], (1, p))
    l1 = np.tile(logit(np.clip(q1, 1e-12, 1 - 1e-12))[:, None], (1, p))
    l0 = np.tile(logit(np.clip(q0, 1e-12, 1 - 1e-12))[:, None], (1, p))

    # stop well below tilt_tol so the influence-function means clear their
    # tolerance with margin
    stop = cfg.tilt_tol * 1e-3
    active = np.ones(p, dtype=bool)
    n_tilts = np.zeros(p, dtype=int)
    last_eps = np.zeros(p)
    h_max = np.zeros(p)
    relative = scale == "relative"

    for _ in range(cfg.max_tilt_iter):
        if relative:
            H_obs = base_obs / np.maximum(expit(lo), q_floor)
            H1 = base1 / np.maximum(expit(l1), q_floor)
            H0 = base0 / np.maximum(expit(l0), q_floor)
        else:
            H_obs, H1, H0 = base_obs, base1, base0
        h_max = np.maximum(h_max, np.max(np.abs(H_obs), axis=0))
        idx = np.nonzero(active)[0]
        eps = fit_offset_logistic_slopes(H_obs[:, idx], y, lo[:, idx])
        last_eps[idx] = eps
        still = np.abs(eps) >= stop
        upd = idx[still]
        if upd.size:
            lo[:, upd] += eps[still] * H_obs[:, upd]
            l1[:, upd] += eps[still] * H1[:, upd]
            l0[:, upd] += eps[still] * H0[:, upd]
            n_tilts[upd] += 1
        active[idx[~still]] = False
        if not active.any():
            break
    converged = np.abs(last_eps) < cfg.tilt_tol
    if not converged.all():
        warnings.warn(
            f"{int((~converged).sum())} covariate tilt(s) still above tolerance "
            f"after {cfg.max_tilt_iter} iterations",
            TiltMaxIterWarning,
        )

    Qo, Q1, Q0 = expit(lo), expit(l1), expit(l0)
    if relative:
        Q1f = np.maximum(Q1, q_floor)
        Q0f = np.maximum(Q0, q_floor)
        f = np.log(Q1f) - np.log(Q0f)
        d_mat = siw[:, None] * (y[:, None] - Qo) / np.maximum(Qo, q_floor) + f
    else:
        f = Q1 - Q0
        d_mat = siw[:, None] * (y[:, None] - Qo) + f
    theta = (W * f).sum(axis=0) / (W**2).sum(axis=0)
    states = [
        TiltState(epsilon=float(last_eps[j]), n_iter=int(n_tilts[j]),
                  converged=bool(converged[j]), h_max=float(h_max[j]))
        for j in range(p)
    ]
    return theta, d_mat, states


# ---------------------------------------------------------------------------
# TML: right-censored time-to-event outcomes


def _reverse_cumsum(x: np.ndarray, axis: int) -> np.ndarray:
    return np.flip(np.cumsum(np.flip(x, axis=axis), axis=axis), axis=axis)


def tml_estimate_survival(
    outcome: SurvivalOutcome,
    a: np.ndarray,
    g: np.ndarray,
    W: np.ndarray,
    fit: SurvivalNuisanceFit,
    horizon: int,
    scale: str,
    cfg: InferenceConfig = InferenceConfig(),
    q_floor: float = DEFAULT_Q_FLOOR,
    chunk_size: int = 64,
) -> Tuple[np.ndarray, np.ndarray, List[TiltState]]:
    """Iterative hazard-tilting TML for the survival importance parameters.

    Per covariate, the conditional hazard is fluctuated along the
    influence-function direction via an offset logistic fit on the observed
    event increments over the long-format at-risk rows, the survival curves
    are rebuilt, and the step repeats until the fluctuation coefficient is
    numerically zero. Covariates are processed in chunks to bound memory.
    Returns ``(estimates, d_matrix, states)`` as in the continuous case.
    """
    t = int(horizon)
    if t > fit.horizon:
        raise ValueError(f"horizon {t} exceeds fitted range 1..{fit.horizon}")
    a = np.asarray(a, dtype=float)
    abool = a.astype(bool)
    n, p = W.shape
    m2 = (W**2).mean(axis=0)
    siw = signed_inverse_weight(a, g)
    clag1 = lag_one(fit.cens1[:, :t])[:, :, None]
    clag0 = lag_one(fit.cens0[:, :t])[:, :, None]
    d_event, at_risk = event_increments(outcome, t)
    subj, u = _long_format(outcome.time, t)
    y_rows = d_event[subj, u - 1]
    lh1_init = logit(np.clip(fit.haz1[:, :t], 1e-9, 1 - 1e-9))
    lh0_init = logit(np.clip(fit.haz0[:, :t], 1e-9, 1 - 1e-9))

    theta = np.empty(p)
    d_mat = np.empty((n, p))
    states: List[TiltState] = [None] * p  # type: ignore[list-item]
    stop = cfg.tilt_tol * 1e-3
    relative = scale == "relative"
    n_boundary = 0

    for start in range(0, p, chunk_size):
        cols = np.arange(start, min(start + chunk_size, p))
        c = cols.size
        colfac = W[:, cols] / m2[cols][None, :]
        lh1 = np.repeat(lh1_init[:, :, None], c, axis=2)
        lh0 = np.repeat(lh0_init[:, :, None], c, axis=2)
        active = np.ones(c, dtype=bool)
        n_tilts = np.zeros(c, dtype=int)
        last_eps = np.zeros(c)
        h_max = np.zeros(c)

        for _ in range(cfg.max_tilt_iter):
            h1, h0 = expit(lh1), expit(lh0)
            S1 = np.cumprod(1.0 - h1, axis=1)
            S0 = np.cumprod(1.0 - h0, axis=1)
            if relative:
                kappa1 = 1.0 / (clag1 * S1)
                kappa0 = 1.0 / (clag0 * S0)
            else:
                kappa1 = _reverse_cumsum(S1, axis=1) / (clag1 * S1)
                kappa0 = _reverse_cumsum(S0, axis=1) / (clag0 * S0)
            # negative direction: more observed events means lower survival
            H1 = -colfac[:, None, :] * kappa1 / g[:, None, None]
            H0 = colfac[:, None, :] * kappa0 / (1.0 - g)[:, None, None]
            H_obs = np.where(abool[:, None, None], H1, H0)
            H_rows = H_obs[subj, u - 1, :]
            l_obs_rows = np.where(abool[:, None, None], lh1, lh0)[subj, u - 1, :]
            idx = np.nonzero(active)[0]
            h_max[idx] = np.maximum(h_max[idx], np.max(np.abs(H_rows[:, idx]), axis=0))
            eps = fit_offset_logistic_slopes(H_rows[:, idx], y_rows, l_obs_rows[:, idx])
            last_eps[idx] = eps
            still = np.abs(eps) >= stop
            upd = idx[still]
            if upd.size:
                lh1[:, :, upd] += eps[still] * H1[:, :, upd]
                lh0[:, :, upd] += eps[still] * H0[:, :, upd]
                over = (np.abs(lh1[:, :, upd]) > _LOGIT_HAZ_LIM).sum()
                over += (np.abs(lh0[:, :, upd]) > _LOGIT_HAZ_LIM).sum()
                n_boundary += int(over)
                np.clip(lh1[:, :, upd], -_LOGIT_HAZ_LIM, _LOGIT_HAZ_LIM, out=lh1[:, :, upd])
                np.clip(lh0[:, :, upd], -_LOGIT_HAZ_LIM, _LOGIT_HAZ_LIM, out=lh0[:, :, upd])
                n_tilts[upd] += 1
            active[idx[~still]] = False
            if not active.any():
                break
        converged = np.abs(last_eps) < cfg.tilt_tol
        if not converged.all():
            warnings.warn(
                f"{int((~converged).sum())} hazard tilt(s) still above tolerance "
                f"after {cfg.max_tilt_iter} iterations",
                TiltMaxIterWarning,
            )

        h1, h0 = expit(lh1), expit(lh0)
        S1 = np.cumprod(1.0 - h1, axis=1)
        S0 = np.cumprod(1.0 - h0, axis=1)
        S_obs = np.where(abool[:, None, None], S1, S0)
        h_obs = np.where(abool[:, None, None], h1, h0)
        clag_obs = np.where(abool[:, None, None], clag1, clag0)
        incr = at_risk[:, :, None] * (d_event[:, :, None] - h_obs) / (clag_obs * S_obs)
        M = np.cumsum(incr, axis=1)
        if relative:
            s1t = np.maximum(S1[:, t - 1, :], q_floor)
            s0t = np.maximum(S0[:, t - 1, :], q_floor)
            f = np.log(s1t) - np.log(s0t)
            dvals = f - siw[:, None] * M[:, t - 1, :]
        else:
            f = (S1 - S0).sum(axis=1)
            dvals = f - siw[:, None] * (S_obs * M).sum(axis=1)
        theta[cols] = (W[:, cols] * f).sum(axis=0) / (W[:, cols] ** 2).sum(axis=0)
        d_mat[:, cols] = dvals
        for jj, j in enumerate(cols):
            states[j] = TiltState(
                epsilon=float(last_eps[jj]), n_iter=int(n_tilts[jj]),
                converged=bool(converged[jj]), h_max=float(h_max[jj]),
            )

    if n_boundary:
        warnings.warn(
            f"{n_boundary} tilted hazard value(s) hit the (0, 1) boundary and were clipped",
            HazardBoundaryWarning,
        )
    return theta, d_mat, states


# ---------------------------------------------------------------------------
# Wald inference, multiplicity, classification


def benjamini_hochberg(p_values: np.ndarray) -> np.ndarray:
    """Step-up adjusted p-values: q_(i) = min_{k >= i} min(1, m p_(k) / k).

    NaN entries (degenerate-variance covariates) are excluded from the
    adjustment and stay NaN. Ties keep their original order.
    """
    p = np.asarray(p_values, dtype=float)
    out = np.full(p.shape, np.nan)
    valid = ~np.isnan(p)
    pv = p[valid]
    m = pv.size
    if m == 0:
        return out
    order = np.argsort(pv, kind="stable")
    ranked = pv[order] * m / np.arange(1, m + 1)
    adj = np.minimum(1.0, np.minimum.accumulate(ranked[::-1])[::-1])
    restored = np.empty(m)
    restored[order] = adj
    out[valid] = restored
    return out


def wald_inference(
    estimates: np.ndarray,
    sigma2: np.ndarray,
    n: int,
    covariate_names: Sequence[str],
    cfg: InferenceConfig = InferenceConfig(),
    estimator: str = "onestep",
    estimand: Estimand = Estimand.absolute(),
) -> TemVipResult:
    """Wald confidence intervals and (BH-adjusted) p-values from EIF variances.

    ``std_err = sqrt(sigma2 / n)``; the two-sided p-value tests
    ``|theta_j| <= m`` against the alternative (``m = 0`` by default), using
    the standard normal reference. A covariate whose influence values are
    constant (``sigma2 == 0``) gets NaN p-values rather than spurious zeros.
    """
    estimates = np.asarray(estimates, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    se = np.sqrt(sigma2 / n)
    z = norm.ppf(1.0 - cfg.alpha / 2.0)
    ci_lower = estimates - z * se
    ci_upper = estimates + z * se

    degenerate = sigma2 <= 0.0
    if degenerate.any():
        bad = [covariate_names[j] for j in np.nonzero(degenerate)[0][:5]]
        warnings.warn(
            f"degenerate (zero) influence variance for {int(degenerate.sum())} covariate(s), "
            f"e.g. {bad}; their p-values are undefined",
            DegenerateVarianceWarning,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        shifted = np.maximum(np.abs(estimates) - cfg.null_threshold, 0.0)
        p_value = np.where(degenerate, np.nan, np.minimum(1.0, 2.0 * norm.sf(shifted / se)))
    p_adj = benjamini_hochberg(p_value)
    return TemVipResult(
        covariate_names=tuple(covariate_names),
        estimates=estimates,
        std_err=se,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        p_value=p_value,
        p_adj=p_adj,
        sigma2=sigma2,
        n=int(n),
        estimator=estimator,
        estimand=estimand,
        alpha=cfg.alpha,
    )


def classify_tems(
    p_adj: np.ndarray,
    estimates: np.ndarray,
    fdr_level: float = 0.05,
    effect_threshold: float = 0.0,
) -> np.ndarray:
    """Flag covariates significant at the FDR level with a large enough effect."""
    p_adj = np.asarray(p_adj, dtype=float)
    with np.errstate(invalid="ignore"):
        return (p_adj < fdr_level) & (np.abs(np.asarray(estimates)) > effect_threshold)


# ---------------------------------------------------------------------------
# high-level pipeline


def lasso_menu(
    family: str,
    lam_max: float,
    interactions: bool = False,
    n_specs: int = 4,
    ratio_hi: float = 0.4,
    ratio_lo: float = 0.02,
) -> List[LearnerSpec]:
    """A LASSO path menu for the cross-validated selector."""
    lams = np.geomspace(ratio_hi * lam_max, ratio_lo * lam_max, n_specs)
    return [LearnerSpec(family=family, lam=float(l), alpha=1.0, interactions=interactions) for l in lams]


def _default_propensity_menu(ds: ObservedDataset) -> List[LearnerSpec]:
    lam_max = lasso_lambda_max(ds.covariates, np.asarray(ds.treatment, float))
    return lasso_menu("logistic", lam_max)


def _default_outcome_menu(ds, y, family) -> List[LearnerSpec]:
    X = _outcome_design(ds.covariates, np.asarray(ds.treatment, float), True)
    return lasso_menu(family, lasso_lambda_max(X, y), interactions=True)


def estimate_tem_vips(
    dataset: ObservedDataset,
    estimand: Estimand,
    estimator: str = "onestep",
    *,
    propensity_menu: Optional[Sequence[LearnerSpec]] = None,
    outcome_menu: Optional[Sequence[LearnerSpec]] = None,
    hazard_menu: Optional[Sequence[LearnerSpec]] = None,
    censoring_menu: Optional[Sequence[LearnerSpec]] = None,
    known_propensity: Union[None, float, np.ndarray] = None,
    propensity_fit: Optional[PropensityFit] = None,
    km_censoring: bool = False,
    cross_fit: Optional[int] = None,
    seed: int = 0,
    truncation: float = DEFAULT_TRUNCATION,
    q_floor: float = DEFAULT_Q_FLOOR,
    censoring_floor: float = DEFAULT_CENSORING_FLOOR,
    var_tol: float = 1e-12,
    config: InferenceConfig = InferenceConfig(),
) -> TemVipResult:
    """Validate, preprocess, fit nuisances, estimate, and run Wald inference.

    This is the package's front door: it glues the data module, the nuisance
    fitters, the influence-function engine, and the estimators together. See
    the individual functions for the knobs. Menus default to small LASSO
    paths chosen by cross-validation; pass a one-element menu to skip the
    selector, or ``known_propensity`` for randomized designs.
    """
    if estimator not in ("onestep", "tml"):
        raise ValueError(f"unknown estimator {estimator!r}")
    ds = validate(dataset)
    ds, report = center_and_filter(ds, var_tol=var_tol)
    if estimand.is_survival and not isinstance(ds.outcome, SurvivalOutcome):
        raise ValueError("survival estimand on a non-survival outcome")
    if not estimand.is_survival and isinstance(ds.outcome, SurvivalOutcome):
        raise ValueError("non-survival estimand on a survival outcome")
    if (
        estimand.scale == "relative"
        and isinstance(ds.outcome, ContinuousOutcome)
        and np.min(ds.outcome.y) <= 0.0
    ):
        raise PositiveOutcomeRequired(
            "relative effects need strictly positive outcomes (log-ratio of conditional means)"
        )

    plan = CrossFitPlan.stratified(ds.treatment, cross_fit, seed=seed) if cross_fit else None
    if propensity_fit is not None:
        if propensity_fit.g.shape != (ds.n,):
            raise ValueError("supplied propensity fit does not match the dataset size")
        g_fit = propensity_fit
    else:
        g_fit = fit_propensity(
            ds,
            propensity_menu if propensity_menu is not None else _default_propensity_menu(ds),
            plan=plan,
            known=known_propensity,
            truncation=truncation,
            seed=seed,
        )
    diagnostics = {
        "preprocess": {
            "dropped_columns": list(report.dropped_columns),
            "centered_within": report.centered_within,
        },
        "propensity": g_fit.provenance,
        "truncation_hits": g_fit.truncation_hits,
    }

    if estimand.is_survival:
        surv_fit = fit_survival_nuisances(
            ds,
            hazard_menu if hazard_menu is not None else _default_survival_menu(ds, estimand.horizon),
            censoring_specs=censoring_menu,
            plan=plan,
            horizon=estimand.horizon,
            km_censoring=km_censoring,
            censoring_floor=censoring_floor,
            seed=seed,
        )
        diagnostics["hazard"] = surv_fit.provenance
        diagnostics["censoring"] = surv_fit.censoring_provenance
        if estimator == "onestep":
            d = uncentered_effect_eif(ds, estimand, g_fit.g, survival_fit=surv_fit, q_floor=q_floor)
            theta = onestep_estimate(ds.covariates, d)
            eif = assemble_eif_matrix(ds.covariates, d, theta)
            states = None
        else:
            theta, d_mat, states = tml_estimate_survival(
                ds.outcome, ds.treatment, g_fit.g, ds.covariates, surv_fit,
                estimand.horizon, estimand.scale, cfg=config, q_floor=q_floor,
            )
            eif = assemble_eif_matrix(ds.covariates, d_mat, theta)
    else:
        y_raw = ds.outcome.y
        scale_back = 1.0
        if estimator == "tml":
            if isinstance(ds.outcome, BinaryOutcome):
                y_fit, unit = y_raw, True
                tilt_q_floor = q_floor
            elif estimand.scale == "absolute":
                # tilting needs a unit-interval outcome; estimates map back
                y_fit, (lo_y, hi_y) = rescale_outcome_unit_interval(y_raw)
                scale_back = hi_y - lo_y
                unit = True
                tilt_q_floor = q_floor
            else:
                # log-ratio contrasts are scale-invariant, so divide by the max
                # (a pure scaling keeps the estimand) and tilt on [0, 1]
                hi_y = float(np.max(y_raw))
                y_fit = y_raw / hi_y
                unit = True
                tilt_q_floor = q_floor / hi_y
        else:
            y_fit = y_raw
            unit = isinstance(ds.outcome, BinaryOutcome)
            tilt_q_floor = q_floor
        q_fit = fit_outcome_regression(
            ds,
            outcome_menu if outcome_menu is not None else _default_outcome_menu(
                ds, y_fit, "logistic" if unit else "linear"
            ),
            plan=plan,
            outcome_values=y_fit,
            unit_scale=unit,
            seed=seed,
        )
        diagnostics["outcome_regression"] = q_fit.provenance
        if estimator == "onestep":
            d = uncentered_effect_eif(
                ds, estimand, g_fit.g, outcome_fit=q_fit, q_floor=q_floor, outcome_values=y_fit
            )
            theta = onestep_estimate(ds.covariates, d)
            eif = assemble_eif_matrix(ds.covariates, d, theta)
            states = None
        else:
            theta, d_mat, states = tml_estimate_continuous(
                y_fit, ds.treatment, g_fit.g, ds.covariates,
                q_fit.q_obs, q_fit.q1, q_fit.q0, estimand.scale,
                cfg=config, q_floor=tilt_q_floor,
            )
            theta = theta * scale_back
            d_mat = d_mat * scale_back
            eif = assemble_eif_matrix(ds.covariates, d_mat, theta)

    result = wald_inference(
        theta, eif.sigma2, ds.n, ds.covariate_names,
        cfg=config, estimator=estimator, estimand=estimand,
    )
    result.tilt_states = states
    result.diagnostics = diagnostics
    result.diagnostics["eif_column_means"] = [float(v) for v in eif.column_means]
    if states is not None:
        result.diagnostics["tilt_iterations"] = [s.n_iter for s in states]
        result.diagnostics["tilt_unconverged"] = int(sum(not s.converged for s in states))
    return result


def _default_survival_menu(ds: ObservedDataset, horizon: int) -> List[LearnerSpec]:
    out = ds.outcome
    subj, u = _long_format(out.time, horizon)
    X = _long_design(ds.covariates, ds.treatment, subj, u, horizon, True)
    y = ((out.censored[subj] == 0) & (out.time[subj] == u)).astype(float)
    return lasso_menu("logistic", lasso_lambda_max(X, y), interactions=True)
