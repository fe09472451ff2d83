"""Nuisance-parameter estimation.

Fits the quantities every estimator in this package needs but nobody cares
about per se: the propensity score, the conditional outcome regression, and
for time-to-event data the discrete-time event hazard, its implied survival
curve, and the censoring process. Learners come from a user-supplied menu of
:class:`~temvip.glm.LearnerSpec` configurations; when the menu has more than
one entry a discrete cross-validated selector picks the one with the best
held-out loss. An optional cross-fitting plan makes every row's fitted value
come from a model trained without that row's fold.

All fitted objects expose plain numpy arrays evaluated on the training rows
(and, where relevant, on both treatment arms), which is the only surface the
influence-function machinery needs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .data import BinaryOutcome, ContinuousOutcome, ObservedDataset, SurvivalOutcome, TimeGrid
from .exceptions import (
    AllLearnersFailed,
    CensoringPositivityWarning,
    GridExceeded,
    NoEventsBeforeHorizon,
    TemvipError,
    TruncationWarning,
)
from .glm import GlmFit, LearnerSpec, fit_glm

DEFAULT_TRUNCATION = 0.01
DEFAULT_Q_FLOOR = 1e-3
DEFAULT_CENSORING_FLOOR = 0.01


# ---------------------------------------------------------------------------
# cross-fitting plans


@dataclass(frozen=True)
class CrossFitPlan:
    """Subject-level fold assignment, stratified by treatment arm."""

    n_folds: int
    fold_of: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fold_of, dtype=int)
        object.__setattr__(self, "fold_of", f)
        if self.n_folds < 2:
            raise ValueError("cross-fitting needs at least 2 folds")
        if set(np.unique(f)) != set(range(self.n_folds)):
            raise ValueError("fold assignment must cover folds 0..K-1")

    @classmethod
    def stratified(cls, treatment: np.ndarray, n_folds: int, seed: int = 0) -> "CrossFitPlan":
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        fold_of = np.empty(len(treatment), dtype=int)
        for arm in (0, 1):
            idx = np.nonzero(np.asarray(treatment) == arm)[0]
            if idx.size < n_folds:
                raise ValueError(f"arm {arm} has {idx.size} rows, fewer than {n_folds} folds")
            perm = rng.permutation(idx)
            fold_of[perm] = np.arange(perm.size) % n_folds
        return cls(n_folds=n_folds, fold_of=fold_of)

    def validate_arms(self, treatment: np.ndarray) -> None:
        for k in range(self.n_folds):
            arms = np.unique(np.asarray(treatment)[self.fold_of == k])
            if len(arms) < 2:
                raise ValueError(f"fold {k} does not contain both treatment arms")


def _resolve_folds(
    treatment: np.ndarray, plan: Optional[CrossFitPlan], cv_folds: int, seed: int
) -> np.ndarray:
    if plan is not None:
        return plan.fold_of
    return CrossFitPlan.stratified(treatment, cv_folds, seed=seed).fold_of


# ---------------------------------------------------------------------------
# discrete cross-validated selection


def _heldout_loss(family: str, y: np.ndarray, pred: np.ndarray) -> float:
    if family == "linear":
        return float(np.mean((y - pred) ** 2))
    p = np.clip(pred, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def cv_select(
    X: np.ndarray,
    y: np.ndarray,
    specs: Sequence[LearnerSpec],
    fold_of: np.ndarray,
    groups: Optional[np.ndarray] = None,
) -> Tuple[int, np.ndarray]:
    """Pick the menu entry with the smallest mean held-out loss.

    ``groups`` maps each design row to a subject; folds are applied at the
    subject level so repeated measures never straddle a fold boundary. Ties
    break toward the lowest index. A spec that errors on some fold gets an
    infinite loss; if every spec fails, :class:`AllLearnersFailed` is raised.
    """
    if len(specs) == 0:
        raise AllLearnersFailed("empty learner menu")
    if len(specs) == 1:
        return 0, np.zeros(1)
    row_fold = fold_of if groups is None else fold_of[groups]
    n_folds = int(row_fold.max()) + 1
    losses = np.zeros(len(specs))
    for s, spec in enumerate(specs):
        fold_losses = []
        try:
            for k in range(n_folds):
                test = row_fold == k
                fit = fit_glm(X[~test], y[~test], spec)
                fold_losses.append(_heldout_loss(spec.family, y[test], fit.predict(X[test])))
            losses[s] = float(np.mean(fold_losses))
        except TemvipError:
            losses[s] = np.inf
    if not np.isfinite(losses).any():
        raise AllLearnersFailed("every learner in the menu failed during cross-validation")
    return int(np.argmin(losses)), losses


# ---------------------------------------------------------------------------
# propensity score


@dataclass
class PropensityFit:
    """Treatment probabilities evaluated on the training rows, truncated into
    ``[truncation, 1 - truncation]``."""

    g: np.ndarray
    truncation: float
    provenance: str
    truncation_hits: int = 0
    spec: Optional[LearnerSpec] = None
    model: Optional[GlmFit] = None
    fold_models: Optional[List[GlmFit]] = None
    plan: Optional[CrossFitPlan] = None
    cv_losses: Optional[np.ndarray] = None


def _truncate(g_raw: np.ndarray, truncation: float, what: str) -> Tuple[np.ndarray, int]:
    hits = int(np.sum((g_raw < truncation) | (g_raw > 1.0 - truncation)))
    if hits:
        warnings.warn(
            f"{hits} {what} value(s) truncated into [{truncation}, {1 - truncation}]",
            TruncationWarning,
        )
    return np.clip(g_raw, truncation, 1.0 - truncation), hits


def fit_propensity(
    ds: ObservedDataset,
    specs: Sequence[LearnerSpec],
    plan: Optional[CrossFitPlan] = None,
    known: Union[None, float, np.ndarray] = None,
    truncation: float = DEFAULT_TRUNCATION,
    cv_folds: int = 5,
    seed: int = 0,
) -> PropensityFit:
    """Estimate (or accept as known) the probability of treatment given covariates.

    ``known`` short-circuits estimation: pass the randomization probability of
    a trial (a constant, or per-row values when the design dictates them).
    Otherwise the cross-validated selector runs over ``specs`` (all logistic)
    and, under a :class:`CrossFitPlan`, each row is evaluated by the model
    trained on the other folds.
    """
    n = ds.n
    if known is not None:
        g_raw = np.broadcast_to(np.asarray(known, dtype=float), (n,)).copy()
        g, hits = _truncate(g_raw, truncation, "known propensity")
        return PropensityFit(g=g, truncation=truncation, provenance="known", truncation_hits=hits)

    for spec in specs:
        if spec.family != "logistic":
            raise ValueError(f"propensity learners must be logistic, got {spec.label}")
    X = ds.covariates
    A = np.asarray(ds.treatment, dtype=float)
    if len(specs) > 1:
        fold_of = _resolve_folds(ds.treatment, plan, cv_folds, seed)
        best, losses = cv_select(X, A, specs, fold_of)
    else:
        best, losses = 0, np.zeros(1)
    spec = specs[best]

    if plan is not None:
        plan.validate_arms(ds.treatment)
        g_raw = np.empty(n)
        fold_models = []
        for k in range(plan.n_folds):
            test = plan.fold_of == k
            fit = fit_glm(X[~test], A[~test], spec)
            fold_models.append(fit)
            g_raw[test] = fit.predict(X[test])
        g, hits = _truncate(g_raw, truncation, "propensity")
        return PropensityFit(
            g=g, truncation=truncation, provenance=spec.label, truncation_hits=hits,
            spec=spec, fold_models=fold_models, plan=plan, cv_losses=losses,
        )

    fit = fit_glm(X, A, spec)
    g, hits = _truncate(fit.predict(X), truncation, "propensity")
    return PropensityFit(
        g=g, truncation=truncation, provenance=spec.label, truncation_hits=hits,
        spec=spec, model=fit, cv_losses=losses,
    )


# ---------------------------------------------------------------------------
# conditional outcome regression


def _outcome_design(W: np.ndarray, a: np.ndarray, interactions: bool) -> np.ndarray:
    cols = [np.asarray(a, dtype=float)[:, None], W]
    if interactions:
        cols.append(W * np.asarray(a, dtype=float)[:, None])
    return np.concatenate(cols, axis=1)


@dataclass
class OutcomeRegressionFit:
    """Conditional-outcome values on the training rows and both arms."""

    q_obs: np.ndarray
    q1: np.ndarray
    q0: np.ndarray
    unit_interval: bool
    provenance: str
    spec: Optional[LearnerSpec] = None
    model: Optional[GlmFit] = None
    fold_models: Optional[List[GlmFit]] = None
    plan: Optional[CrossFitPlan] = None
    cv_losses: Optional[np.ndarray] = None


def fit_outcome_regression(
    ds: ObservedDataset,
    specs: Sequence[LearnerSpec],
    plan: Optional[CrossFitPlan] = None,
    outcome_values: Optional[np.ndarray] = None,
    unit_scale: bool = False,
    cv_folds: int = 5,
    seed: int = 0,
) -> OutcomeRegressionFit:
    """Fit the regression of the outcome on treatment and covariates.

    Binary outcomes (and continuous outcomes passed on a rescaled [0, 1]
    scale via ``outcome_values`` with ``unit_scale=True``) use the logistic
    family, so fitted values stay inside the unit interval; unrestricted
    continuous outcomes use the linear family. Specs with the interaction
    flag include treatment-by-covariate columns.
    """
    if outcome_values is not None:
        y = np.asarray(outcome_values, dtype=float)
        unit = unit_scale
    elif isinstance(ds.outcome, BinaryOutcome):
        y = ds.outcome.y
        unit = True
    elif isinstance(ds.outcome, ContinuousOutcome):
        y = ds.outcome.y
        unit = unit_scale
    else:
        raise ValueError("outcome regression needs a continuous or binary payload")
    family = "logistic" if unit else "linear"
    for spec in specs:
        if spec.family != family:
            raise ValueError(f"outcome learners must be {family} here, got {spec.label}")

    W = ds.covariates
    A = np.asarray(ds.treatment, dtype=float)
    ones = np.ones(ds.n)
    zeros = np.zeros(ds.n)

    def design(spec, a):
        return _outcome_design(W, a, spec.interactions)

    # menu entries may differ in their interaction flag, so CV uses each
    # spec's own design
    if len(specs) > 1:
        fold_of = _resolve_folds(ds.treatment, plan, cv_folds, seed)
        losses = np.zeros(len(specs))
        for s, spec in enumerate(specs):
            Xs = design(spec, A)
            try:
                fold_losses = []
                for k in range(int(fold_of.max()) + 1):
                    test = fold_of == k
                    fit = fit_glm(Xs[~test], y[~test], spec)
                    fold_losses.append(_heldout_loss(family, y[test], fit.predict(Xs[test])))
                losses[s] = float(np.mean(fold_losses))
            except TemvipError:
                losses[s] = np.inf
        if not np.isfinite(losses).any():
            raise AllLearnersFailed("every outcome learner failed during cross-validation")
        best = int(np.argmin(losses))
    else:
        best, losses = 0, np.zeros(1)
    spec = specs[best]

    if plan is not None:
        plan.validate_arms(ds.treatment)
        q_obs = np.empty(ds.n)
        q1 = np.empty(ds.n)
        q0 = np.empty(ds.n)
        fold_models = []
        for k in range(plan.n_folds):
            test = plan.fold_of == k
            fit = fit_glm(design(spec, A)[~test], y[~test], spec)
            fold_models.append(fit)
            q_obs[test] = fit.predict(design(spec, A)[test])
            q1[test] = fit.predict(design(spec, ones)[test])
            q0[test] = fit.predict(design(spec, zeros)[test])
        return OutcomeRegressionFit(
            q_obs=q_obs, q1=q1, q0=q0, unit_interval=unit, provenance=spec.label,
            spec=spec, fold_models=fold_models, plan=plan, cv_losses=losses,
        )

    fit = fit_glm(design(spec, A), y, spec)
    return OutcomeRegressionFit(
        q_obs=fit.predict(design(spec, A)),
        q1=fit.predict(design(spec, ones)),
        q0=fit.predict(design(spec, zeros)),
        unit_interval=unit, provenance=spec.label, spec=spec, model=fit, cv_losses=losses,
    )


# ---------------------------------------------------------------------------
# survival nuisances: pooled discrete-time hazards, survival, censoring


@dataclass
class _PooledHazardModel:
    """Structured view of a pooled logistic hazard fit.

    Long-format design columns: time dummies for grid points 2..horizon, the
    treatment indicator, the covariates, and optionally their interactions
    with treatment.
    """

    fit: GlmFit
    horizon: int
    p: int
    interactions: bool

    def _segments(self):
        coef = self.fit.coef
        t = self.horizon
        tc = coef[: t - 1]
        a_coef = coef[t - 1]
        w_coef = coef[t : t + self.p]
        aw_coef = coef[t + self.p : t + 2 * self.p] if self.interactions else None
        return tc, a_coef, w_coef, aw_coef

    def rates(self, W: np.ndarray, arm: int) -> np.ndarray:
        """Hazard matrix (n, horizon) for every subject under the given arm."""
        if self.fit.coef.size == 0:
            rate = float(expit(np.clip(self.fit.intercept, -30.0, 30.0)))
            return np.full((W.shape[0], self.horizon), rate)
        tc, a_coef, w_coef, aw_coef = self._segments()
        base = self.fit.intercept + W @ w_coef + arm * a_coef
        if aw_coef is not None:
            base = base + arm * (W @ aw_coef)
        time_part = np.concatenate(([0.0], tc))
        eta = base[:, None] + time_part[None, :]
        return expit(np.clip(eta, -30.0, 30.0))


def _long_format(time: np.ndarray, horizon: int):
    """Row indices and grid times of the at-risk expansion u <= min(time, horizon)."""
    lengths = np.minimum(time, horizon)
    subj = np.repeat(np.arange(time.shape[0]), lengths)
    u = np.concatenate([np.arange(1, L + 1) for L in lengths]) if len(lengths) else np.array([], int)
    return subj, u


def _long_design(W, A, subj, u, horizon, interactions):
    n_rows = subj.shape[0]
    dummies = np.zeros((n_rows, horizon - 1))
    for k in range(2, horizon + 1):
        dummies[:, k - 2] = u == k
    a = np.asarray(A, dtype=float)[subj]
    cols = [dummies, a[:, None], W[subj]]
    if interactions:
        cols.append(W[subj] * a[:, None])
    return np.concatenate(cols, axis=1)


def km_censoring_by_arm(
    time: np.ndarray, censored: np.ndarray, treatment: np.ndarray, horizon: int
) -> np.ndarray:
    """Product-limit censoring-survival curves, stratified by arm only.

    Returns a (2, horizon) array: row ``a`` holds ``P[C > u | A=a]`` for
    ``u = 1..horizon``. Within a grid point, events precede censorings, so
    subjects with an observed event at ``u`` are not in the censoring risk
    set at ``u``.
    """
    curves = np.ones((2, horizon))
    for arm in (0, 1):
        sel = np.asarray(treatment) == arm
        t_arm, c_arm = time[sel], censored[sel]
        surv = 1.0
        for u in range(1, horizon + 1):
            at_risk = np.sum(t_arm >= u) - np.sum((t_arm == u) & (c_arm == 0))
            d_cens = np.sum((t_arm == u) & (c_arm == 1))
            if at_risk > 0:
                surv *= 1.0 - d_cens / at_risk
            curves[arm, u - 1] = surv
    return curves


@dataclass
class SurvivalNuisanceFit:
    """Event hazard, survival, and censoring processes on the grid.

    All matrices are (n, horizon) with column ``u-1`` holding the value at
    grid time ``u``. ``surv*`` is the running product of one minus the
    hazard, so ``S(0) = 1`` implicitly and the curves are nonincreasing.
    Censoring values are floored at ``censoring_floor``.
    """

    grid: TimeGrid
    horizon: int
    haz1: np.ndarray
    haz0: np.ndarray
    surv1: np.ndarray
    surv0: np.ndarray
    cens1: np.ndarray
    cens0: np.ndarray
    censoring_floor: float
    provenance: str
    censoring_provenance: str
    hazard_spec: Optional[LearnerSpec] = None
    hazard_models: Optional[List[_PooledHazardModel]] = None
    plan: Optional[CrossFitPlan] = None

    def observed(self, treatment: np.ndarray):
        """(hazard, survival, lagged censoring) matrices at each row's own arm."""
        A = np.asarray(treatment, dtype=bool)[:, None]
        haz = np.where(A, self.haz1, self.haz0)
        surv = np.where(A, self.surv1, self.surv0)
        cens = np.where(A, self.cens1, self.cens0)
        return haz, surv, lag_one(cens)


def lag_one(c: np.ndarray) -> np.ndarray:
    """Shift censoring curves one grid point right: column u holds c(u-1), c(0)=1."""
    out = np.ones_like(c)
    out[..., 1:] = c[..., :-1]
    return out


def survival_from_hazard(haz: np.ndarray) -> np.ndarray:
    return np.cumprod(1.0 - haz, axis=-1)


def fit_survival_nuisances(
    ds: ObservedDataset,
    hazard_specs: Sequence[LearnerSpec],
    censoring_specs: Optional[Sequence[LearnerSpec]] = None,
    plan: Optional[CrossFitPlan] = None,
    horizon: Optional[int] = None,
    km_censoring: bool = False,
    censoring_floor: float = DEFAULT_CENSORING_FLOOR,
    cv_folds: int = 5,
    seed: int = 0,
) -> SurvivalNuisanceFit:
    """Fit discrete-time event and censoring hazards from a long-format expansion.

    The data are expanded to one row per subject per grid time
    ``u <= min(follow-up, horizon)``. The event hazard is a penalized
    logistic regression of the observed-event indicator on time dummies,
    treatment, covariates, and (per spec) interactions; the censoring hazard
    is fitted analogously on the censoring indicator with event rows removed
    from its risk set (events precede censorings within a grid point). With
    ``km_censoring`` the censoring process is instead the Kaplan-Meier
    product-limit estimator stratified by arm only. Folds, when used, are
    assigned at the subject level.
    """
    out = ds.outcome
    if not isinstance(out, SurvivalOutcome):
        raise ValueError("survival nuisances need a survival outcome payload")
    horizon = out.grid.t_max if horizon is None else int(horizon)
    if not out.grid.contains(horizon):
        raise GridExceeded(f"horizon {horizon} is off the grid 1..{out.grid.t_max}")
    censoring_specs = hazard_specs if censoring_specs is None else censoring_specs

    W = ds.covariates
    A = ds.treatment
    time, censored = out.time, out.censored
    subj, u = _long_format(time, horizon)
    event_rows = ((censored[subj] == 0) & (time[subj] == u)).astype(float)
    if event_rows.sum() == 0:
        raise NoEventsBeforeHorizon(f"no observed events at or before the horizon {horizon}")

    fold_cache = {}

    def subject_folds():
        if "f" not in fold_cache:
            fold_cache["f"] = _resolve_folds(A, plan, cv_folds, seed)
        return fold_cache["f"]

    def fit_hazard(specs, y_rows, row_mask):
        sj, uu, yy = subj[row_mask], u[row_mask], y_rows[row_mask]
        if len(specs) > 1:
            fold_of = subject_folds()
            losses = np.zeros(len(specs))
            for s, spec in enumerate(specs):
                Xs = _long_design(W, A, sj, uu, horizon, spec.interactions)
                try:
                    fold_losses = []
                    rf = fold_of[sj]
                    for k in range(int(fold_of.max()) + 1):
                        test = rf == k
                        fit = fit_glm(Xs[~test], yy[~test], spec)
                        fold_losses.append(_heldout_loss("logistic", yy[test], fit.predict(Xs[test])))
                    losses[s] = float(np.mean(fold_losses))
                except TemvipError:
                    losses[s] = np.inf
            if not np.isfinite(losses).any():
                raise AllLearnersFailed("every hazard learner failed during cross-validation")
            spec = specs[int(np.argmin(losses))]
        else:
            spec = specs[0]
        if spec.family != "logistic":
            raise ValueError(f"hazard learners must be logistic, got {spec.label}")
        Xs = _long_design(W, A, sj, uu, horizon, spec.interactions)
        if plan is not None:
            models = []
            rates1 = np.empty((ds.n, horizon))
            rates0 = np.empty((ds.n, horizon))
            rf = plan.fold_of[sj]
            for k in range(plan.n_folds):
                test_subj = plan.fold_of == k
                fit = fit_glm(Xs[rf != k], yy[rf != k], spec)
                model = _PooledHazardModel(fit=fit, horizon=horizon, p=ds.p, interactions=spec.interactions)
                models.append(model)
                rates1[test_subj] = model.rates(W[test_subj], 1)
                rates0[test_subj] = model.rates(W[test_subj], 0)
            return spec, models, rates1, rates0
        fit = fit_glm(Xs, yy, spec)
        model = _PooledHazardModel(fit=fit, horizon=horizon, p=ds.p, interactions=spec.interactions)
        return spec, [model], model.rates(W, 1), model.rates(W, 0)

    all_rows = np.ones(subj.shape[0], dtype=bool)
    hz_spec, hz_models, haz1, haz0 = fit_hazard(hazard_specs, event_rows, all_rows)
    surv1 = survival_from_hazard(haz1)
    surv0 = survival_from_hazard(haz0)

    cens_rows = (censored[subj] * (time[subj] == u)).astype(float)
    any_censoring = cens_rows.sum() > 0
    if not any_censoring:
        cens1 = np.ones((ds.n, horizon))
        cens0 = np.ones((ds.n, horizon))
        cens_provenance = "none (no censored observations)"
    elif km_censoring:
        curves = km_censoring_by_arm(time, censored, A, horizon)
        cens1 = np.tile(curves[1], (ds.n, 1))
        cens0 = np.tile(curves[0], (ds.n, 1))
        cens_provenance = "kaplan-meier by arm"
    else:
        risk_mask = ~(event_rows.astype(bool))  # events precede censoring in a bin
        c_spec, _, c_haz1, c_haz0 = fit_hazard(censoring_specs, cens_rows, risk_mask)
        cens1 = survival_from_hazard(c_haz1)
        cens0 = survival_from_hazard(c_haz0)
        cens_provenance = c_spec.label

    low = min(cens1.min(), cens0.min())
    if low < censoring_floor:
        warnings.warn(
            f"censoring survival dipped to {low:.3g}; floored at {censoring_floor}",
            CensoringPositivityWarning,
        )
        cens1 = np.maximum(cens1, censoring_floor)
        cens0 = np.maximum(cens0, censoring_floor)

    return SurvivalNuisanceFit(
        grid=out.grid, horizon=horizon,
        haz1=haz1, haz0=haz0, surv1=surv1, surv0=surv0,
        cens1=cens1, cens0=cens0,
        censoring_floor=censoring_floor,
        provenance=hz_spec.label, censoring_provenance=cens_provenance,
        hazard_spec=hz_spec, hazard_models=hz_models, plan=plan,
    )
