"""Model-agnostic variable importance for treatment effect modifiers.

For each pre-treatment covariate this package estimates a scalar parameter
quantifying how strongly that covariate modifies the effect of a binary
treatment: the simple-regression projection of a conditional effect contrast
(absolute or relative, for continuous, binary, or right-censored
time-to-event outcomes) onto the centered covariate. Estimation is by
one-step/estimating-equation or targeted maximum likelihood estimators built
from the parameters' efficient influence functions, with Wald confidence
intervals and Benjamini-Hochberg multiplicity control. A seeded simulation
harness reproduces desk-scale benchmark experiments.
"""

from .data import (
    BinaryOutcome,
    ContinuousOutcome,
    ObservedDataset,
    PreprocessReport,
    SurvivalOutcome,
    TimeGrid,
    center_and_filter,
    discretize_times,
    rescale_outcome_unit_interval,
    validate,
)
from .eif import Estimand, EifMatrix, assemble_eif_matrix
from .estimators import (
    InferenceConfig,
    TemVipResult,
    TiltState,
    benjamini_hochberg,
    classify_tems,
    estimate_tem_vips,
    lasso_menu,
    onestep_estimate,
    tml_estimate_continuous,
    tml_estimate_survival,
    wald_inference,
)
from .glm import GlmFit, LearnerSpec, fit_linear_penalized, fit_logistic_penalized
from .nuisance import (
    CrossFitPlan,
    OutcomeRegressionFit,
    PropensityFit,
    SurvivalNuisanceFit,
    cv_select,
    fit_outcome_regression,
    fit_propensity,
    fit_survival_nuisances,
    km_censoring_by_arm,
)
from .sims import MetricsReport, OracleTruth, SimScenario, generate, oracle_truth, run_replicates

__version__ = "0.1.0"

__all__ = [
    "BinaryOutcome",
    "ContinuousOutcome",
    "CrossFitPlan",
    "EifMatrix",
    "Estimand",
    "GlmFit",
    "InferenceConfig",
    "LearnerSpec",
    "MetricsReport",
    "ObservedDataset",
    "OracleTruth",
    "OutcomeRegressionFit",
    "PreprocessReport",
    "PropensityFit",
    "SimScenario",
    "SurvivalNuisanceFit",
    "SurvivalOutcome",
    "TemVipResult",
    "TiltState",
    "TimeGrid",
    "assemble_eif_matrix",
    "benjamini_hochberg",
    "center_and_filter",
    "classify_tems",
    "cv_select",
    "discretize_times",
    "estimate_tem_vips",
    "fit_linear_penalized",
    "fit_logistic_penalized",
    "fit_outcome_regression",
    "fit_propensity",
    "fit_survival_nuisances",
    "generate",
    "km_censoring_by_arm",
    "lasso_menu",
    "onestep_estimate",
    "oracle_truth",
    "rescale_outcome_unit_interval",
    "run_replicates",
    "tml_estimate_continuous",
    "tml_estimate_survival",
    "validate",
    "wald_inference",
]
