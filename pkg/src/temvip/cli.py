"""Command-line front end.

Two subcommands:

``temvip estimate``
    Run the full pipeline on a CSV file (header required): column-role
    mapping, validation, centering, nuisance fits, the chosen estimator, and
    Wald/Benjamini-Hochberg inference. Writes a result table CSV plus a JSON
    run manifest echoing the resolved configuration, preprocessing report,
    tilt diagnostics, and every warning raised. Exit codes: 0 success, 2
    invalid data or configuration, 3 estimation failure.

``temvip simulate``
    Run the benchmark replicate grid and write tidy per-covariate results
    and aggregated metrics CSVs. Deterministic for a fixed seed.

Configuration may come from flags or from a JSON file (``--config``); flags
override the file. Passing a previous run's manifest as ``--config``
reproduces that run. Numeric output uses 17 significant digits so
reruns are byte-comparable. Set ``TEMVIP_LOG=debug|info|warning`` for logging
verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import (
    BinaryOutcome,
    ContinuousOutcome,
    ObservedDataset,
    SurvivalOutcome,
    discretize_times,
)
from .eif import Estimand
from .estimators import InferenceConfig, estimate_tem_vips
from .exceptions import (
    AllColumnsDropped,
    BadTreatmentCode,
    CsvParseError,
    DegenerateOutcome,
    EmptyData,
    GridExceeded,
    MissingColumn,
    NoCovariates,
    NonFiniteData,
    NonPositiveTime,
    PositiveOutcomeRequired,
    SurvivalGridViolation,
    TemvipError,
)
from .glm import LearnerSpec
from .sims import SCENARIO_NAMES, run_replicates

_VALIDATION_ERRORS = (
    EmptyData,
    NonFiniteData,
    BadTreatmentCode,
    SurvivalGridViolation,
    AllColumnsDropped,
    DegenerateOutcome,
    NonPositiveTime,
    PositiveOutcomeRequired,
    MissingColumn,
    CsvParseError,
    NoCovariates,
    GridExceeded,
)

log = logging.getLogger("temvip")

_ESTIMAND_NAMES = {
    "absolute": lambda h: Estimand.absolute(),
    "relative": lambda h: Estimand.relative(),
    "absolute-survival": lambda h: Estimand.absolute_survival(h),
    "relative-survival": lambda h: Estimand.relative_survival(h),
}


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    """Resolved configuration of one ``estimate`` run."""

    data: str = ""
    out: str = "temvip_result"
    treatment: str = ""
    outcome: str = ""
    time: str = ""
    censor: str = ""
    include: List[str] = field(default_factory=list)
    exclude: List[str] = field(default_factory=list)
    estimand: str = "absolute"
    estimator: str = "onestep"
    horizon: Optional[int] = None
    bin_width: Optional[float] = None
    known_propensity: Optional[float] = None
    km_censoring: bool = False
    cross_fit: Optional[int] = None
    seed: int = 0
    truncation: float = 0.01
    q_floor: float = 1e-3
    censoring_floor: float = 0.01
    var_tol: float = 1e-12
    alpha: float = 0.05
    fdr_level: float = 0.05
    effect_threshold: float = 0.0
    null_threshold: float = 0.0
    jobs: int = 0
    propensity_menu: Optional[List[Dict]] = None
    outcome_menu: Optional[List[Dict]] = None
    hazard_menu: Optional[List[Dict]] = None
    censoring_menu: Optional[List[Dict]] = None

    def survival(self) -> bool:
        return self.estimand.endswith("survival")


def _specs_from_config(entries: Optional[List[Dict]]) -> Optional[List[LearnerSpec]]:
    if entries is None:
        return None
    return [LearnerSpec(**entry) for entry in entries]


def parse_csv(path: str, config: RunConfig) -> ObservedDataset:
    """Read an RFC-4180-style CSV (header required) into a dataset.

    Columns are mapped by name: the configured treatment, outcome (or time
    and censoring) roles are extracted, explicitly excluded names dropped,
    and everything left becomes a covariate (restricted to ``include`` when
    given). Any missing or unparseable cell is an error naming its row and
    column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyData(f"{path} is empty") from None
        records = list(reader)
    if not records:
        raise EmptyData(f"{path} has a header but no data rows")
    col_of = {name: k for k, name in enumerate(header)}

    roles = {}
    if config.survival():
        for role in ("treatment", "time", "censor"):
            name = getattr(config, role)
            if name not in col_of:
                raise MissingColumn(f"{role} column {name!r} not found in {path}")
            roles[role] = name
    else:
        for role in ("treatment", "outcome"):
            name = getattr(config, role)
            if name not in col_of:
                raise MissingColumn(f"{role} column {name!r} not found in {path}")
            roles[role] = name

    taken = set(roles.values()) | set(config.exclude)
    if config.include:
        for name in config.include:
            if name not in col_of:
                raise MissingColumn(f"included covariate {name!r} not found in {path}")
        cov_names = [c for c in config.include if c not in taken]
    else:
        cov_names = [c for c in header if c not in taken]
    if not cov_names:
        raise NoCovariates("no covariate columns remain after role assignment and exclusions")

    def parse_cell(row_idx: int, col_name: str) -> float:
        cell = records[row_idx][col_of[col_name]] if col_of[col_name] < len(records[row_idx]) else ""
        cell = cell.strip()
        if cell == "":
            raise CsvParseError(row_idx + 1, col_name)
        try:
            return float(cell)
        except ValueError:
            raise CsvParseError(row_idx + 1, col_name, f"cannot parse {cell!r} at row {row_idx + 1}, column {col_name!r}") from None

    n = len(records)
    W = np.empty((n, len(cov_names)))
    for j, name in enumerate(cov_names):
        for i in range(n):
            W[i, j] = parse_cell(i, name)
    treatment = np.array([parse_cell(i, roles["treatment"]) for i in range(n)])
    if not np.isin(treatment, (0.0, 1.0)).all():
        bad = int(np.nonzero(~np.isin(treatment, (0.0, 1.0)))[0][0])
        raise BadTreatmentCode(f"treatment at data row {bad + 1} is {treatment[bad]!r}; expected 0 or 1")
    treatment = treatment.astype(int)

    if config.survival():
        raw_times = np.array([parse_cell(i, roles["time"]) for i in range(n)])
        censored = np.array([parse_cell(i, roles["censor"]) for i in range(n)]).astype(int)
        if config.bin_width is None:
            raise MissingColumn("survival estimands require --bin-width (no default is assumed)")
        times, grid = discretize_times(raw_times, config.bin_width)
        outcome = SurvivalOutcome(times, censored, grid)
    else:
        y = np.array([parse_cell(i, roles["outcome"]) for i in range(n)])
        if np.isin(y, (0.0, 1.0)).all():
            outcome = BinaryOutcome(y.astype(int))
        else:
            outcome = ContinuousOutcome(y)
    return ObservedDataset(W, treatment, outcome, tuple(cov_names))


def _write_result_csv(path: Path, result) -> None:
    fields = ["covariate", "estimate", "std_err", "ci_lower", "ci_upper", "p_value", "p_adj", "tem_flag"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in result.rows():
            writer.writerow(
                [row["covariate"]]
                + [_fmt(row[k]) for k in fields[1:-1]]
                + [str(row["tem_flag"])]
            )


def cmd_estimate(config: RunConfig) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            ds = parse_csv(config.data, config)
        except _VALIDATION_ERRORS as exc:
            log.error("invalid input: %s", exc)
            print(f"error: {exc}", file=sys.stderr)
            return 2

        horizon = config.horizon
        if config.survival() and horizon is None:
            print("error: survival estimands require --horizon", file=sys.stderr)
            return 2
        estimand = _ESTIMAND_NAMES[config.estimand](horizon)
        inference = InferenceConfig(alpha=config.alpha, null_threshold=config.null_threshold)
        try:
            result = estimate_tem_vips(
                ds,
                estimand,
                estimator=config.estimator,
                propensity_menu=_specs_from_config(config.propensity_menu),
                outcome_menu=_specs_from_config(config.outcome_menu),
                hazard_menu=_specs_from_config(config.hazard_menu),
                censoring_menu=_specs_from_config(config.censoring_menu),
                known_propensity=config.known_propensity,
                km_censoring=config.km_censoring,
                cross_fit=config.cross_fit,
                seed=config.seed,
                truncation=config.truncation,
                q_floor=config.q_floor,
                censoring_floor=config.censoring_floor,
                var_tol=config.var_tol,
                config=inference,
            )
        except _VALIDATION_ERRORS as exc:
            log.error("invalid input: %s", exc)
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except TemvipError as exc:
            log.error("estimation failed: %s", exc)
            print(f"error: {exc}", file=sys.stderr)
            return 3
        result.classify(fdr_level=config.fdr_level, effect_threshold=config.effect_threshold)

    out_csv = Path(f"{config.out}.csv")
    manifest_path = Path(f"{config.out}_manifest.json")
    _write_result_csv(out_csv, result)
    manifest = {
        "config": asdict(config),
        "n": result.n,
        "p": result.p,
        "estimand": result.estimand.label(),
        "estimator": result.estimator,
        "diagnostics": result.diagnostics,
        "warnings": [f"{w.category.__name__}: {w.message}" for w in caught],
        "outputs": {"result_csv": str(out_csv)},
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s and %s", out_csv, manifest_path)
    print(f"wrote {out_csv} ({result.p} covariates) and {manifest_path}")
    return 0


def cmd_simulate(args_config: Dict) -> int:
    scenarios = args_config["scenarios"]
    ns = args_config["ns"]
    reps = args_config["reps"]
    out_dir = Path(args_config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    output = run_replicates(
        scenarios,
        ns,
        estimators=args_config["estimators"],
        reps=reps,
        seed=args_config["seed"],
        fdr_level=args_config["fdr_level"],
        cross_fit=args_config["cross_fit"],
        oracle_draws=args_config["oracle_draws"],
        n_jobs=args_config["jobs"],
    )

    tidy_path = out_dir / "results.csv"
    tidy_fields = [
        "scenario", "n", "rep", "estimator", "covariate", "estimate", "std_err", "p_adj", "truth"
    ]
    with open(tidy_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(tidy_fields)
        for row in output.tidy_rows:
            writer.writerow(
                [row["scenario"], row["n"], row["rep"], row["estimator"], row["covariate"]]
                + [_fmt(row[k]) for k in ("estimate", "std_err", "p_adj", "truth")]
            )

    metrics_path = out_dir / "metrics.csv"
    metric_fields = [
        "scenario", "n", "estimator", "replicates", "failures",
        "tem_abs_bias", "tem_variance", "nontem_abs_bias", "nontem_variance",
        "fdr", "tpr", "tnr",
    ]
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(metric_fields)
        for m in output.metrics:
            row = m.row()
            writer.writerow(
                [row["scenario"], row["n"], row["estimator"], row["replicates"], row["failures"]]
                + [_fmt(row[k]) for k in metric_fields[5:]]
            )

    manifest = {
        "config": {k: v for k, v in args_config.items()},
        "failures": output.failures,
        "outputs": {"tidy_csv": str(tidy_path), "metrics_csv": str(metrics_path)},
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for m in output.metrics:
        print(
            f"{m.scenario} n={m.n} {m.estimator}: FDR={m.fdr:.3f} TPR={m.tpr:.3f} "
            f"TNR={m.tnr:.3f} ({m.replicates} replicates, {m.failures} failures)"
        )
    total_attempted = len(scenarios) * len(ns) * reps * len(args_config["estimators"])
    if output.failures:
        print(f"{len(output.failures)} of {total_attempted} replicate fits failed", file=sys.stderr)
    if len(output.failures) >= total_attempted:
        return 3
    return 0


def _add_estimate_parser(sub) -> None:
    p = sub.add_parser("estimate", help="estimate importance parameters from a CSV file")
    p.add_argument("--config", help="JSON config file (or a previous run manifest); flags override it")
    p.add_argument("--data", help="input CSV path (header required)")
    p.add_argument("--out", help="output prefix (writes <out>.csv and <out>_manifest.json)")
    p.add_argument("--treatment", help="treatment column name")
    p.add_argument("--outcome", help="outcome column name (continuous or binary)")
    p.add_argument("--time", help="follow-up time column (survival)")
    p.add_argument("--censor", help="censoring indicator column, 1 = censored (survival)")
    p.add_argument("--include", help="comma-separated covariate whitelist")
    p.add_argument("--exclude", help="comma-separated columns to ignore")
    p.add_argument("--estimand", choices=sorted(_ESTIMAND_NAMES), help="importance scale")
    p.add_argument("--estimator", choices=["onestep", "tml"])
    p.add_argument("--horizon", type=int, help="grid time for survival estimands")
    p.add_argument("--bin-width", type=float, dest="bin_width", help="event-time bin width (survival)")
    p.add_argument("--known-propensity", type=float, dest="known_propensity",
                   help="fixed randomization probability (skips propensity fitting)")
    p.add_argument("--km-censoring", action="store_true", dest="km_censoring", default=None,
                   help="Kaplan-Meier censoring estimator stratified by arm")
    p.add_argument("--cross-fit", type=int, dest="cross_fit", help="number of cross-fitting folds")
    p.add_argument("--seed", type=int)
    p.add_argument("--truncation", type=float, help="propensity truncation bound")
    p.add_argument("--q-floor", type=float, dest="q_floor", help="denominator floor for relative scales")
    p.add_argument("--censoring-floor", type=float, dest="censoring_floor")
    p.add_argument("--alpha", type=float, help="confidence level complement")
    p.add_argument("--fdr-level", type=float, dest="fdr_level")
    p.add_argument("--effect-threshold", type=float, dest="effect_threshold")
    p.add_argument("--null-threshold", type=float, dest="null_threshold",
                   help="test |theta| <= m instead of theta = 0")
    p.add_argument("--jobs", type=int, help="parallelism degree (default: available cores)")


def _add_simulate_parser(sub) -> None:
    p = sub.add_parser("simulate", help="run the benchmark replicate grid")
    p.add_argument("--scenario", action="append", choices=list(SCENARIO_NAMES) + ["all"],
                   help="repeatable; default cont_obs")
    p.add_argument("--n", action="append", type=int, help="repeatable sample size; default 125 500 2000")
    p.add_argument("--reps", type=int, default=None, help="replicates per cell (default 50)")
    p.add_argument("--estimator", action="append", choices=["onestep", "tml"],
                   help="repeatable; default both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="temvip_sim", help="output directory")
    p.add_argument("--full-grid", action="store_true", dest="full_grid",
                   help="the full benchmark grid: 200 replicates, n in 125..2000")
    p.add_argument("--fdr-level", type=float, dest="fdr_level", default=0.05)
    p.add_argument("--cross-fit", type=int, dest="cross_fit", default=None)
    p.add_argument("--oracle-draws", type=int, dest="oracle_draws", default=200_000)
    p.add_argument("--jobs", type=int, default=0, help="parallelism degree (default: available cores)")


def _resolve_estimate_config(args) -> RunConfig:
    base: Dict = {}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        base = loaded.get("config", loaded)  # accept a manifest or a bare config
        base = {k: v for k, v in base.items() if k in RunConfig.__dataclass_fields__}
    for key in RunConfig.__dataclass_fields__:
        val = getattr(args, key, None)
        if val is not None:
            if key in ("include", "exclude") and isinstance(val, str):
                val = [c.strip() for c in val.split(",") if c.strip()]
            base[key] = val
    config = RunConfig(**base)
    if not config.data:
        raise SystemExit("error: --data (or a config file with a data path) is required")
    if not config.treatment:
        raise SystemExit("error: --treatment column is required")
    if config.survival():
        if not config.time or not config.censor:
            raise SystemExit("error: survival estimands require --time and --censor")
    elif not config.outcome:
        raise SystemExit("error: --outcome column is required")
    if config.jobs == 0:
        config.jobs = os.cpu_count() or 1
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("TEMVIP_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = argparse.ArgumentParser(
        prog="temvip",
        description="Variable importance for treatment effect modifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_estimate_parser(sub)
    _add_simulate_parser(sub)
    args = parser.parse_args(argv)

    if args.command == "estimate":
        try:
            config = _resolve_estimate_config(args)
        except SystemExit as exc:
            print(exc, file=sys.stderr)
            return 2
        return cmd_estimate(config)

    scenarios = args.scenario or ["cont_obs"]
    if "all" in scenarios:
        scenarios = list(SCENARIO_NAMES)
    ns = args.n or ([125, 250, 500, 1000, 2000] if args.full_grid else [125, 500, 2000])
    reps = args.reps if args.reps is not None else (200 if args.full_grid else 50)
    return cmd_simulate(
        {
            "scenarios": scenarios,
            "ns": ns,
            "reps": reps,
            "estimators": args.estimator or ["onestep", "tml"],
            "seed": args.seed,
            "out": args.out,
            "fdr_level": args.fdr_level,
            "cross_fit": args.cross_fit,
            "oracle_draws": args.oracle_draws,
            "jobs": args.jobs or (os.cpu_count() or 1),
        }
    )


if __name__ == "__main__":
    sys.exit(main())
