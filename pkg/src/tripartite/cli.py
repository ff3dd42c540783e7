"""Command-line entry point: ``tripartite <command> [options]``.

Each command writes its tables (CSV or JSON) into ``--out`` together with a
``.meta.json`` sidecar holding the full configuration and toolkit version.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  On failure a JSON error record goes to stdout and a readable
message to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .analysis import lambda_sweep
from .cohort import Cohort, CohortError, Schema, VlThreshold, composite_scores, parse_cohort, serialize_cohort
from .decision_space import build_decision_space
from .empirical import ecdf_set
from .logistic import LogisticError, fit_logistic, hosmer_lemeshow
from .resample import ResampleConfig, ResampleError, auc_estimator, bootstrap_se, kfold_cv, rule_estimator
from .roc import auc_variance_plugin, auc_vs_phi, roc_curve, auc_from_curve
from .rule_select import SelectionCriterion, SelectionError, risk_report, select_min_risk, select_tilt_min_tmr
from .simulate import (
    SCENARIOS,
    ConvergenceResult,
    cd4_density,
    convergence_study,
    design_lookup,
    get_scenario,
    run_scenario_study,
)
from .special import IncompleteGammaError
from .tilt import TiltError, gof_overlay, tilt_from_fit

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "TRIPARTITE_THREADS"


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help=f"worker cap (default ${THREADS_ENV} or 1)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", required=True, help="CSV cohort with a header row")
    data.add_argument("--score-col", default="score")
    data.add_argument("--status-col", default="z")
    data.add_argument("--vl-col", default="vl")
    data.add_argument("--vl-threshold", type=float, default=400.0, help="copies/mL; failure means VL above it")
    data.add_argument("--markers", default="", help="comma-separated marker columns")
    data.add_argument("--negate", action="store_true", help="negate the score column (e.g. raw CD4)")

    rule = argparse.ArgumentParser(add_help=False)
    rule.add_argument("--phi", type=float, required=True, help="gold-standard budget in [0, 1]")
    rule.add_argument("--lambda", dest="lam", type=float, default=None, help="weight of false negatives; omit for min-TMR")
    rule.add_argument("--method", choices=("nonparametric", "semiparametric"), default="nonparametric")

    p = argparse.ArgumentParser(prog="tripartite", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("score", parents=[common, data], help="fit a logistic composite score from markers")
    sub.add_parser("select", parents=[common, data, rule], help="select the optimal rule")

    r = sub.add_parser("roc", parents=[common, data], help="ROC points per budget")
    r.add_argument("--phi", type=_floats, required=True, help="comma-separated budgets")

    a = sub.add_parser("auc", parents=[common, data], help="AUC, plug-in variance and bootstrap CI per budget")
    a.add_argument("--phi", type=_floats, required=True)
    a.add_argument("--replicates", type=int, default=0, help="bootstrap replicates for a CI (0 = none)")

    cv = sub.add_parser("cv", parents=[common, data, rule], help="k-fold cross-validated error rates")
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--stratified", action="store_true")

    b = sub.add_parser("bootstrap", parents=[common, data, rule], help="bootstrap SEs of cutoffs, risks or AUC")
    b.add_argument("--replicates", type=int, default=500)
    b.add_argument("--statistic", choices=("rule", "auc"), default="rule")
    b.add_argument("--stratified", action="store_true")

    s = sub.add_parser("simulate", parents=[common], help="gamma-mixture simulation table")
    s.add_argument("--scenario", default="all", help=f"comma-separated names from {sorted(SCENARIOS)} or 'all'")
    s.add_argument("--p", type=_floats, default=[0.15, 0.25, 0.40])
    s.add_argument("--phi", type=_floats, default=[0.0, 0.2, 0.4])
    s.add_argument("--replicates", type=int, default=100)
    s.add_argument("--n", type=int, default=5000)

    c = sub.add_parser("converge", parents=[common], help="convergence-rate study and sample-size design")
    c.add_argument("--scenario", default="B-2")
    c.add_argument("--p", type=float, default=0.25)
    c.add_argument("--phi", type=float, default=0.2)
    c.add_argument("--sizes", type=_ints, default=[250, 500, 1000, 2000, 4000, 8000])
    c.add_argument("--replicates", type=int, default=200)
    c.add_argument("--target-sigma", type=float, default=25.0)

    w = sub.add_parser("sweep", parents=[common, data], help="lambda sweep with cross-validated error rates")
    w.add_argument("--phi", type=float, required=True)
    w.add_argument("--lambdas", type=_floats, default=[i / 20 for i in range(21)])
    w.add_argument("--folds", type=int, default=10)
    return p


def _check_unit(name: str, values) -> None:
    for v in values if isinstance(values, (list, tuple)) else [values]:
        if v is None:
            continue
        if not (0.0 <= v <= 1.0):
            raise ConfigError(f"{name} must lie in [0, 1], got {v}")


def _validate(args) -> None:
    _check_unit("phi", getattr(args, "phi", None))
    _check_unit("lambda", getattr(args, "lam", None))
    if getattr(args, "method", None) == "semiparametric" and getattr(args, "lam", None) is not None:
        raise ConfigError("the semiparametric method supports min-TMR only (omit --lambda)")
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    for name in ("replicates", "folds", "n"):
        v = getattr(args, name, None)
        if v is not None and v < 0:
            raise ConfigError(f"--{name} must be nonnegative")
    if args.seed < 0:
        raise ConfigError("--seed must be nonnegative")


def _config_dict(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        out[k] = v
    return out


class Writer:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory: {exc}") from None
        self.files: list[str] = []

    def _sidecar(self, path: Path) -> None:
        meta = {"command": self.args.command, "config": _config_dict(self.args), "seed": self.args.seed, "version": __version__}
        path.with_name(path.name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")

    def table(self, name: str, df: pd.DataFrame) -> Path:
        if self.args.format == "json":
            path = self.out / f"{name}.json"
            records = json.loads(df.to_json(orient="records", double_precision=15))
            path.write_text(json.dumps(records, indent=2) + "\n")
        else:
            path = self.out / f"{name}.csv"
            df.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
        self._sidecar(path)
        self.files.append(str(path))
        return path

    def report(self, name: str, obj) -> Path:
        path = self.out / f"{name}.json"
        path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        self._sidecar(path)
        self.files.append(str(path))
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _load(args, need_score: bool = True) -> Cohort:
    markers = tuple(m.strip() for m in args.markers.split(",") if m.strip())
    schema = Schema(
        score=args.score_col,
        status=args.status_col,
        vl=args.vl_col,
        markers=markers,
        negate=args.negate,
        threshold=VlThreshold(args.vl_threshold),
    )
    try:
        with open(args.input, "rb") as fh:
            cohort = parse_cohort(fh, schema)
    except OSError as exc:
        raise ConfigError(f"cannot read input: {exc}") from None
    if need_score:
        cohort.require_scores()
    return cohort


def _criterion(args) -> SelectionCriterion:
    return SelectionCriterion.min_tmr() if args.lam is None else SelectionCriterion.min_lambda(args.lam)


def _rule_record(rule, report, phi, lam) -> dict:
    rec = rule.to_dict(phi)
    rec["lambda"] = lam
    rec.update({k: getattr(report, k) for k in ("fnr", "fpr", "tmr", "weighted_risk", "test_fraction")})
    return rec


def cmd_score(args, w: Writer) -> str:
    cohort = _load(args, need_score=False)
    names = list(cohort.markers)
    if not names:
        raise ConfigError("score needs --markers")
    cohort.require_both_statuses()
    X = np.column_stack([cohort.markers[m] for m in names])
    fit = fit_logistic(X, cohort.status, names=names)
    hl = hosmer_lemeshow(fit, X, cohort.status, groups=min(10, cohort.n))
    w.report("score", {**fit.to_dict(), "hosmer_lemeshow": {"statistic": hl.statistic, "p_value": hl.p_value, "df": hl.df}})
    scored = cohort.with_score(composite_scores(cohort, fit))
    path = w.out / "scored.csv"
    path.write_text(serialize_cohort(scored))
    w._sidecar(path)
    w.files.append(str(path))
    return f"fitted composite on {len(names)} markers, n={cohort.n}, HL p={hl.p_value:.3g}"


def cmd_select(args, w: Writer) -> str:
    cohort = _load(args)
    ecdf = ecdf_set(cohort)
    if args.method == "nonparametric":
        space = build_decision_space(ecdf, args.phi)
        rule, report = select_min_risk(space, ecdf, _criterion(args))
        rec = _rule_record(rule, report, args.phi, args.lam)
        rec["method"] = args.method
        w.report("select", rec)
        w.table("decision_space", pd.DataFrame({"lower": space.lower, "upper": space.upper, "phi": args.phi}))
    else:
        fit = fit_logistic(cohort.score, cohort.status, names=["score"])
        tilt = tilt_from_fit(fit, ecdf)
        sel = select_tilt_min_tmr(fit, ecdf, args.phi, tilt=tilt)
        rule, report = sel.rule, sel.report
        rec = _rule_record(rule, report, args.phi, None)
        rec.update(
            method=args.method,
            center=sel.center,
            delta=sel.delta,
            raw_lower=sel.raw_lower,
            raw_upper=sel.raw_upper,
            one_sided=None if sel.one_sided is None else _rule_record(sel.one_sided, sel.one_sided_report, args.phi, None),
            tilt=tilt.to_dict(),
        )
        w.report("select", rec)
        w.table("gof_overlay", gof_overlay(tilt, ecdf).table)
    return f"rule ({rule.lower:g}, {rule.upper:g}] tmr={report.tmr:.4f} test_fraction={report.test_fraction:.4f}"


def cmd_roc(args, w: Writer) -> str:
    cohort = _load(args)
    ecdf = ecdf_set(cohort)
    frames, aucs = [], []
    for phi in args.phi:
        curve = roc_curve(ecdf, phi)
        frames.append(curve.to_frame())
        aucs.append({"phi": phi, "auc": auc_from_curve(curve)})
    w.table("roc", pd.concat(frames, ignore_index=True))
    w.report("roc", {"curves": aucs})
    return " ".join(f"AUC[{r['phi']:g}]={r['auc']:.4f}" for r in aucs)


def cmd_auc(args, w: Writer) -> str:
    cohort = _load(args)
    table = auc_vs_phi(cohort, args.phi, variance=True)
    table = table.rename(columns={"auc_score": "auc", "var_score": "variance_plugin"})
    if args.replicates:
        cfg = ResampleConfig(replicates=args.replicates, seed=args.seed, threads=args.threads)
        lo, hi = [], []
        for phi in args.phi:
            res = bootstrap_se(cohort, auc_estimator(phi), cfg)
            lo.append(res["auc"].ci_lo)
            hi.append(res["auc"].ci_hi)
        table["ci_lo"] = lo
        table["ci_hi"] = hi
    w.table("auc", table)
    w.report("auc", {"rows": table.to_dict(orient="records")})
    return " ".join(f"AUC[{r.phi:g}]={r.auc:.4f}" for r in table.itertuples())


def cmd_cv(args, w: Writer) -> str:
    cohort = _load(args)
    cfg = ResampleConfig(folds=args.folds, seed=args.seed, threads=args.threads, stratified=args.stratified)
    res = kfold_cv(cohort, _criterion(args), args.phi, cfg, method=args.method)
    w.report("cv", {"phi": args.phi, "method": args.method, "folds_requested": args.folds, **res.to_dict()})
    r = res.report
    return f"cv fnr={r.fnr:.4f} fpr={r.fpr:.4f} tmr={r.tmr:.4f}"


def cmd_bootstrap(args, w: Writer) -> str:
    cohort = _load(args)
    cfg = ResampleConfig(replicates=args.replicates, seed=args.seed, threads=args.threads, stratified=args.stratified, statistic=args.statistic)
    est = auc_estimator(args.phi) if args.statistic == "auc" else rule_estimator(args.phi, _criterion(args), args.method)
    res = bootstrap_se(cohort, est, cfg)
    w.report("bootstrap", {"phi": args.phi, "method": args.method, **res.to_dict()})
    return " ".join(f"{k}={v.estimate:.4g}(se {v.se:.3g})" for k, v in res.stats.items())


def cmd_simulate(args, w: Writer) -> str:
    names = sorted(SCENARIOS) if args.scenario == "all" else [s.strip() for s in args.scenario.split(",")]
    try:
        scens = [get_scenario(nm) for nm in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.replicates < 2:
        raise ConfigError("--replicates must be at least 2")
    if any(not 0.0 < p < 1.0 for p in args.p):
        raise ConfigError("p must lie in (0, 1)")
    table = run_scenario_study(scens, args.p, args.phi, args.replicates, args.n, args.seed, args.threads)
    w.table("simulate", table)
    dens = []
    for sc in scens:
        d = cd4_density(sc)
        d.insert(0, "scenario", sc.name)
        dens.append(d)
    w.table("densities", pd.concat(dens, ignore_index=True))
    return f"{len(table)} cells x {args.replicates} replicates written"


def cmd_converge(args, w: Writer) -> str:
    try:
        sc = get_scenario(args.scenario)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(args.sizes) < 3:
        raise ConfigError("--sizes needs at least three values")
    res = convergence_study(sc, args.phi, args.p, args.sizes, args.replicates, args.seed, threads=args.threads)
    design = {}
    for m in res.slope:
        # a non-positive fitted slope has no design size; the study is still written
        sub = ConvergenceResult(res.sample_sizes, {m: res.sigma[m]}, {m: res.slope[m]}, {m: res.intercept[m]})
        try:
            design[m] = design_lookup(sub, args.target_sigma)[m]
        except ValueError:
            design[m] = None
    w.table("converge", res.to_frame())
    w.report("converge", {**res.to_dict(), "target_sigma": args.target_sigma, "design_n": design})
    return " ".join(f"{m}: w={res.slope[m]:.3f} n*={design[m] if design[m] is not None else 'n/a'}" for m in res.slope)


def cmd_sweep(args, w: Writer) -> str:
    cohort = _load(args)
    table = lambda_sweep(cohort, args.phi, args.lambdas, folds=args.folds, seed=args.seed, threads=args.threads)
    w.table("sweep", table)
    return f"{len(table)} lambda values swept"


COMMANDS = {
    "score": cmd_score,
    "select": cmd_select,
    "roc": cmd_roc,
    "auc": cmd_auc,
    "cv": cmd_cv,
    "bootstrap": cmd_bootstrap,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "sweep": cmd_sweep,
}

DATA_ERRORS = (CohortError, ResampleError)
NUMERIC_ERRORS = (LogisticError, TiltError, IncompleteGammaError, SelectionError, ArithmeticError, np.linalg.LinAlgError)


def _fail(code: int, exc: BaseException, stdout, stderr) -> int:
    kind = {EXIT_CONFIG: "config", EXIT_DATA: "data", EXIT_NUMERIC: "numerical"}[code]
    stdout.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    stderr.write(f"tripartite: {kind} error: {exc}\n")
    return code


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_CONFIG
        return code
    if args.threads is None:
        args.threads = _default_threads()
    try:
        _validate(args)
        w = Writer(args)
        summary = COMMANDS[args.command](args, w)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc, stdout, stderr)
    except DATA_ERRORS as exc:
        return _fail(EXIT_DATA, exc, stdout, stderr)
    except NUMERIC_ERRORS as exc:
        return _fail(EXIT_NUMERIC, exc, stdout, stderr)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc, stdout, stderr)
    stdout.write(summary + "\n")
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
