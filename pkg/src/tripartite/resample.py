"""Seeded bootstrap standard errors and k-fold cross-validation.

Every replicate and fold draws from its own stream,
``SeedSequence(seed, spawn_key=(stream, index))``, so results do not depend
on the number of worker threads or on the order in which rows were given
(rows are put in a canonical order first).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .cohort import Cohort, CohortError
from .decision_space import TripartiteRule, build_decision_space
from .empirical import ecdf_set
from .logistic import LogisticError, fit_logistic
from .rule_select import RiskReport, SelectionCriterion, make_report, select_min_risk, select_tilt_min_tmr
from .tilt import TiltError

BOOTSTRAP_STREAM = 1
CV_STREAM = 2
MAX_FAILURE_RATE = 0.5

ESTIMATOR_ERRORS = (CohortError, LogisticError, TiltError, ValueError, ArithmeticError)


class ResampleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResampleConfig:
    replicates: int = 500
    folds: int = 10
    seed: int = 0
    threads: int = 1
    stratified: bool = False
    statistic: str | None = None

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def stream(seed: int, kind: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(kind, index)))


def canonical(cohort: Cohort) -> Cohort:
    """Rows sorted by score, then status, then the remaining columns."""
    keys = [v for _, v in sorted(cohort.markers.items(), reverse=True)]
    if cohort.raw_vl is not None:
        keys.append(cohort.raw_vl)
    keys.append(cohort.status)
    if cohort.score is not None:
        keys.append(cohort.score)
    return cohort.subset(np.lexsort(keys))


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class BootstrapStat:
    estimate: float
    se: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class BootstrapResult:
    stats: Mapping[str, BootstrapStat]
    replicates_used: int
    failures: int
    draws: Mapping[str, np.ndarray] = field(repr=False, default_factory=dict)

    def __getitem__(self, key: str) -> BootstrapStat:
        return self.stats[key]

    def to_dict(self) -> dict:
        return {
            "statistics": [
                {"statistic": k, "estimate": v.estimate, "se": v.se, "ci": [v.ci_lo, v.ci_hi]}
                for k, v in self.stats.items()
            ],
            "replicates_used": self.replicates_used,
            "failures": self.failures,
        }


def _as_mapping(value) -> dict[str, float]:
    if isinstance(value, Mapping):
        return {str(k): float(v) for k, v in value.items()}
    if np.ndim(value) == 0:
        return {"value": float(value)}
    return {f"value_{i}": float(v) for i, v in enumerate(np.ravel(value))}


def _resample_index(rng: np.random.Generator, status: np.ndarray, stratified: bool) -> np.ndarray:
    n = status.size
    if not stratified:
        return rng.integers(0, n, n)
    parts = []
    for z in (0, 1):
        members = np.flatnonzero(status == z)
        parts.append(members[rng.integers(0, members.size, members.size)])
    return np.sort(np.concatenate(parts))


def bootstrap_se(cohort: Cohort, estimator: Callable[[Cohort], object], config: ResampleConfig) -> BootstrapResult:
    """Nonparametric bootstrap of ``estimator``.

    The estimator returns a number, a sequence, or a mapping of named
    numbers.  Replicates on which it raises a data or numerical error are
    skipped and counted; more than half failing aborts.
    """
    B = config.replicates
    if B < 2:
        raise ValueError("at least two bootstrap replicates are required")
    base = canonical(cohort)
    full = _as_mapping(estimator(base))

    def one(b: int):
        rng = stream(config.seed, BOOTSTRAP_STREAM, b)
        idx = _resample_index(rng, base.status, config.stratified)
        try:
            return _as_mapping(estimator(base.subset(idx)))
        except ESTIMATOR_ERRORS:
            return None

    results = _map(one, range(B), config.threads)
    ok = [r for r in results if r is not None]
    failures = B - len(ok)
    if failures > MAX_FAILURE_RATE * B:
        raise ResampleError(f"estimator failed on {failures} of {B} replicates")
    if len(ok) < 2:
        raise ResampleError("fewer than two successful replicates")
    stats = {}
    draws = {}
    for key, est in full.items():
        vals = np.array([r[key] for r in ok], dtype=float)
        draws[key] = vals
        lo, hi = np.percentile(vals, [2.5, 97.5])
        stats[key] = BootstrapStat(est, float(np.std(vals, ddof=1)), float(lo), float(hi))
    return BootstrapResult(stats, len(ok), failures, draws)


def fold_ids(n: int, folds: int, seed: int, status=None, stratified: bool = False) -> np.ndarray:
    """Fold label per row; sizes differ by at most one."""
    if folds < 2:
        raise ValueError("at least two folds are required")
    if folds > n:
        raise ValueError("more folds than observations")
    rng = stream(seed, CV_STREAM, 0)
    ids = np.empty(n, dtype=np.int64)
    if stratified and status is not None:
        # deal each status in turn so every fold gets its share of both
        order = np.concatenate([rng.permutation(np.flatnonzero(np.asarray(status) == z)) for z in (0, 1)])
    else:
        order = rng.permutation(n)
    ids[order] = np.arange(n) % folds
    return ids


def fit_rule(train: Cohort, criterion: SelectionCriterion, phi: float, method: str = "nonparametric") -> TripartiteRule:
    """Optimal rule estimated on ``train`` by the chosen method."""
    ecdf = ecdf_set(train)
    if method == "nonparametric":
        rule, _ = select_min_risk(build_decision_space(ecdf, phi), ecdf, criterion)
        return rule
    if method == "semiparametric":
        if criterion.kind != "min_tmr":
            raise ValueError("the semiparametric shortcut supports min-TMR only")
        fit = fit_logistic(train.score, train.status, names=["score"])
        return select_tilt_min_tmr(fit, ecdf, phi).rule
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class FoldOutcome:
    fold: int
    rule: TripartiteRule
    n_test: int
    fnr: float
    fpr: float
    test_fraction: float


@dataclass(frozen=True)
class CvReport:
    report: RiskReport
    folds: tuple[FoldOutcome, ...]

    def to_dict(self) -> dict:
        return {
            **self.report.to_dict(),
            "folds": [
                {
                    "fold": f.fold,
                    **f.rule.to_dict(),
                    "n_test": f.n_test,
                    "fnr": f.fnr,
                    "fpr": f.fpr,
                    "test_fraction": f.test_fraction,
                }
                for f in self.folds
            ],
        }


def holdout_rates(rule: TripartiteRule, test: Cohort) -> tuple[float, float, float]:
    """FNR, FPR (NaN when a status is absent) and tested fraction on ``test``."""
    s = test.require_scores()
    z = test.status
    pos = z == 1
    neg = ~pos
    fnr = float(np.mean(s[pos] <= rule.lower)) if pos.any() else math.nan
    fpr = float(np.mean(s[neg] > rule.upper)) if neg.any() else math.nan
    frac = float(np.mean(rule.test_mask(s)))
    return fnr, fpr, frac


def kfold_cv(
    cohort: Cohort,
    criterion: SelectionCriterion,
    phi: float,
    config: ResampleConfig,
    method: str = "nonparametric",
) -> CvReport:
    """Cross-validated error rates of the selected rule.

    FNR and FPR are averaged over the folds where they are defined; TMR and
    weighted risk are recombined with the full-cohort prevalence.
    """
    cohort.require_scores()
    cohort.require_both_statuses()
    base = canonical(cohort)
    ids = fold_ids(base.n, config.folds, config.seed, base.status, config.stratified)

    def one(k: int) -> FoldOutcome:
        test_idx = np.flatnonzero(ids == k)
        train = base.subset(np.flatnonzero(ids != k))
        if not train.has_both_statuses():
            raise CohortError(f"training data of fold {k} has a single status")
        rule = fit_rule(train, criterion, phi, method)
        fnr, fpr, frac = holdout_rates(rule, base.subset(test_idx))
        return FoldOutcome(k, rule, int(test_idx.size), fnr, fpr, frac)

    outcomes = tuple(_map(one, range(config.folds), config.threads))
    with np.errstate(all="ignore"):
        fnr = float(np.nanmean([o.fnr for o in outcomes]))
        fpr = float(np.nanmean([o.fpr for o in outcomes]))
    frac = float(np.mean([o.test_fraction for o in outcomes]))
    lam = criterion.lam if criterion.kind == "min_lambda" else None
    return CvReport(make_report(fnr, fpr, frac, cohort.p_hat, lam), outcomes)


def rule_estimator(phi: float, criterion: SelectionCriterion, method: str = "nonparametric") -> Callable[[Cohort], dict]:
    """Estimator of the selected cutoffs and their training-set risks."""
    from .rule_select import risk_report

    def estimate(c: Cohort) -> dict:
        rule = fit_rule(c, criterion, phi, method)
        ecdf = ecdf_set(c)
        rep = risk_report(rule, ecdf.g0, ecdf.g1, ecdf.p, criterion.lam)
        return {"lower": rule.lower, "upper": rule.upper, "fnr": rep.fnr, "fpr": rep.fpr, "tmr": rep.tmr}

    return estimate


def auc_estimator(phi: float) -> Callable[[Cohort], dict]:
    from .roc import auc

    def estimate(c: Cohort) -> dict:
        return {"auc": auc(c, phi)}

    return estimate
