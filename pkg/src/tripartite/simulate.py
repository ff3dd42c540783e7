"""Gamma-mixture cohorts, exact optimal rules, and the simulation studies.

CD4 given status is ``ceil(W)`` with ``W ~ Gamma(shape, scale)``; the risk
score is ``-CD4``.  CD4 cutoffs are reported as integer thresholds: a rule
``(l, u]`` on the score scale diagnoses CD4 ``<= ceil(-u) - 1`` positive and
tests CD4 up to ``ceil(-l) - 1``.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .cohort import Cohort
from .decision_space import TripartiteRule, build_decision_space
from .empirical import BELOW_SUPPORT, CdfSet, ecdf_set
from .logistic import fit_logistic
from .resample import _map
from .rule_select import RiskReport, SelectionCriterion, score_to_cd4, select_min_risk, select_tilt_min_tmr
from .special import gammainc_upper

MAX_CD4 = 5000


@dataclass(frozen=True)
class GammaScenario:
    name: str
    eta0: float
    kappa0: float
    eta1: float
    kappa1: float
    p: float = 0.25

    def __post_init__(self):
        for v in (self.eta0, self.kappa0, self.eta1, self.kappa1):
            if not (v > 0 and math.isfinite(v)):
                raise ValueError("gamma parameters must be positive and finite")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")

    def with_p(self, p: float) -> "GammaScenario":
        return replace(self, p=p)

    def to_dict(self) -> dict:
        return {"name": self.name, "eta0": self.eta0, "kappa0": self.kappa0, "eta1": self.eta1, "kappa1": self.kappa1, "p": self.p}


SCENARIOS: dict[str, GammaScenario] = {
    "A-1": GammaScenario("A-1", 3.2, 152.0, 2.3, 133.0),
    "A-2": GammaScenario("A-2", 4.8, 100.0, 2.3, 133.0),
    "B-1": GammaScenario("B-1", 2.8, 173.0, 2.8, 111.0),
    "B-2": GammaScenario("B-2", 2.8, 350.0, 2.8, 111.0),
}


def get_scenario(name: str, p: float | None = None) -> GammaScenario:
    try:
        sc = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return sc if p is None else sc.with_p(p)


def sample_scenario(scenario: GammaScenario, n: int, seed) -> Cohort:
    """``n`` draws of status then ceiling-gamma CD4; score is ``-CD4``.

    Uses numpy's gamma generator (Marsaglia-Tsang squeeze/rejection) from a
    PCG64 stream seeded by ``seed``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    z = (rng.random(n) < scenario.p).astype(np.int8)
    n1 = int(z.sum())
    w = np.empty(n)
    w[z == 1] = rng.gamma(scenario.eta1, scenario.kappa1, n1)
    w[z == 0] = rng.gamma(scenario.eta0, scenario.kappa0, n - n1)
    cd4 = np.maximum(np.ceil(w), 1.0)
    return Cohort(-cd4, z)


def scenario_cdfs(scenario: GammaScenario, max_cd4: int = MAX_CD4) -> CdfSet:
    """Exact score-scale CDFs on the grid ``-max_cd4, ..., -1``.

    ``G_z(-k) = P(CD4 >= k) = Q(eta_z, (k - 1) / kappa_z)``; the mass of
    CD4 beyond the grid sits on its lowest point.
    """
    k = np.arange(max_cd4, 0, -1, dtype=float)
    g0 = gammainc_upper(scenario.eta0, (k - 1.0) / scenario.kappa0)
    g1 = gammainc_upper(scenario.eta1, (k - 1.0) / scenario.kappa1)
    return CdfSet.from_components(-k, g0, g1, scenario.p)


def cd4_density(scenario: GammaScenario, max_cd4: int = 2000) -> pd.DataFrame:
    """Probability mass of CD4 per status on ``1..max_cd4``."""
    k = np.arange(1, max_cd4 + 1, dtype=float)
    rows = {"cd4": k.astype(int)}
    for z, (eta, kappa) in enumerate([(scenario.eta0, scenario.kappa0), (scenario.eta1, scenario.kappa1)]):
        upper = gammainc_upper(eta, (k - 1.0) / kappa)
        rows[f"pmf{z}"] = upper - gammainc_upper(eta, k / kappa)
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class TrueOptimum:
    rule: TripartiteRule
    report: RiskReport
    lower_cd4: float
    upper_cd4: float

    def __iter__(self):
        yield self.rule
        yield self.report


def true_optimum(
    scenario: GammaScenario,
    phi: float,
    criterion: SelectionCriterion = SelectionCriterion.min_tmr(),
    max_cd4: int = MAX_CD4,
) -> TrueOptimum:
    """Optimal rule under the exact ceiling-gamma CDFs."""
    cdfs = scenario_cdfs(scenario, max_cd4)
    space = build_decision_space(cdfs, phi)
    rule, report = select_min_risk(space, cdfs, criterion)
    return TrueOptimum(rule, report, score_to_cd4(rule.upper), score_to_cd4(rule.lower, max_cd4))


def _cell_seed(seed: int, scenario: GammaScenario, r: int) -> np.random.SeedSequence:
    tag = zlib.crc32(f"{scenario.name}:{scenario.p!r}".encode())
    return np.random.SeedSequence(seed, spawn_key=(tag, r))


def _test_tmr(rule: TripartiteRule, test: Cohort) -> float:
    s, z = test.score, test.status
    wrong = np.sum((z == 1) & (s <= rule.lower)) + np.sum((z == 0) & (s > rule.upper))
    return float(wrong) / test.n


def _replicate(scenario: GammaScenario, phis: Sequence[float], n: int, seed: np.random.SeedSequence) -> list[dict]:
    cohort = sample_scenario(scenario, n, seed)
    half = n // 2
    train = cohort.subset(np.arange(half))
    test = cohort.subset(np.arange(half, n))
    ecdf = ecdf_set(train)
    max_train_cd4 = float(-train.score.min())
    fit = fit_logistic(train.score, train.status, names=["score"])
    out = []
    for phi in phis:
        rule, _ = select_min_risk(build_decision_space(ecdf, phi), ecdf, SelectionCriterion.min_tmr())
        sel = select_tilt_min_tmr(fit, ecdf, phi)
        out.append(
            {
                "phi": phi,
                "np_lower": score_to_cd4(rule.upper),
                "np_upper": score_to_cd4(rule.lower, max_train_cd4),
                "np_tmr": _test_tmr(rule, test),
                "sp_lower": max(score_to_cd4(sel.raw_upper), 0.0),
                "sp_upper": max(score_to_cd4(sel.raw_lower), 0.0),
                "sp_tmr": _test_tmr(sel.rule, test),
            }
        )
    return out


def run_scenario_study(
    scenarios: Iterable[GammaScenario | str],
    p_values: Sequence[float],
    phi_values: Sequence[float],
    replicates: int,
    n: int = 5000,
    seed: int = 0,
    threads: int = 1,
) -> pd.DataFrame:
    """Replicate-mean and SD of estimated CD4 cutoffs and test-set TMR.

    Each replicate cohort is split into a training first half and a test
    second half.  One row per (scenario, p, phi) cell, with the exact
    optimum alongside.  The same replicate cohorts serve every phi.
    """
    if replicates < 2:
        raise ValueError("at least two replicates are required")
    rows = []
    for sc in scenarios:
        base = get_scenario(sc) if isinstance(sc, str) else sc
        for p in p_values:
            scen = base.with_p(p)
            reps = _map(lambda r: _replicate(scen, phi_values, n, _cell_seed(seed, scen, r)), range(replicates), threads)
            for j, phi in enumerate(phi_values):
                cell = pd.DataFrame([rep[j] for rep in reps])
                truth = true_optimum(scen, phi)
                row = {
                    "scenario": scen.name,
                    "p": p,
                    "phi": phi,
                    "true_lower": truth.lower_cd4,
                    "true_upper": truth.upper_cd4,
                    "true_tmr": truth.report.tmr,
                }
                for col in ("np_lower", "np_upper", "np_tmr", "sp_lower", "sp_upper", "sp_tmr"):
                    row[f"{col}_mean"] = float(cell[col].mean())
                    row[f"{col}_sd"] = float(cell[col].std(ddof=1))
                row["replicates"] = replicates
                row["n"] = n
                rows.append(row)
    return pd.DataFrame(rows)


CutoffEstimator = Callable[[Cohort], tuple[float, float]]


def nonparametric_cutoffs(phi: float) -> CutoffEstimator:
    def estimate(c: Cohort) -> tuple[float, float]:
        ecdf = ecdf_set(c)
        rule, _ = select_min_risk(build_decision_space(ecdf, phi), ecdf, SelectionCriterion.min_tmr())
        return rule.lower, rule.upper

    return estimate


def semiparametric_cutoffs(phi: float) -> CutoffEstimator:
    """Unclamped ``center -/+ delta`` cutoffs."""

    def estimate(c: Cohort) -> tuple[float, float]:
        fit = fit_logistic(c.score, c.status, names=["score"])
        sel = select_tilt_min_tmr(fit, ecdf_set(c), phi)
        return sel.raw_lower, sel.raw_upper

    return estimate


@dataclass(frozen=True)
class ConvergenceResult:
    sample_sizes: tuple[int, ...]
    sigma: Mapping[str, np.ndarray]
    slope: Mapping[str, float]
    intercept: Mapping[str, float] = field(default_factory=dict)
    sigma_lower: Mapping[str, np.ndarray] = field(default_factory=dict)
    sigma_upper: Mapping[str, np.ndarray] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for m, sig in self.sigma.items():
            for i, n in enumerate(self.sample_sizes):
                rows.append(
                    {
                        "method": m,
                        "n": n,
                        "sigma": float(sig[i]),
                        "sigma_lower": float(self.sigma_lower[m][i]) if m in self.sigma_lower else math.nan,
                        "sigma_upper": float(self.sigma_upper[m][i]) if m in self.sigma_upper else math.nan,
                    }
                )
        return pd.DataFrame(rows)

    def to_dict(self) -> dict:
        return {
            "sample_sizes": list(self.sample_sizes),
            "slope": dict(self.slope),
            "intercept": dict(self.intercept),
            "sigma": {m: v.tolist() for m, v in self.sigma.items()},
        }


def fit_power_law(sample_sizes, sigma) -> tuple[float, float]:
    """Least-squares ``log sigma = a + w (-log n)``; returns ``(w, a)``."""
    x = -np.log(np.asarray(sample_sizes, dtype=float))
    y = np.log(np.asarray(sigma, dtype=float))
    w, a = np.polyfit(x, y, 1)
    return float(w), float(a)


def convergence_study(
    scenario: GammaScenario,
    phi: float,
    p: float | None,
    sample_sizes: Sequence[int],
    replicates: int,
    seed: int = 0,
    estimators: Mapping[str, CutoffEstimator] | None = None,
    sampler: Callable[[int, np.random.SeedSequence], Cohort] | None = None,
    threads: int = 1,
) -> ConvergenceResult:
    """SD of estimated cutoffs across replicates, per method and size.

    ``sigma`` is the average of the lower- and upper-cutoff SDs; the slope
    is fitted on the log scale against ``-log n``.
    """
    sizes = tuple(int(n) for n in sample_sizes)
    if len(sizes) < 3:
        raise ValueError("at least three sample sizes are required")
    if replicates < 2:
        raise ValueError("at least two replicates are required")
    scen = scenario if p is None else scenario.with_p(p)
    if estimators is None:
        estimators = {"nonparametric": nonparametric_cutoffs(phi), "semiparametric": semiparametric_cutoffs(phi)}
    if sampler is None:

        def sampler(n, ss):
            return sample_scenario(scen, n, ss)

    sig, sig_lo, sig_up = ({m: np.empty(len(sizes)) for m in estimators} for _ in range(3))
    for i, n in enumerate(sizes):

        def one(r: int):
            c = sampler(n, _cell_seed(seed, scen, n * 100003 + r))
            return {m: est(c) for m, est in estimators.items()}

        reps = _map(one, range(replicates), threads)
        for m in estimators:
            cut = np.array([rep[m] for rep in reps], dtype=float)
            sig_lo[m][i] = np.std(cut[:, 0], ddof=1)
            sig_up[m][i] = np.std(cut[:, 1], ddof=1)
            sig[m][i] = 0.5 * (sig_lo[m][i] + sig_up[m][i])
    slope, icpt = {}, {}
    for m in estimators:
        if np.all(sig[m] == sig[m][0]):
            slope[m], icpt[m] = 0.0, float(np.log(sig[m][0])) if sig[m][0] > 0 else -math.inf
        else:
            slope[m], icpt[m] = fit_power_law(sizes, sig[m])
    return ConvergenceResult(sizes, sig, slope, icpt, sig_lo, sig_up)


def design_lookup(result: ConvergenceResult, target_sigma: float) -> dict[str, int]:
    """Smallest sample size whose fitted ``sigma_n`` is at most the target."""
    if not target_sigma > 0:
        raise ValueError("target sigma must be positive")
    out = {}
    smallest = min(result.sample_sizes)
    for m, w in result.slope.items():
        if not w > 0:
            raise ValueError(f"non-positive slope for {m!r}")
        a = result.intercept[m]
        need = math.exp((a - math.log(target_sigma)) / w)
        out[m] = max(int(math.ceil(need - 1e-9)), smallest)
    return out
