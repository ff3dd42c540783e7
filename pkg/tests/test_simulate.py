import math

import numpy as np
import pytest
from scipy.stats import chisquare

from tripartite.cohort import Cohort
from tripartite.decision_space import build_decision_space
from tripartite.rule_select import SelectionCriterion, risk_report
from tripartite.simulate import (
    SCENARIOS,
    ConvergenceResult,
    GammaScenario,
    cd4_density,
    convergence_study,
    design_lookup,
    get_scenario,
    nonparametric_cutoffs,
    run_scenario_study,
    sample_scenario,
    scenario_cdfs,
    true_optimum,
)


def test_sampler_deterministic():
    a = sample_scenario(SCENARIOS["A-1"], 500, 4)
    b = sample_scenario(SCENARIOS["A-1"], 500, 4)
    assert a == b
    assert a != sample_scenario(SCENARIOS["A-1"], 500, 5)


def test_sampler_moments():
    c = sample_scenario(SCENARIOS["B-2"].with_p(0.25), 100_000, 0)
    cd4 = -c.score
    neg = cd4[c.status == 0]
    assert np.mean(neg) == pytest.approx(980.5, abs=3)
    # the +-3 band is only about 1.4 standard errors wide, so also check in SE units
    assert abs(np.mean(neg) - 980.5) <= 4 * np.std(neg) / np.sqrt(neg.size)
    assert c.p_hat == pytest.approx(0.25, abs=0.005)
    assert np.all(cd4 >= 1) and np.all(cd4 == np.round(cd4))


def test_sampler_matches_analytic_cdf():
    sc = SCENARIOS["A-2"].with_p(0.25)
    c = sample_scenario(sc, 100_000, 8)
    cd4 = -c.score[c.status == 0]
    cdfs = scenario_cdfs(sc)
    # bins of CD4 with roughly equal analytic mass
    edges = np.unique(np.quantile(cd4, np.linspace(0, 1, 21)[1:-1]).astype(int))
    upper = np.concatenate([edges, [np.inf]])
    lower = np.concatenate([[0], edges])
    # P(lower < CD4 <= upper) = G0(-lower - 1) - G0(-upper - 1) on the score scale
    surv = lambda k: 1.0 if k <= 0 else (0.0 if np.isinf(k) else float(cdfs.g0(-(k + 1))))
    probs = np.array([surv(a) - surv(b) for a, b in zip(lower, upper)])
    obs = np.array([np.sum((cd4 > a) & (cd4 <= b)) for a, b in zip(lower, upper)])
    stat = chisquare(obs, probs / probs.sum() * obs.sum())
    assert stat.pvalue > 0.001


def test_density_sums_to_one():
    d = cd4_density(SCENARIOS["B-1"], 5000)
    assert d.pmf0.sum() == pytest.approx(1.0, abs=1e-9)
    assert d.pmf1.sum() == pytest.approx(1.0, abs=1e-9)


def test_scenario_validation():
    with pytest.raises(ValueError):
        GammaScenario("bad", -1, 1, 1, 1)
    with pytest.raises(ValueError):
        get_scenario("C-9")


@pytest.mark.parametrize(
    "name,p,phi,lower,upper,tmr",
    [("A-1", 0.15, 0.2, 0, 230, 0.09), ("A-2", 0.40, 0.0, 249, 249, 0.29), ("B-2", 0.25, 0.4, 112, 577, 0.03)],
)
def test_true_optimum_examples(name, p, phi, lower, upper, tmr):
    t = true_optimum(get_scenario(name, p), phi)
    assert abs(t.lower_cd4 - lower) <= 2 and abs(t.upper_cd4 - upper) <= 2
    assert t.report.tmr == pytest.approx(tmr, abs=0.005)


def test_true_optimum_certificate():
    sc = get_scenario("B-1", 0.25)
    cdfs = scenario_cdfs(sc)
    t = true_optimum(sc, 0.2)
    for r in build_decision_space(cdfs, 0.2).rules[::7]:
        assert t.report.tmr <= risk_report(r, cdfs.g0, cdfs.g1, cdfs.p).tmr + 1e-12
    w = true_optimum(sc, 0.2, SelectionCriterion.min_lambda(0.8))
    assert w.report.fnr <= t.report.fnr + 1e-12


def test_study_table_deterministic():
    a = run_scenario_study(["B-2"], [0.25], [0.0, 0.2], replicates=2, n=1000, seed=3)
    b = run_scenario_study(["B-2"], [0.25], [0.0, 0.2], replicates=2, n=1000, seed=3)
    assert a.equals(b)
    assert len(a) == 2 and set(a.columns) >= {"np_lower_mean", "sp_upper_sd", "true_tmr"}
    with pytest.raises(ValueError):
        run_scenario_study(["B-2"], [0.25], [0.2], replicates=1)


def test_study_zero_budget_low_prevalence_cell():
    t = run_scenario_study(["A-1"], [0.15], [0.0], replicates=20, n=5000, seed=1)
    row = t.iloc[0]
    assert row.sp_lower_mean <= 5 and row.sp_upper_mean <= 5
    assert row.sp_tmr_mean == pytest.approx(0.15, abs=0.01)


def test_constant_sigma_gives_zero_slope():
    res = convergence_study(
        SCENARIOS["B-2"], 0.2, 0.25, [100, 200, 400], replicates=4,
        estimators={"stub": lambda c: (float(c.n % 2), 1.0)},
        sampler=lambda n, ss: Cohort(np.arange(float(n)), np.arange(n) % 2),
    )
    assert res.slope["stub"] == 0.0


def test_normal_mean_harness_slope_half():
    def sampler(n, ss):
        g = np.random.default_rng(ss)
        return Cohort(g.normal(size=n), np.arange(n) % 2)

    res = convergence_study(
        SCENARIOS["B-2"], 0.2, 0.25, [100, 400, 1600, 6400], replicates=200, seed=1,
        estimators={"mean": lambda c: (float(c.score.mean()), float(c.score.mean()))}, sampler=sampler,
    )
    assert res.slope["mean"] == pytest.approx(0.5, abs=0.05)


def test_design_lookup_algebra():
    sizes = (100, 400, 1600)
    sig = 10.0 * np.array(sizes, dtype=float) ** -0.5
    res = ConvergenceResult(sizes, {"m": sig}, {"m": 0.5}, {"m": math.log(10.0)})
    n1 = design_lookup(res, 0.1)["m"]
    n2 = design_lookup(res, 0.2)["m"]
    assert n1 == 10000 and n1 / n2 == pytest.approx(4.0, rel=0.01)
    assert design_lookup(res, 100.0)["m"] == 100
    with pytest.raises(ValueError):
        design_lookup(ConvergenceResult(sizes, {"m": sig}, {"m": 0.0}, {"m": 0.0}), 1.0)
    with pytest.raises(ValueError):
        design_lookup(res, 0.0)


def test_convergence_needs_three_sizes():
    with pytest.raises(ValueError):
        convergence_study(SCENARIOS["B-2"], 0.2, 0.25, [100, 200], replicates=5)


@pytest.mark.slow
def test_cutoff_error_decreases_with_n():
    sc = get_scenario("B-2", 0.25)
    truth = true_optimum(sc, 0.2)
    est = nonparametric_cutoffs(0.2)
    errs = []
    for n in (500, 2000, 8000):
        e = []
        for seed in range(100):
            lo, up = est(sample_scenario(sc, n, 10_000 * n + seed))
            e.append(abs(lo - truth.rule.lower) + abs(up - truth.rule.upper))
        errs.append(np.mean(e))
    assert errs[0] > errs[1] > errs[2]
