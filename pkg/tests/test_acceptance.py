"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``[PASS]`` or ``[FAIL]`` line before asserting,
so ``pytest -v tests/test_acceptance.py`` doubles as a report.
"""

import time

import mpmath
import numpy as np
import pytest
from scipy.stats import mannwhitneyu
from sklearn.metrics import roc_curve as sk_roc_curve

from conftest import random_cohort
from tripartite.analysis import lambda_sweep, synthetic_marker_cohort
from tripartite.cohort import Cohort
from tripartite.decision_space import brute_force_space, build_decision_space
from tripartite.empirical import ecdf_set
from tripartite.logistic import design, fit_logistic, gradient, log_likelihood
from tripartite.resample import ResampleConfig, bootstrap_se
from tripartite.roc import auc, auc_from_curve, auc_lower_bound, auc_variance_plugin, roc_curve
from tripartite.rule_select import SelectionCriterion, select_min_risk, select_tilt_min_tmr
from tripartite.simulate import (
    SCENARIOS,
    convergence_study,
    design_lookup,
    get_scenario,
    run_scenario_study,
    sample_scenario,
    true_optimum,
)
from tripartite.special import gammainc_lower, gammainc_upper
from tripartite.tilt import fit_tilt

from test_rule_select import exhaustive
from test_special import PROBES

# exact optimal (positive-max CD4, tested-max CD4, TMR) per (scenario, p, phi)
TRUE_VALUES = {
    ("A-1", 0.15, 0.0): (65, 65, 0.15), ("A-1", 0.15, 0.2): (0, 230, 0.09), ("A-1", 0.15, 0.4): (0, 348, 0.05),
    ("A-1", 0.25, 0.0): (125, 125, 0.24), ("A-1", 0.25, 0.2): (66, 225, 0.15), ("A-1", 0.25, 0.4): (39, 333, 0.09),
    ("A-1", 0.40, 0.0): (239, 239, 0.32), ("A-1", 0.40, 0.2): (177, 288, 0.23), ("A-1", 0.40, 0.4): (149, 378, 0.15),
    ("A-2", 0.15, 0.0): (130, 130, 0.14), ("A-2", 0.15, 0.2): (72, 268, 0.07), ("A-2", 0.15, 0.4): (57, 373, 0.04),
    ("A-2", 0.25, 0.0): (176, 176, 0.21), ("A-2", 0.25, 0.2): (122, 270, 0.13), ("A-2", 0.25, 0.4): (98, 368, 0.08),
    ("A-2", 0.40, 0.0): (249, 249, 0.29), ("A-2", 0.40, 0.2): (200, 312, 0.20), ("A-2", 0.40, 0.4): (167, 394, 0.13),
    ("B-1", 0.15, 0.0): (0, 0, 0.15), ("B-1", 0.15, 0.2): (0, 220, 0.10), ("B-1", 0.15, 0.4): (0, 338, 0.05),
    ("B-1", 0.25, 0.0): (45, 45, 0.25), ("B-1", 0.25, 0.2): (0, 209, 0.17), ("B-1", 0.25, 0.4): (0, 322, 0.10),
    ("B-1", 0.40, 0.0): (259, 259, 0.35), ("B-1", 0.40, 0.2): (215, 321, 0.26), ("B-1", 0.40, 0.4): (159, 379, 0.17),
    ("B-2", 0.15, 0.0): (241, 241, 0.13), ("B-2", 0.15, 0.2): (99, 383, 0.05), ("B-2", 0.15, 0.4): (0, 619, 0.01),
    ("B-2", 0.25, 0.0): (344, 344, 0.16), ("B-2", 0.25, 0.2): (234, 452, 0.08), ("B-2", 0.25, 0.4): (112, 577, 0.03),
    ("B-2", 0.40, 0.0): (457, 457, 0.18), ("B-2", 0.40, 0.2): (344, 564, 0.10), ("B-2", 0.40, 0.4): (237, 671, 0.05),
}


@pytest.fixture
def report(capsys):
    def emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")

    return emit


def test_criterion_1_true_values(report):
    t0 = time.perf_counter()
    misses = []
    for (name, p, phi), (lo, up, tmr) in TRUE_VALUES.items():
        t = true_optimum(get_scenario(name, p), phi)
        if abs(t.lower_cd4 - lo) > 2 or abs(t.upper_cd4 - up) > 2 or abs(t.report.tmr - tmr) > 0.005:
            misses.append(f"{name} p={p} phi={phi}: got ({t.lower_cd4:g}, {t.upper_cd4:g}, {t.report.tmr:.4f})")
    elapsed = time.perf_counter() - t0
    ok = not misses and elapsed < 60
    report(1, ok, f"{36 - len(misses)}/36 cells match, {elapsed:.1f}s" + ("; " + "; ".join(misses) if misses else ""))
    assert ok


def test_criterion_2_monte_carlo(report):
    t0 = time.perf_counter()
    row = run_scenario_study(["B-2"], [0.25], [0.2], replicates=100, n=5000, seed=7).iloc[0]
    elapsed = time.perf_counter() - t0
    checks = {
        "np lower": abs(row.np_lower_mean - 237) <= 3 * 22,
        "np upper": abs(row.np_upper_mean - 455) <= 3 * 25,
        "sp lower": abs(row.sp_lower_mean - 236) <= 3 * 10,
        "sp upper": abs(row.sp_upper_mean - 454) <= 3 * 11,
        "sp sd smaller": row.sp_lower_sd < row.np_lower_sd and row.sp_upper_sd < row.np_upper_sd,
        "np tmr": abs(row.np_tmr_mean - 0.082) <= 0.01,
        "sp tmr": abs(row.sp_tmr_mean - 0.081) <= 0.01,
        "runtime": elapsed < 300,
    }
    ok = all(checks.values())
    report(
        2, ok,
        f"np ({row.np_lower_mean:.1f}, {row.np_upper_mean:.1f}) sd ({row.np_lower_sd:.1f}, {row.np_upper_sd:.1f}) "
        f"tmr {row.np_tmr_mean:.4f}; sp ({row.sp_lower_mean:.1f}, {row.sp_upper_mean:.1f}) "
        f"sd ({row.sp_lower_sd:.1f}, {row.sp_upper_sd:.1f}) tmr {row.sp_tmr_mean:.4f}; {elapsed:.1f}s"
        + ("" if ok else f"; failed {[k for k, v in checks.items() if not v]}"),
    )
    assert ok


def test_criterion_3_convergence_rate(report):
    t0 = time.perf_counter()
    res = convergence_study(SCENARIOS["B-2"], 0.2, 0.25, [250, 500, 1000, 2000, 4000, 8000], replicates=200, seed=0)
    need = design_lookup(res, 25.0)
    elapsed = time.perf_counter() - t0
    w_np, w_sp = res.slope["nonparametric"], res.slope["semiparametric"]
    ok = (
        0.25 <= w_np <= 0.42
        and 0.42 <= w_sp <= 0.58
        and 1500 <= need["nonparametric"] <= 6000
        and 250 <= need["semiparametric"] <= 1000
        and elapsed < 900
    )
    report(3, ok, f"w_np={w_np:.3f} w_sp={w_sp:.3f} n_np={need['nonparametric']} n_sp={need['semiparametric']}, {elapsed:.1f}s")
    assert ok


def test_criterion_4_exact_invariants(report):
    rng = np.random.default_rng(404)
    worst = {"tilt_g": 0.0, "theta": 0.0, "tilted": 0.0, "nu": 0.0, "mixture": 0.0, "auc": 0.0}
    for k in range(20):
        c = random_cohort(rng, 300, ties=k % 2 == 0)
        t = fit_tilt(c)
        e = ecdf_set(c)
        worst["tilt_g"] = max(worst["tilt_g"], np.max(np.abs(t.g_tilde.values - e.g.values)))
        worst["theta"] = max(worst["theta"], abs(np.sum(t.theta) - 1))
        worst["tilted"] = max(worst["tilted"], abs(np.sum(t.theta * t.tilt_factors) - 1))
        worst["nu"] = max(worst["nu"], abs(t.nu - c.p_hat))
        worst["mixture"] = max(worst["mixture"], np.max(np.abs(e.g.values - (1 - e.p) * e.g0.values - e.p * e.g1.values)))
        for phi in (0.0, 0.15, 0.4):
            worst["auc"] = max(worst["auc"], abs(auc(c, phi) - auc_from_curve(roc_curve(e, phi))))
    space_bad = select_bad = 0
    for seed in range(200):
        r = np.random.default_rng(seed)
        c = random_cohort(r, int(r.integers(2, 51)), ties=seed % 3 == 0)
        e = ecdf_set(c)
        phi = float(r.choice([0.0, 0.05, 0.1, 0.2, 0.33, 0.5, 1.0]))
        brute = brute_force_space(c, phi)
        space_bad += build_decision_space(e, phi).as_set() != brute.as_set()
        for crit in (SelectionCriterion.min_tmr(), SelectionCriterion.min_lambda(float(r.random()))):
            rule, _ = select_min_risk(brute, e, crit)
            select_bad += (rule.lower, rule.upper) != exhaustive(brute, e, crit)
    ok = (
        worst["tilt_g"] <= 1e-10
        and worst["theta"] <= 1e-8
        and worst["tilted"] <= 1e-8
        and worst["nu"] <= 1e-6
        and worst["mixture"] <= 1e-12
        and worst["auc"] <= 1e-10
        and space_bad == 0
        and select_bad == 0
    )
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report(4, ok, f"{detail}; space mismatches {space_bad}/200, selection mismatches {select_bad}/400")
    assert ok


def test_criterion_5_reductions(report):
    rng = np.random.default_rng(505)
    roc_err = mw_err = 0.0
    lam_bad = 0
    for k in range(30):
        c = random_cohort(rng, 120, ties=k % 2 == 0)
        e = ecdf_set(c)
        ours = np.array(roc_curve(e, 0.0).points)
        fpr, tpr, _ = sk_roc_curve(c.status, c.score, drop_intermediate=False)
        theirs = np.unique(np.column_stack([fpr, tpr]), axis=0)
        roc_err = max(roc_err, np.inf if ours.shape != theirs.shape else np.max(np.abs(ours - theirs)))
        pos, neg = c.score[c.status == 1], c.score[c.status == 0]
        mw = mannwhitneyu(pos, neg).statistic / (pos.size * neg.size)
        mw_err = max(mw_err, abs(auc(c, 0.0) - mw))
        for phi in (0.0, 0.1, 0.25):
            space = build_decision_space(e, phi)
            a, _ = select_min_risk(space, e, SelectionCriterion.min_tmr())
            b, _ = select_min_risk(space, e, SelectionCriterion.min_lambda(0.5))
            lam_bad += a != b
    ok = roc_err <= 1e-12 and mw_err <= 1e-12 and lam_bad == 0
    report(5, ok, f"max ROC point gap {roc_err:.1e}, max Mann-Whitney gap {mw_err:.1e}, lambda=.5 mismatches {lam_bad}/90")
    assert ok


def test_criterion_6_auc_bound(report):
    phis = (0.0, 0.15, 0.3, 0.6)
    worst_indep = 0.0
    worst_violation = 0.0
    for seed in range(20):
        rng = np.random.default_rng(6000 + seed)
        n = 20000
        z = (rng.random(n) < 0.3).astype(int)
        c = Cohort(rng.normal(size=n), z)
        for phi in phis:
            worst_indep = max(worst_indep, abs(auc(c, phi) - auc_lower_bound(phi)))
        ordered = Cohort(rng.normal(size=n) + rng.uniform(0.1, 1.5) * z, z)
        for phi in phis:
            worst_violation = max(worst_violation, auc_lower_bound(phi) - auc(ordered, phi))
    ok = worst_indep <= 0.01 and worst_violation <= 0.01
    report(6, ok, f"max |AUC - bound| under independence {worst_indep:.4f}; max bound violation when ordered {worst_violation:.4f}")
    assert ok


def test_criterion_7_variance_vs_bootstrap(report):
    phis = (0.0, 0.15)
    hits = {phi: 0 for phi in phis}
    ratios = {phi: [] for phi in phis}
    for seed in range(20):
        c = sample_scenario(SCENARIOS["B-1"].with_p(0.25), 2000, 7000 + seed)
        res = bootstrap_se(c, lambda x: {str(phi): auc(x, phi) for phi in phis}, ResampleConfig(replicates=500, seed=seed))
        for phi in phis:
            ratio = auc_variance_plugin(c, phi) / res[str(phi)].se ** 2
            ratios[phi].append(ratio)
            hits[phi] += abs(ratio - 1) <= 0.2
    ok = all(hits[phi] > 10 for phi in phis)
    report(
        7, ok,
        " ".join(f"phi={phi}: {hits[phi]}/20 within 20% (median ratio {np.median(ratios[phi]):.3f})" for phi in phis),
    )
    assert ok


def test_criterion_8_pipeline_properties(report):
    c = synthetic_marker_cohort(n=597, p=0.25, seed=0, scenario=SCENARIOS["A-1"])
    e = ecdf_set(c)
    fit = fit_logistic(c.score, c.status, names=["score"])
    sel = select_tilt_min_tmr(fit, e, 0.15)
    step = float(np.min(np.diff(e.support)))
    target = -2 * fit.intercept / fit.coefficients["score"]
    gap = abs(sel.raw_lower + sel.raw_upper - target)
    sweep = lambda_sweep(c, 0.15, np.linspace(0, 1, 21), folds=10, seed=0)
    fnr_ok = bool(np.all(np.diff(sweep.fnr.to_numpy()) <= 0))
    aucs = [auc(c, phi) for phi in (0.0, 0.15, 0.3, 0.45, 0.6)]
    auc_ok = all(b > a for a, b in zip(aucs, aucs[1:]))
    ok = gap <= step and fnr_ok and auc_ok
    report(
        8, ok,
        f"|l+u+2b0/b1|={gap:.3g} (grid step {step:g}); FNR nonincreasing {fnr_ok}; "
        f"AUC {' < '.join(f'{a:.3f}' for a in aucs)}",
    )
    assert ok


def test_criterion_9_numerical_kernels(report):
    rng = np.random.default_rng(909)
    worst_grad = 0.0
    for _ in range(20):
        X = design(rng.normal(size=(60, 3)))
        y = (rng.random(60) < 0.4).astype(float)
        beta = rng.normal(size=4)
        g = gradient(beta, X, y)
        h = 1e-5
        fd = np.array([(log_likelihood(beta + h * e, X, y) - log_likelihood(beta - h * e, X, y)) / (2 * h) for e in np.eye(4)])
        worst_grad = max(worst_grad, np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))))
    mpmath.mp.dps = 40
    worst_gamma = 0.0
    for a, x in PROBES:
        lo = float(mpmath.gammainc(a, 0, x, regularized=True))
        up = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
        worst_gamma = max(worst_gamma, abs(gammainc_lower(a, x) / lo - 1), abs(gammainc_upper(a, x) / up - 1))
    ok = worst_grad <= 1e-6 and worst_gamma <= 1e-9
    report(9, ok, f"gradient rel err {worst_grad:.1e}; incomplete gamma max rel err {worst_gamma:.1e} over {len(PROBES)} probes")
    assert ok
