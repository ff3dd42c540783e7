"""Analysis pipeline pieces: synthetic marker cohorts and the lambda sweep."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from .cohort import Cohort, VlThreshold
from .decision_space import build_decision_space
from .empirical import ecdf_set
from .resample import ResampleConfig, kfold_cv
from .rule_select import SelectionCriterion, select_min_risk
from .simulate import SCENARIOS, GammaScenario


def synthetic_marker_cohort(
    n: int = 597,
    p: float = 0.25,
    seed: int = 0,
    scenario: GammaScenario | None = None,
    threshold: VlThreshold = VlThreshold(400.0),
) -> Cohort:
    """Clinic-like cohort with CD4-type markers, viral load and status.

    CD4 follows the ceiling-gamma model of ``scenario`` (default A-1) given
    status; CD4 percentage and a six-month relative CD4 change are noisy
    companions of CD4.  Viral load is drawn above the threshold for failing
    patients and below it otherwise.  The score column is ``-CD4``.
    """
    sc = (scenario or SCENARIOS["A-1"]).with_p(p)
    rng = np.random.default_rng(seed)
    z = (rng.random(n) < sc.p).astype(np.int8)
    w = np.where(
        z == 1,
        rng.gamma(sc.eta1, sc.kappa1, n),
        rng.gamma(sc.eta0, sc.kappa0, n),
    )
    cd4 = np.ceil(w)
    pct = np.clip(cd4 / 25.0 + rng.normal(0.0, 3.0, n) - 2.0 * z, 0.5, 60.0)
    change = rng.normal(0.05, 0.25, n) - 0.15 * z
    log_vl = np.where(
        z == 1,
        np.log10(threshold.v_star) + rng.gamma(2.0, 0.6, n),
        np.log10(threshold.v_star) - rng.gamma(2.0, 0.5, n),
    )
    vl = np.round(10.0**log_vl, 1)
    vl = np.where(z == 1, np.maximum(vl, np.nextafter(threshold.v_star, np.inf)), np.minimum(vl, threshold.v_star))
    return Cohort(-cd4, z, vl, {"cd4": cd4, "cd4_pct": pct, "cd4_change": change})


def lambda_sweep(
    cohort: Cohort,
    phi: float,
    lambda_grid: Sequence[float],
    folds: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> pd.DataFrame:
    """Selected rule and cross-validated error rates for each lambda."""
    ecdf = ecdf_set(cohort)
    space = build_decision_space(ecdf, phi)
    config = ResampleConfig(folds=folds, seed=seed, threads=threads)
    rows = []
    for lam in lambda_grid:
        lam = float(lam)
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        crit = SelectionCriterion.min_lambda(lam)
        rule, rep = select_min_risk(space, ecdf, crit)
        cv = kfold_cv(cohort, crit, phi, config).report
        rows.append(
            {
                "lambda": lam,
                "lower": rule.lower,
                "upper": rule.upper,
                "fnr": rep.fnr,
                "fpr": rep.fpr,
                "tmr": rep.tmr,
                "weighted_risk": rep.weighted_risk,
                "test_fraction": rep.test_fraction,
                "cv_fnr": cv.fnr,
                "cv_fpr": cv.fpr,
                "cv_tmr": cv.tmr,
            }
        )
    return pd.DataFrame(rows)
