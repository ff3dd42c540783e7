"""Tripartite ROC curves, AUC estimators, bounds and plug-in variance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .cohort import Cohort, CohortError
from .empirical import BELOW_SUPPORT, CdfSet, budget_count, ecdf_set, h_phi


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Step ROC curve over the budget-feasible rule family.

    ``fpr``/``tpr`` hold the distinct operating points sorted by FPR.  The
    ``steps`` table carries, for each status-0 jump, the FPR interval it
    spans together with the TPR and the status-1 tie mass at the matching
    lower cutoff, which is what the AUC integral needs.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    phi: float
    source: str = "nonparametric"
    steps: pd.DataFrame = field(default=None, repr=False)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"phi": self.phi, "fpr": self.fpr, "tpr": self.tpr})


def roc_curve(cdfs: CdfSet, phi: float, source: str = "nonparametric") -> RocCurve:
    """Operating points ``(1 - G0(u), 1 - G1(H_phi(u)))`` for every jump ``u``.

    The below-support cutoff contributes the ``(1, 1)`` endpoint.  ``cdfs``
    is validated for the mixture identity on construction.
    """
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    pts = cdfs.support
    u = np.concatenate([[BELOW_SUPPORT], pts])
    lo = np.atleast_1d(h_phi(u, cdfs, phi))
    fpr = 1.0 - np.atleast_1d(cdfs.g0(u))
    tpr = 1.0 - np.atleast_1d(cdfs.g1(lo))
    fpr = np.clip(fpr, 0.0, 1.0)
    tpr = np.clip(tpr, 0.0, 1.0)
    pairs = np.unique(np.column_stack([fpr, tpr]), axis=0)

    m0 = cdfs.g0.masses
    jump = m0 > 0
    s = pts[jump]
    h = np.atleast_1d(h_phi(s, cdfs, phi))
    g1h = np.atleast_1d(cdfs.g1(h))
    steps = pd.DataFrame(
        {
            "score": s,
            "fpr_lo": 1.0 - cdfs.g0.values[jump],
            "fpr_hi": 1.0 - cdfs.g0.values[jump] + m0[jump],
            "width": m0[jump],
            "lower": h,
            "tpr": 1.0 - g1h,
            "tie": g1h - np.atleast_1d(cdfs.g1.left_limit(h)),
        }
    )
    return RocCurve(pairs[:, 0], pairs[:, 1], phi, source, steps)


def auc_from_curve(curve: RocCurve) -> float:
    """Exact area under the step curve, ties split evenly."""
    st = curve.steps
    return float(math.fsum(st.width * (st.tpr + 0.5 * st.tie)))


def _double_sum(scores: np.ndarray, status: np.ndarray, phi: float) -> float:
    ecdf = ecdf_set(Cohort(scores, status))
    pos = ecdf.scores[ecdf.status == 1]
    neg = ecdf.scores[ecdf.status == 0]
    h = np.atleast_1d(h_phi(neg, ecdf, phi))
    right = np.searchsorted(pos, h, side="right")
    left = np.searchsorted(pos, h, side="left")
    gt = pos.size - right
    eq = right - left
    return math.fsum(gt + 0.5 * eq) / (pos.size * neg.size)


def auc(data, phi: float, score=None) -> float:
    """AUC of the tripartite ROC curve.

    ``data`` is a cohort (double-sum estimator over status-1 / status-0
    pairs, half credit for ties with the triage cutoff) or a
    :class:`RocCurve` (step integral).  ``score`` optionally overrides the
    cohort's score column.
    """
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    if isinstance(data, RocCurve):
        return auc_from_curve(data)
    cohort: Cohort = data
    s = cohort.require_scores() if score is None else np.asarray(score, dtype=float)
    cohort.require_both_statuses()
    return _double_sum(s, cohort.status, phi)


def auc_lower_bound(phi: float) -> float:
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    return 0.5 + phi - phi * phi / 2.0


def tangent_slope(lam: float, p: float) -> float:
    """ROC slope at the min-lambda operating point, ``(1-lam)(1-p)/(lam p)``."""
    if not 0.0 < lam <= 1.0 or not 0.0 < p < 1.0:
        raise ValueError("lambda must lie in (0, 1] and p in (0, 1)")
    return (1.0 - lam) * (1.0 - p) / (lam * p)


def auc_variance_plugin(cohort: Cohort, phi: float, score=None) -> float:
    """Plug-in variance of the AUC estimate (first-order U-statistic projection).

    Each status-1 score ``x`` contributes ``P0{H(Y) < x} + P0{H(Y) = x}/2``
    and each status-0 score ``y`` contributes ``P1{X > H(y)} + P1{X = H(y)}/2``;
    the variance is ``[Var1 / p + Var0 / (1 - p)] / n``.
    """
    s = cohort.require_scores() if score is None else np.asarray(score, dtype=float)
    cohort.require_both_statuses()
    ecdf = ecdf_set(Cohort(s, cohort.status))
    n = ecdf.n
    k = budget_count(phi, n)
    ss = ecdf.scores
    pos = ss[ecdf.status == 1]
    neg = ss[ecdf.status == 0]
    p = pos.size / n

    # H(y) < x  <=>  C(y) <= C(x-) + k,  with C the pooled count at or below
    c_neg = np.sort(np.searchsorted(ss, neg, side="right"))
    below = np.searchsorted(ss, pos, side="left") + k
    at_or_below = np.searchsorted(ss, pos, side="right") + k
    lt = np.searchsorted(c_neg, below, side="right")
    le = np.searchsorted(c_neg, at_or_below, side="right")
    a = (lt + 0.5 * (le - lt)) / neg.size

    h = np.atleast_1d(h_phi(neg, ecdf, phi))
    right = np.searchsorted(pos, h, side="right")
    left = np.searchsorted(pos, h, side="left")
    b = ((pos.size - right) + 0.5 * (right - left)) / pos.size

    return float((a.var() / p + b.var() / (1.0 - p)) / n)


def auc_vs_phi(
    cohort: Cohort,
    phis: Sequence[float],
    scores: Mapping[str, Sequence[float]] | None = None,
    difference: tuple[str, str] | None = None,
    config=None,
    variance: bool = False,
) -> pd.DataFrame:
    """AUC per budget for one or more score columns.

    With ``difference=(a, b)`` the table gains ``diff = auc_a - auc_b`` and,
    when a :class:`~tripartite.resample.ResampleConfig` is supplied,
    bootstrap percentile limits ``diff_ci_lo``/``diff_ci_hi``.
    """
    if scores is None:
        scores = {"score": cohort.require_scores()}
    cols = {name: np.asarray(v, dtype=float) for name, v in scores.items()}
    for name, v in cols.items():
        if v.shape != (cohort.n,):
            raise CohortError(f"score {name!r} has wrong length")
    phis = [float(x) for x in phis]
    for x in phis:
        if not 0.0 <= x <= 1.0:
            raise ValueError("phi must lie in [0, 1]")
    rows = []
    for x in phis:
        row = {"phi": x}
        for name, v in cols.items():
            row[f"auc_{name}"] = _double_sum(v, cohort.status, x)
            if variance:
                row[f"var_{name}"] = auc_variance_plugin(cohort, x, score=v)
        rows.append(row)
    table = pd.DataFrame(rows)
    if difference is not None:
        a, b = difference
        table["diff"] = table[f"auc_{a}"] - table[f"auc_{b}"]
        if config is not None:
            from .resample import bootstrap_se

            # both columns travel with the rows through resampling
            paired = Cohort(cols[a], cohort.status, markers={"a": cols[a], "b": cols[b]})

            def estimator(c: Cohort):
                return {
                    f"diff_{x}": _double_sum(c.markers["a"], c.status, x) - _double_sum(c.markers["b"], c.status, x)
                    for x in phis
                }

            res = bootstrap_se(paired, estimator, config)
            table["diff_ci_lo"] = [res.stats[f"diff_{x}"].ci_lo for x in phis]
            table["diff_ci_hi"] = [res.stats[f"diff_{x}"].ci_hi for x in phis]
    return table
