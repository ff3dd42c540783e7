"""Risk of tripartite rules and selection of the optimal rule."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .decision_space import DecisionSpace, TripartiteRule
from .empirical import BELOW_SUPPORT, CdfSet, EcdfSet, StepCdf, h_phi

TIE_TOL = 1e-12


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class RiskReport:
    fnr: float
    fpr: float
    tmr: float
    weighted_risk: float | None
    risk_vector: tuple[float, float]
    test_fraction: float
    p: float
    lam: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["risk_vector"] = list(self.risk_vector)
        d["lambda"] = d.pop("lam")
        return d


def _risks(fnr, fpr, p, lam):
    tmr = p * fnr + (1.0 - p) * fpr
    weighted = None if lam is None else lam * p * fnr + (1.0 - lam) * (1.0 - p) * fpr
    return tmr, weighted


def make_report(fnr: float, fpr: float, test_fraction: float, p: float, lam: float | None) -> RiskReport:
    tmr, weighted = _risks(fnr, fpr, p, lam)
    return RiskReport(
        fnr=float(fnr),
        fpr=float(fpr),
        tmr=float(tmr),
        weighted_risk=None if weighted is None else float(weighted),
        risk_vector=(float(p * fnr), float((1.0 - p) * fpr)),
        test_fraction=float(test_fraction),
        p=float(p),
        lam=lam,
    )


def risk_report(rule: TripartiteRule, g0: StepCdf, g1: StepCdf, p: float, lam: float | None = None) -> RiskReport:
    """FNR ``G1(l)``, FPR ``1 - G0(u)`` and the derived risks of ``rule``.

    Works with any pair of step CDFs: empirical, semiparametric or exact.
    The test fraction is the mixture mass of ``(l, u]``.
    """
    if lam is not None and not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    fnr = g1(rule.lower)
    fpr = 1.0 - g0(rule.upper)
    frac = (1.0 - p) * (g0(rule.upper) - g0(rule.lower)) + p * (g1(rule.upper) - g1(rule.lower))
    return make_report(fnr, fpr, max(frac, 0.0), p, lam)


@dataclass(frozen=True)
class SelectionCriterion:
    kind: str
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in ("min_tmr", "min_lambda"):
            raise ValueError(f"unknown criterion {self.kind!r}")
        if self.kind == "min_lambda":
            if self.lam is None:
                raise ValueError("min_lambda requires lambda")
            if not 0.0 <= self.lam <= 1.0:
                raise ValueError("lambda must lie in [0, 1]")

    @classmethod
    def min_tmr(cls) -> "SelectionCriterion":
        return cls("min_tmr")

    @classmethod
    def min_lambda(cls, lam: float) -> "SelectionCriterion":
        return cls("min_lambda", lam)


def _argmin_with_ties(primary, tmr, upper, lower) -> int:
    # primary, then TMR, then smaller upper, then smaller lower
    cand = np.flatnonzero(primary <= primary.min() + TIE_TOL)
    cand = cand[tmr[cand] <= tmr[cand].min() + TIE_TOL]
    cand = cand[upper[cand] == upper[cand].min()]
    cand = cand[lower[cand] == lower[cand].min()]
    return int(cand[0])


def select_min_risk(space: DecisionSpace, cdfs: CdfSet, criterion: SelectionCriterion) -> tuple[TripartiteRule, RiskReport]:
    """Evaluate every rule in ``space`` and return the minimizer.

    Ties on the criterion go to the lower TMR, then the smaller upper
    cutoff, then the smaller lower cutoff.
    """
    if len(space) == 0:
        raise SelectionError("empty decision space")
    p = cdfs.p
    fnr = cdfs.g1(space.lower)
    fpr = 1.0 - cdfs.g0(space.upper)
    tmr, weighted = _risks(fnr, fpr, p, criterion.lam)
    primary = tmr if criterion.kind == "min_tmr" else weighted
    j = _argmin_with_ties(np.atleast_1d(primary), np.atleast_1d(tmr), space.upper, space.lower)
    rule = TripartiteRule(space.lower[j], space.upper[j])
    return rule, risk_report(rule, cdfs.g0, cdfs.g1, p, criterion.lam)


def rule_risks(space: DecisionSpace, cdfs: CdfSet, lam: float | None = None) -> dict[str, np.ndarray]:
    """Vectorized FNR, FPR, TMR and weighted risk for every rule in ``space``."""
    fnr = cdfs.g1(space.lower)
    fpr = 1.0 - cdfs.g0(space.upper)
    tmr, weighted = _risks(fnr, fpr, cdfs.p, lam)
    out = {"lower": space.lower, "upper": space.upper, "fnr": fnr, "fpr": fpr, "tmr": tmr}
    if weighted is not None:
        out["weighted_risk"] = weighted
    return out


@dataclass(frozen=True)
class TiltSelection:
    """Outcome of the symmetric-interval shortcut under the tilt model.

    ``rule`` is the clamped rule; ``raw_lower``/``raw_upper`` are the
    unclamped cutoffs ``center -/+ delta``.  ``one_sided`` re-spends the
    budget freed by clamping on the other side, or is ``None`` when no
    clamping happened.
    """

    rule: TripartiteRule
    report: RiskReport
    center: float
    delta: float
    raw_lower: float
    raw_upper: float
    lower_clamped: bool
    upper_clamped: bool
    one_sided: TripartiteRule | None
    one_sided_report: RiskReport | None

    def __iter__(self):
        yield self.rule
        yield self.report


def _snap(x: float, s: np.ndarray, d: np.ndarray, t: float) -> float:
    # move x so that scores with d <= t sit at or below it and the rest above;
    # c + t and the scores can round differently than d = s - c does
    j = int(np.searchsorted(d, t, side="right"))
    if j > 0:
        x = max(x, float(s[j - 1]))
    if j < s.size:
        x = min(x, float(np.nextafter(s[j], -math.inf)))
    return x


def tilt_half_width(scores, center: float, k: int) -> tuple[float, float, float]:
    """Widest interval around ``center`` holding at most ``k`` scores.

    Returns ``(delta, lower, upper)``.  When the supremum half-width is not
    attained, ``upper`` is pulled just below the boundary score so that the
    interval holds exactly the scores strictly within ``delta``.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    d = s - center
    n = d.size
    if k <= 0:
        return 0.0, center, center
    if k >= n:
        return math.inf, BELOW_SUPPORT, float(s[-1])
    a = np.unique(np.concatenate([[0.0], np.abs(d)]))
    # count(a) = #{d in (-a, a]};  closed(a) = #{d in [-a, a]}
    inside = np.searchsorted(d, a, side="right") - np.searchsorted(d, -a, side="right")
    closed = np.searchsorted(d, a, side="right") - np.searchsorted(d, -a, side="left")
    m = int(np.flatnonzero(inside <= k)[-1])
    if closed[m] <= k:
        # supremum a[m + 1] exists (k < n) and is not attained
        delta = float(a[m + 1])
        lo = _snap(center - delta, s, d, -delta)
        up = float(np.nextafter(center + delta, -math.inf))
        j = int(np.searchsorted(d, delta, side="left"))
        if j > 0:
            up = max(up, float(s[j - 1]))
        if j < n:
            up = min(up, float(np.nextafter(s[j], -math.inf)))
        return delta, lo, up
    delta = float(a[m])
    return delta, _snap(center - delta, s, d, -delta), _snap(center + delta, s, d, delta)


def select_tilt_min_tmr(fit, ecdf: EcdfSet, phi: float, tilt=None, lam: float | None = None) -> TiltSelection:
    """Min-TMR rule under the exponential tilt model.

    The test interval is centered at ``-beta0 / beta1`` and widened until
    the budget is exhausted under the empirical pooled CDF.  Cutoffs past
    the observed scores are clamped to the support boundary.  The report
    uses the semiparametric CDFs of ``tilt`` (fitted from ``fit`` when not
    given).
    """
    from .tilt import tilt_from_fit

    if not fit.converged:
        raise SelectionError("logistic fit did not converge")
    if len(fit.coefficients) != 1:
        raise SelectionError("tilt shortcut needs a fit on the score alone")
    beta1 = float(next(iter(fit.coefficients.values())))
    if not beta1 > 0:
        raise SelectionError("score coefficient must be positive (risk ordering violated)")
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    center = -fit.intercept / beta1
    k = ecdf.budget_count(phi)
    delta, raw_lo, raw_up = tilt_half_width(ecdf.scores, center, k)

    s_min, s_max = float(ecdf.scores[0]), float(ecdf.scores[-1])

    def clamp(x: float) -> float:
        # no scores lie beyond the support, so the partition is unchanged
        if x > s_max:
            return s_max
        if x < s_min:
            return BELOW_SUPPORT
        return x

    up_clamped = raw_up > s_max
    lo_clamped = raw_lo < s_min
    rule = TripartiteRule(clamp(raw_lo), clamp(raw_up))
    if ecdf.g(rule.upper) - ecdf.g(rule.lower) > phi + 1e-12:
        raise SelectionError("clamped rule violates the budget")

    if tilt is None:
        tilt = tilt_from_fit(fit, ecdf)
    report = risk_report(rule, tilt.g0_tilde, tilt.g1_tilde, ecdf.p, lam)

    one_sided = None
    one_report = None
    if up_clamped != lo_clamped:
        if up_clamped:
            one_sided = TripartiteRule(h_phi(s_max, ecdf, phi), s_max)
        else:
            gv = ecdf.g.values
            idx = int(np.searchsorted(gv, phi + 1e-12, side="right")) - 1
            one_sided = TripartiteRule(BELOW_SUPPORT, ecdf.support[idx] if idx >= 0 else BELOW_SUPPORT)
        one_report = risk_report(one_sided, tilt.g0_tilde, tilt.g1_tilde, ecdf.p, lam)

    return TiltSelection(
        rule=rule,
        report=report,
        center=center,
        delta=delta,
        raw_lower=raw_lo,
        raw_upper=raw_up,
        lower_clamped=lo_clamped,
        upper_clamped=up_clamped,
        one_sided=one_sided,
        one_sided_report=one_report,
    )


def cd4_cutoffs(rule: TripartiteRule, max_cd4: float | None = None) -> tuple[float, float]:
    """Integer CD4 thresholds of a rule on the negated-CD4 score scale.

    Returns ``(positive_max, tested_max)``: CD4 at or below the first is
    diagnosed positive, CD4 above it and at or below the second is tested.
    A below-support lower cutoff maps to ``max_cd4`` (infinity if omitted).
    """
    return score_to_cd4(rule.upper), score_to_cd4(rule.lower, max_cd4)


def score_to_cd4(s: float, cap: float | None = None) -> float:
    if s == BELOW_SUPPORT:
        return math.inf if cap is None else float(cap)
    return float(math.ceil(-s) - 1)
