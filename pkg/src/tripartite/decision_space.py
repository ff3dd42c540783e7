"""Tripartite rules ``(l, u]`` and the budget-constrained family of maximal rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, CohortError
from .empirical import BELOW_SUPPORT, BUDGET_TOL, CdfSet

BRUTE_FORCE_MAX_N = 1000


class Decision(str, enum.Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"
    TEST = "order_gold_standard_test"


@dataclass(frozen=True)
class Diagnosis:
    decision: Decision
    resolved: int | None = None

    @property
    def final(self) -> int | None:
        """Binary call after any gold-standard result is taken into account."""
        if self.decision is Decision.NEGATIVE:
            return 0
        if self.decision is Decision.POSITIVE:
            return 1
        return self.resolved


@dataclass(frozen=True, order=True)
class TripartiteRule:
    """Scores ``<= lower`` are negative, ``> upper`` positive, the rest tested.

    ``lower`` may be :data:`BELOW_SUPPORT` so that the lowest scores can be
    tested; ``lower == upper`` is the bipartite threshold rule.
    """

    lower: float
    upper: float

    def __post_init__(self):
        lo, up = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(up):
            raise ValueError("cutoffs must not be NaN")
        if lo > up:
            raise ValueError(f"lower cutoff {lo} exceeds upper cutoff {up}")
        if up == math.inf:
            raise ValueError("upper cutoff must be finite or the below-support sentinel")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def lower_is_sentinel(self) -> bool:
        return self.lower == BELOW_SUPPORT

    def classify(self, scores) -> np.ndarray:
        """Vectorized action codes: 0 negative, 1 positive, 2 tested."""
        s = np.asarray(scores, dtype=float)
        return np.where(s <= self.lower, 0, np.where(s > self.upper, 1, 2))

    def test_mask(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        return (s > self.lower) & (s <= self.upper)

    def to_dict(self, phi: float | None = None) -> dict:
        out = {
            "lower": None if self.lower_is_sentinel else self.lower,
            "upper": None if self.upper == BELOW_SUPPORT else self.upper,
        }
        if phi is not None:
            out["phi"] = phi
        return out

    @classmethod
    def from_dict(cls, record: dict) -> "TripartiteRule":
        lo = record.get("lower")
        up = record.get("upper")
        return cls(BELOW_SUPPORT if lo is None else lo, BELOW_SUPPORT if up is None else up)


def apply_rule(rule: TripartiteRule, score: float, status: int | None = None) -> Diagnosis:
    if not math.isfinite(score):
        raise ValueError("score must be finite")
    if status is not None and status not in (0, 1):
        raise ValueError("status not binary")
    if score <= rule.lower:
        return Diagnosis(Decision.NEGATIVE)
    if score > rule.upper:
        return Diagnosis(Decision.POSITIVE)
    return Diagnosis(Decision.TEST, status)


@dataclass(frozen=True, eq=False)
class DecisionSpace:
    """Maximal budget-feasible rules, stored as parallel cutoff arrays."""

    lower: np.ndarray
    upper: np.ndarray
    phi: float
    maximal: bool = True

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        up = np.array(self.upper, dtype=float)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("cutoff arrays must be 1-D and equally long")
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    def __len__(self) -> int:
        return int(self.lower.size)

    @property
    def rules(self) -> list[TripartiteRule]:
        return [TripartiteRule(lo, up) for lo, up in zip(self.lower, self.upper)]

    def as_set(self) -> set[tuple[float, float]]:
        return set(zip(self.lower.tolist(), self.upper.tolist()))

    def to_records(self) -> list[dict]:
        return [r.to_dict(self.phi) for r in self.rules]


def build_decision_space(cdfs: CdfSet, phi: float) -> DecisionSpace:
    """Maximal rules under ``G(u) - G(l) <= phi`` on the support of ``cdfs``.

    Every support point, plus the below-support sentinel, is tried as a
    lower cutoff and paired with the largest upper cutoff the budget allows;
    repeated uppers keep only their smallest lower.
    """
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    pts = cdfs.support
    gv = cdfs.g.values
    if pts.size == 0:
        raise CohortError("empty cohort")
    lowers = np.concatenate([[BELOW_SUPPORT], pts])
    g_low = np.concatenate([[0.0], gv])
    idx = np.searchsorted(gv, g_low + phi + BUDGET_TOL, side="right") - 1
    uppers = np.where(idx >= 0, pts[np.maximum(idx, 0)], BELOW_SUPPORT)
    keep = np.ones(uppers.size, dtype=bool)
    keep[1:] = uppers[1:] != uppers[:-1]
    return DecisionSpace(lowers[keep], uppers[keep], phi)


def brute_force_space(cohort: Cohort, phi: float) -> DecisionSpace:
    """Exhaustive enumeration of maximal feasible rules, for cross-checking.

    Quadratic in the number of distinct scores; the pooled CDF is computed
    by direct counting rather than through :class:`EcdfSet`.
    """
    scores = cohort.require_scores()
    if cohort.n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}")
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    cand = np.concatenate([[BELOW_SUPPORT], np.unique(scores)])
    g = (scores[None, :] <= cand[:, None]).sum(axis=1) / scores.size
    m = cand.size
    ordered = cand[:, None] <= cand[None, :]
    feasible = ordered & (g[None, :] - g[:, None] <= phi + BUDGET_TOL)
    # reach[i, j]: some feasible pair (i', j') with i' <= i and j' >= j
    reach = np.logical_or.accumulate(feasible, axis=0)
    reach = np.logical_or.accumulate(reach[:, ::-1], axis=1)[:, ::-1]
    dominated = np.zeros((m, m), dtype=bool)
    dominated[1:, :] |= reach[:-1, :]
    dominated[:, :-1] |= reach[:, 1:]
    i, j = np.nonzero(feasible & ~dominated)
    return DecisionSpace(cand[i], cand[j], phi)
