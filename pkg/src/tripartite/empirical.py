"""Step CDFs by status, the pooled mixture CDF, and the triage operator H_phi."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .cohort import Cohort, CohortError

BELOW_SUPPORT = -math.inf
"""Cutoff lying strictly below every score; ``G(BELOW_SUPPORT) == 0``."""

BUDGET_TOL = 1e-12
MIXTURE_TOL = 1e-8


class MixtureError(ValueError):
    """``g`` is not the prevalence-weighted mixture of ``g0`` and ``g1``."""


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StepCdf:
    """Right-continuous step function with jumps at ``points``.

    ``values[i]`` is the CDF at ``points[i]``; the function is 0 below the
    first point and ``values[-1]`` (normally 1) above the last.
    """

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = _readonly(self.points)
        vals = _readonly(self.values)
        if pts.ndim != 1 or pts.shape != vals.shape or pts.size == 0:
            raise ValueError("points and values must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("points must be strictly increasing")
        if np.any(np.diff(vals) < -1e-15) or vals[0] < -1e-15:
            raise ValueError("CDF values must be nondecreasing and nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_masses(cls, points, masses) -> "StepCdf":
        return cls(points, np.cumsum(np.asarray(masses, dtype=float)))

    def _lookup(self, s, side: str):
        arr = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.points, arr, side=side)
        out = np.where(idx == 0, 0.0, self.values[np.maximum(idx - 1, 0)])
        return float(out) if out.ndim == 0 else out

    def __call__(self, s):
        return self._lookup(s, "right")

    def left_limit(self, s):
        """``G(s-)``, the mass strictly below ``s``."""
        return self._lookup(s, "left")

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.values, prepend=0.0)

    @property
    def total(self) -> float:
        return float(self.values[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"score": self.points, "cdf": self.values})


@dataclass(frozen=True, eq=False)
class CdfSet:
    """Status-conditional CDFs ``g0``, ``g1`` and their mixture ``g``.

    All three share the jump grid ``support``.  Construction checks the
    mixture identity ``g = (1 - p) g0 + p g1`` at every support point.
    """

    g0: StepCdf
    g1: StepCdf
    g: StepCdf
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("prevalence must lie in [0, 1]")
        pts = self.g.points
        for cdf in (self.g0, self.g1):
            if cdf.points.shape != pts.shape or not np.array_equal(cdf.points, pts):
                raise ValueError("g0, g1 and g must share the same support")
        resid = np.max(np.abs(self.g.values - (1.0 - self.p) * self.g0.values - self.p * self.g1.values))
        if resid > MIXTURE_TOL:
            raise MixtureError(f"mixture identity violated by {resid:.3g}")

    @classmethod
    def from_components(cls, points, g0_values, g1_values, p: float) -> "CdfSet":
        g0v = np.asarray(g0_values, dtype=float)
        g1v = np.asarray(g1_values, dtype=float)
        return cls(StepCdf(points, g0v), StepCdf(points, g1v), StepCdf(points, (1.0 - p) * g0v + p * g1v), p)

    @property
    def support(self) -> np.ndarray:
        return self.g.points

    @property
    def p_hat(self) -> float:
        return self.p

    def h_phi(self, u, phi: float):
        return h_phi(u, self, phi)


@dataclass(frozen=True, eq=False)
class EcdfSet(CdfSet):
    """Empirical CDFs of a cohort.

    Besides the step functions this keeps the sorted scores with their
    statuses, which the count-based estimators (AUC, tilt shortcut) need.
    """

    scores: np.ndarray = field(default=None)
    status: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return int(self.scores.size)

    @property
    def n1(self) -> int:
        return int(self.status.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def budget_count(self, phi: float) -> int:
        """Largest number of tested observations allowed by ``phi``."""
        return budget_count(phi, self.n)


def budget_count(phi: float, n: int) -> int:
    return int(math.floor(n * (phi + BUDGET_TOL)))


def ecdf_set(cohort: Cohort) -> EcdfSet:
    """Empirical ``G0``, ``G1``, ``G`` and prevalence of a scored cohort."""
    scores = cohort.require_scores()
    cohort.require_both_statuses()
    order = np.lexsort((cohort.status, scores))
    s = scores[order]
    z = cohort.status[order].astype(np.int64)
    support, first = np.unique(s, return_index=True)
    # cumulative counts at the last index of each tie block
    last = np.append(first[1:], s.size) - 1
    c1 = np.cumsum(z)[last]
    c = last + 1
    c0 = c - c1
    n, n1 = s.size, int(z.sum())
    n0 = n - n1
    p_hat = n1 / n
    g0 = StepCdf(support, c0 / n0)
    g1 = StepCdf(support, c1 / n1)
    g = StepCdf(support, c / n)
    s.setflags(write=False)
    z = z.astype(np.int8)
    z.setflags(write=False)
    return EcdfSet(g0, g1, g, p_hat, scores=s, status=z)


def h_phi(u, cdfs: CdfSet, phi: float):
    """Smallest support value ``w`` with ``G(u) - G(w) <= phi``.

    Returns :data:`BELOW_SUPPORT` where ``G(u) <= phi``, i.e. where the
    whole mass up to ``u`` fits in the budget.  Vectorized over ``u``.
    """
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    g = cdfs.g
    gu = np.asarray(g(u), dtype=float)
    idx = np.searchsorted(g.values, gu - phi - BUDGET_TOL, side="left")
    idx = np.minimum(idx, g.points.size - 1)
    w = np.where(gu <= phi + BUDGET_TOL, BELOW_SUPPORT, g.points[idx])
    return float(w) if w.ndim == 0 else w
