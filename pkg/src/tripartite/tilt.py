"""Semiparametric CDFs under the exponential tilt ``g1 = exp(b0* + b1 s) g0``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .cohort import Cohort
from .empirical import CdfSet, EcdfSet, StepCdf
from .logistic import LogisticError, LogisticFit, fit_logistic

NU_TOL = 1e-10


class TiltError(ArithmeticError):
    pass


def _score_equation(nu: float, em1: np.ndarray) -> float:
    return float(math.fsum(em1 / (1.0 + nu * em1)))


def solve_nu(beta0_star: float, beta1: float, scores, p_hat: float | None = None) -> float:
    """Lagrange multiplier of the profile likelihood.

    Root of ``sum (e_i - 1) / (1 + nu (e_i - 1))`` with
    ``e_i = exp(beta0_star + beta1 s_i)`` on the interval where every
    denominator is positive.  The function is strictly decreasing there, so
    the root is unique when it exists.  When every ``e_i`` equals 1 the
    equation holds for all ``nu`` and ``p_hat`` is returned.
    """
    s = np.asarray(scores, dtype=float)
    if not (math.isfinite(beta0_star) and math.isfinite(beta1) and np.all(np.isfinite(s))):
        raise ValueError("inputs must be finite")
    e = np.exp(beta0_star + beta1 * s)
    em1 = e - 1.0
    if np.all(em1 == 0.0):
        if p_hat is None:
            raise TiltError("degenerate tilt: every factor equals 1 and no prevalence given")
        return float(p_hat)
    lo_mass, hi_mass = em1.min(), em1.max()
    if lo_mass >= 0.0 or hi_mass <= 0.0:
        raise TiltError("no sign change on the admissible bracket")
    # admissible: 1 + nu * em1 > 0 for all i
    nu_lo = -1.0 / hi_mass
    nu_hi = -1.0 / lo_mass
    width = nu_hi - nu_lo
    a, b = nu_lo, nu_hi
    for shrink in (1e-12, 1e-10, 1e-8, 1e-6, 1e-4):
        a = nu_lo + shrink * width
        b = nu_hi - shrink * width
        if _score_equation(a, em1) > 0 > _score_equation(b, em1):
            break
    else:
        raise TiltError("no sign change on the admissible bracket")
    nu = brentq(_score_equation, a, b, args=(em1,), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(_score_equation(nu, em1)) > NU_TOL:
        raise TiltError("root of the multiplier equation not resolved")
    return float(nu)


@dataclass(frozen=True, eq=False)
class TiltModel:
    beta0: float
    beta1: float
    beta0_star: float
    theta: np.ndarray
    nu: float
    p_hat: float
    g0_tilde: StepCdf
    g1_tilde: StepCdf
    g_tilde: StepCdf
    scores: np.ndarray = field(repr=False)

    @property
    def center(self) -> float:
        return -self.beta0 / self.beta1

    @property
    def tilt_factors(self) -> np.ndarray:
        return np.exp(self.beta0_star + self.beta1 * self.scores)

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "beta1": self.beta1,
            "beta0_star": self.beta0_star,
            "nu": self.nu,
            "p_hat": self.p_hat,
            "center": self.center if self.beta1 != 0 else None,
        }


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def tilt_model(beta0: float, beta1: float, scores, status) -> TiltModel:
    """Semiparametric masses and CDFs for given logistic coefficients."""
    s = np.asarray(scores, dtype=float)
    z = np.asarray(status)
    n = s.size
    p_hat = float(z.mean())
    if not 0.0 < p_hat < 1.0:
        raise TiltError("both statuses are required")
    beta0_star = beta0 - _logit(p_hat)
    nu = solve_nu(beta0_star, beta1, s, p_hat)
    e = np.exp(beta0_star + beta1 * s)
    denom = 1.0 + nu * (e - 1.0)
    if np.any(denom <= 0):
        raise TiltError("non-positive profile-likelihood mass")
    theta = 1.0 / (n * denom)
    support, inv = np.unique(s, return_inverse=True)
    m0 = np.bincount(inv, weights=theta, minlength=support.size)
    m1 = np.bincount(inv, weights=e * theta, minlength=support.size)
    c0 = np.cumsum(m0)
    c1 = np.cumsum(m1)
    theta.setflags(write=False)
    s = s.copy()
    s.setflags(write=False)
    return TiltModel(
        beta0=float(beta0),
        beta1=float(beta1),
        beta0_star=float(beta0_star),
        theta=theta,
        nu=nu,
        p_hat=p_hat,
        g0_tilde=StepCdf(support, c0),
        g1_tilde=StepCdf(support, c1),
        g_tilde=StepCdf(support, (1.0 - p_hat) * c0 + p_hat * c1),
        scores=s,
    )


def fit_tilt(cohort: Cohort) -> TiltModel:
    """Logistic fit of status on score followed by the semiparametric CDFs."""
    scores = cohort.require_scores()
    cohort.require_both_statuses()
    fit = fit_logistic(scores, cohort.status, names=["score"])
    if not fit.converged:
        raise LogisticError("logistic fit on the score did not converge")
    return tilt_model(fit.intercept, fit.coefficients["score"], scores, cohort.status)


def tilt_from_fit(fit: LogisticFit, ecdf: EcdfSet) -> TiltModel:
    beta1 = float(next(iter(fit.coefficients.values())))
    return tilt_model(fit.intercept, beta1, ecdf.scores, ecdf.status)


@dataclass(frozen=True)
class GofOverlay:
    table: pd.DataFrame
    sup_g0: float
    sup_g1: float


def gof_overlay(tilt: TiltModel, ecdf: EcdfSet, grid=None) -> GofOverlay:
    """Empirical against semiparametric CDFs on ``grid`` (default: support)."""
    s = ecdf.support if grid is None else np.asarray(grid, dtype=float)
    table = pd.DataFrame(
        {
            "s": s,
            "g0_emp": np.atleast_1d(ecdf.g0(s)),
            "g0_tilt": np.atleast_1d(tilt.g0_tilde(s)),
            "g1_emp": np.atleast_1d(ecdf.g1(s)),
            "g1_tilt": np.atleast_1d(tilt.g1_tilde(s)),
        }
    )
    if table.empty:
        return GofOverlay(table, math.nan, math.nan)
    sup0 = float(np.max(np.abs(table.g0_emp - table.g0_tilt)))
    sup1 = float(np.max(np.abs(table.g1_emp - table.g1_tilt)))
    return GofOverlay(table, sup0, sup1)


def semiparametric_cdfs(tilt: TiltModel):
    """The tilt CDFs packaged as a :class:`CdfSet`."""
    return CdfSet(tilt.g0_tilde, tilt.g1_tilde, tilt.g_tilde, tilt.p_hat)

