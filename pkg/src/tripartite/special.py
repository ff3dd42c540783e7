"""Regularized incomplete gamma function.

Power series for ``x < a + 1`` and a modified-Lentz continued fraction for
the upper tail otherwise, both vectorized over numpy arrays.  Relative error
is below 1e-10 over the shapes and arguments used by the gamma scenarios.
"""

from __future__ import annotations

import math

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 2000


class IncompleteGammaError(ArithmeticError):
    """Raised when a series or continued fraction fails to converge."""


def _log_prefactor(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    lg = np.vectorize(math.lgamma, otypes=[float])(a)
    return a * np.log(x) - x - lg


def _series(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    ap = a.copy()
    term = 1.0 / a
    total = term.copy()
    active = np.ones(a.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        ap = ap + 1.0
        term = np.where(active, term * x / ap, term)
        total = np.where(active, total + term, total)
        active &= np.abs(term) >= np.abs(total) * _EPS
        if not active.any():
            break
    else:
        raise IncompleteGammaError("series did not converge")
    return total * np.exp(_log_prefactor(a, x))


def _continued_fraction(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Q(a, x) via Lentz's method on the Legendre continued fraction.
    b = x + 1.0 - a
    c = np.full(a.shape, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(a.shape, dtype=bool)
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b = b + 2.0
        d_new = an * d + b
        d_new = np.where(np.abs(d_new) < _TINY, _TINY, d_new)
        c_new = b + an / c
        c_new = np.where(np.abs(c_new) < _TINY, _TINY, c_new)
        d_new = 1.0 / d_new
        delta = d_new * c_new
        d = np.where(active, d_new, d)
        c = np.where(active, c_new, c)
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _EPS
        if not active.any():
            break
    else:
        raise IncompleteGammaError("continued fraction did not converge")
    return np.exp(_log_prefactor(a, x)) * h


def gammainc_lower(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``.

    Returns 0 for ``x <= 0``.  Broadcasts ``a`` and ``x``.
    """
    a_arr, x_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    if np.any(a_arr <= 0) or np.any(~np.isfinite(a_arr)):
        raise ValueError("shape parameter must be positive and finite")
    if np.any(np.isnan(x_arr)):
        raise ValueError("argument is NaN")
    out = np.zeros(a_arr.shape, dtype=float)
    pos = x_arr > 0
    inf = np.isposinf(x_arr)
    out[inf] = 1.0
    pos &= ~inf
    lo = pos & (x_arr < a_arr + 1.0)
    hi = pos & ~lo
    if lo.any():
        out[lo] = _series(a_arr[lo], x_arr[lo])
    if hi.any():
        out[hi] = 1.0 - _continued_fraction(a_arr[hi], x_arr[hi])
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def gammainc_upper(a, x):
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``.

    The upper tail is computed directly by the continued fraction where it
    converges fastest, so small tail probabilities keep relative accuracy.
    """
    a_arr, x_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    if np.any(a_arr <= 0) or np.any(~np.isfinite(a_arr)):
        raise ValueError("shape parameter must be positive and finite")
    out = np.ones(a_arr.shape, dtype=float)
    pos = x_arr > 0
    inf = np.isposinf(x_arr)
    out[inf] = 0.0
    pos &= ~inf
    lo = pos & (x_arr < a_arr + 1.0)
    hi = pos & ~lo
    if lo.any():
        out[lo] = 1.0 - _series(a_arr[lo], x_arr[lo])
    if hi.any():
        out[hi] = _continued_fraction(a_arr[hi], x_arr[hi])
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def gamma_cdf(x, shape: float, scale: float):
    """CDF of Gamma(shape, scale) at ``x``."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    return gammainc_lower(shape, np.asarray(x, dtype=float) / scale)
