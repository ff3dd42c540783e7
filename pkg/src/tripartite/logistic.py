"""Maximum-likelihood logistic regression and the Hosmer-Lemeshow check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit, log_expit
from scipy.stats import chi2

GRAD_TOL = 1e-8
MAX_ITER = 100
POLISH_STEPS = 3
SEPARATION_NORM = 1e4
SATURATION_ETA = 30.0


class LogisticError(ArithmeticError):
    """Base class for fitting failures."""


class DegenerateLabelsError(LogisticError):
    pass


class SeparationError(LogisticError):
    pass


class SingularInformationError(LogisticError):
    pass


@dataclass(frozen=True)
class LogisticFit:
    intercept: float
    coefficients: Mapping[str, float]
    converged: bool
    iterations: int
    standard_errors: Mapping[str, float]
    intercept_se: float = float("nan")
    log_likelihood: float = float("nan")
    gradient_norm: float = float("nan")
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def names(self) -> list[str]:
        return list(self.coefficients)

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.intercept, *self.coefficients.values()])

    def linear_predictor(self, features) -> np.ndarray:
        X = _as_matrix(features, len(self.coefficients))
        return self.intercept + X @ np.array(list(self.coefficients.values()))

    def predict(self, features) -> np.ndarray:
        return expit(self.linear_predictor(features))

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "intercept_se": self.intercept_se,
            "coefficients": dict(self.coefficients),
            "standard_errors": dict(self.standard_errors),
            "converged": self.converged,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
        }


def _as_matrix(features, k: int | None = None) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("features must be a vector or a matrix")
    if k is not None and X.shape[1] != k:
        raise ValueError(f"expected {k} feature columns, got {X.shape[1]}")
    return X


def design(features) -> np.ndarray:
    """Prepend an intercept column."""
    X = _as_matrix(features)
    return np.column_stack([np.ones(X.shape[0]), X])


def log_likelihood(beta, X, y) -> float:
    """Bernoulli log-likelihood; ``X`` includes the intercept column."""
    eta = np.asarray(X) @ np.asarray(beta, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))


def gradient(beta, X, y) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.T @ (np.asarray(y, dtype=float) - expit(X @ np.asarray(beta, dtype=float)))


def information(beta, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    pi = expit(X @ np.asarray(beta, dtype=float))
    return X.T @ (X * (pi * (1.0 - pi))[:, None])


def _separated(X: np.ndarray, y: np.ndarray) -> bool:
    # (quasi-)complete separation iff some nonzero direction b has
    # sign_i * x_i . b >= 0 for every row; found by a bounded LP
    sgn = np.where(y == 1, 1.0, -1.0)
    A = sgn[:, None] * X
    res = linprog(-A.sum(axis=0), A_ub=-A, b_ub=np.zeros(len(y)), bounds=[(-1, 1)] * X.shape[1], method="highs")
    return bool(res.status == 0 and -res.fun > 1e-8 * len(y))


def fit_logistic(features, labels, names: Sequence[str] | None = None) -> LogisticFit:
    """Newton-Raphson maximum likelihood with step halving.

    Features are centered and scaled internally and the coefficients mapped
    back.  Convergence means the max-norm of the mean log-likelihood
    gradient on the scaled design is at most ``GRAD_TOL``.
    """
    X = _as_matrix(features)
    y = np.asarray(labels)
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError("features and labels differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be binary")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    y = y.astype(float)
    if y.min() == y.max():
        raise DegenerateLabelsError("degenerate labels")
    names = list(names) if names is not None else (["x"] if k == 1 else [f"x{j + 1}" for j in range(k)])
    if len(names) != k:
        raise ValueError("one name per feature column is required")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise SingularInformationError("singular information matrix (constant feature)")
    Z = np.column_stack([np.ones(n), (X - mu) / sd])

    b = np.zeros(k + 1)
    b[0] = np.log(y.mean() / (1.0 - y.mean()))
    ll = log_likelihood(b, Z, y)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        g = gradient(b, Z, y)
        if np.max(np.abs(g)) / n <= GRAD_TOL:
            converged = True
            it -= 1
            break
        info = information(b, Z)
        try:
            step = np.linalg.solve(info, g)
        except np.linalg.LinAlgError:
            raise SingularInformationError("singular information matrix") from None
        if not np.all(np.isfinite(step)):
            raise SingularInformationError("singular information matrix")
        t = 1.0
        floor = ll - 1e-12 * abs(ll)
        while True:
            cand = b + t * step
            ll_new = log_likelihood(cand, Z, y)
            if ll_new >= floor or t < 1e-10:
                break
            t *= 0.5
        if ll_new < floor:
            # no ascent direction left; reported as non-convergence
            break
        b, ll = cand, ll_new
        history.append(ll)
        if np.linalg.norm(b[1:]) > SEPARATION_NORM:
            raise SeparationError("complete or quasi-complete separation: coefficients diverge")

    if converged:
        # a couple of extra full Newton steps take the score to rounding level,
        # which the tilt masses rely on; kept only while the gradient shrinks
        gmax = np.max(np.abs(gradient(b, Z, y)))
        for _ in range(POLISH_STEPS):
            try:
                cand = b + np.linalg.solve(information(b, Z), gradient(b, Z, y))
            except np.linalg.LinAlgError:
                break
            gnew = np.max(np.abs(gradient(cand, Z, y)))
            if not gnew < gmax:
                break
            b, gmax = cand, gnew
        ll = log_likelihood(b, Z, y)

    eta = Z @ b
    if np.max(np.abs(eta)) > SATURATION_ETA and _separated(Z, y):
        raise SeparationError("complete or quasi-complete separation")

    # back to the original feature scale
    T = np.zeros((k + 1, k + 1))
    T[0, 0] = 1.0
    T[0, 1:] = -mu / sd
    T[1:, 1:] = np.diag(1.0 / sd)
    beta = T @ b
    info = information(b, Z)
    try:
        cov_std = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SingularInformationError("singular information matrix") from None
    cov = T @ cov_std @ T.T
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    grad_norm = float(np.max(np.abs(gradient(b, Z, y))) / n)

    return LogisticFit(
        intercept=float(beta[0]),
        coefficients={nm: float(v) for nm, v in zip(names, beta[1:])},
        converged=converged,
        iterations=it,
        standard_errors={nm: float(v) for nm, v in zip(names, se[1:])},
        intercept_se=float(se[0]),
        log_likelihood=float(ll),
        gradient_norm=grad_norm,
        history=tuple(history),
    )


@dataclass(frozen=True)
class HosmerLemeshow:
    statistic: float
    p_value: float
    df: int
    observed: np.ndarray = field(repr=False)
    expected: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)

    def __iter__(self):
        yield self.statistic
        yield self.p_value


def risk_groups(prob, groups: int) -> np.ndarray:
    """Equal-count groups by predicted risk; tied predictions share a group."""
    prob = np.asarray(prob, dtype=float)
    n = prob.size
    order = np.argsort(prob, kind="stable")
    sp = prob[order]
    # every member of a tie block takes the group of the block's first rank
    first = np.searchsorted(sp, sp, side="left")
    gid_sorted = (first * groups) // n
    gid = np.empty(n, dtype=np.int64)
    gid[order] = gid_sorted
    return gid


def hosmer_lemeshow(fit: LogisticFit, features, labels, groups: int = 10) -> HosmerLemeshow:
    """Deciles-of-risk goodness-of-fit statistic with ``groups - 2`` df."""
    if not fit.converged:
        raise LogisticError("fit did not converge")
    y = np.asarray(labels, dtype=float)
    n = y.size
    if groups < 2:
        raise ValueError("at least two groups are required")
    if groups > n:
        raise ValueError("more groups than observations")
    prob = fit.predict(features)
    gid = risk_groups(prob, groups)
    sizes = np.bincount(gid, minlength=groups)
    if np.any(sizes == 0):
        raise ValueError("empty group after tying")
    observed = np.bincount(gid, weights=y, minlength=groups)
    expected = np.bincount(gid, weights=prob, minlength=groups)
    pbar = expected / sizes
    denom = expected * (1.0 - pbar)
    if np.any(denom <= 0):
        raise ValueError("group with degenerate predicted risk")
    stat = float(np.sum((observed - expected) ** 2 / denom))
    df = groups - 2
    p_value = float(chi2.sf(stat, df)) if df > 0 else float("nan")
    return HosmerLemeshow(stat, p_value, df, observed, expected, sizes)
