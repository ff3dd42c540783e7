import numpy as np
import pytest

from tripartite.logistic import (
    DegenerateLabelsError,
    SeparationError,
    design,
    fit_logistic,
    gradient,
    hosmer_lemeshow,
    log_likelihood,
    risk_groups,
)


def test_degenerate_labels():
    with pytest.raises(DegenerateLabelsError, match="degenerate labels"):
        fit_logistic([1.0, 2.0, 3.0], [1, 1, 1])


def test_small_dataset_matches_grid_search():
    x = np.array([-1.5, -0.7, -0.2, 0.1, 0.4, 0.9, 1.3, 2.0])
    y = np.array([0, 0, 1, 0, 1, 0, 1, 1])
    fit = fit_logistic(x, y)
    X = design(x)
    # coarse grid, then a fine grid around the best coarse point
    b0 = np.linspace(-3, 3, 301)
    b1 = np.linspace(-3, 6, 451)
    B0, B1 = np.meshgrid(b0, b1, indexing="ij")
    eta = B0[..., None] + B1[..., None] * x
    ll = np.sum(y * eta - np.logaddexp(0, eta), axis=-1)
    i, j = np.unravel_index(np.argmax(ll), ll.shape)
    fb0 = np.linspace(b0[i] - 0.03, b0[i] + 0.03, 301)
    fb1 = np.linspace(b1[j] - 0.03, b1[j] + 0.03, 301)
    B0, B1 = np.meshgrid(fb0, fb1, indexing="ij")
    eta = B0[..., None] + B1[..., None] * x
    ll = np.sum(y * eta - np.logaddexp(0, eta), axis=-1)
    i, j = np.unravel_index(np.argmax(ll), ll.shape)
    assert fit.intercept == pytest.approx(fb0[i], abs=1e-3)
    assert fit.coefficients["x"] == pytest.approx(fb1[j], abs=1e-3)
    assert log_likelihood(fit.beta, X, y) >= ll.max() - 1e-9


def test_normal_tilt_slope():
    rng = np.random.default_rng(1)
    n = 50000
    y = np.repeat([0, 1], n // 2)
    x = rng.normal(size=n) + y
    fit = fit_logistic(x, y)
    assert fit.converged
    assert fit.coefficients["x"] == pytest.approx(1.0, abs=0.05)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n, k = 40, 3
        X = design(rng.normal(size=(n, k)))
        y = (rng.random(n) < 0.4).astype(float)
        beta = rng.normal(size=k + 1)
        g = gradient(beta, X, y)
        h = 1e-5
        fd = np.array(
            [(log_likelihood(beta + h * e, X, y) - log_likelihood(beta - h * e, X, y)) / (2 * h) for e in np.eye(k + 1)]
        )
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_loglik_nondecreasing_and_score_identity():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(500, 2))
    eta = -0.5 + X @ np.array([1.2, -0.8])
    y = (rng.random(500) < 1 / (1 + np.exp(-eta))).astype(int)
    fit = fit_logistic(X, y, names=["a", "b"])
    hist = np.array(fit.history)
    assert np.all(np.diff(hist) >= -1e-9 * np.abs(hist[:-1]))
    assert fit.converged and fit.gradient_norm <= 1e-8
    assert fit.predict(X).mean() == pytest.approx(y.mean(), abs=1e-8)
    assert all(se > 0 for se in fit.standard_errors.values())


def test_standard_errors_match_inverse_information():
    rng = np.random.default_rng(6)
    x = rng.normal(size=300) * 40 + 200
    y = (rng.random(300) < 1 / (1 + np.exp(-(x - 200) / 40))).astype(int)
    fit = fit_logistic(x, y)
    X = design(x)
    pi = fit.predict(x)
    cov = np.linalg.inv(X.T @ (X * (pi * (1 - pi))[:, None]))
    assert fit.intercept_se == pytest.approx(np.sqrt(cov[0, 0]), rel=1e-6)
    assert fit.standard_errors["x"] == pytest.approx(np.sqrt(cov[1, 1]), rel=1e-6)


def test_complete_separation_detected():
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([0, 0, 0, 1, 1, 1])
    with pytest.raises(SeparationError):
        fit_logistic(x, y)


def test_quasi_complete_separation_detected():
    x = np.array([0.0, 1.0, 2.0, 2.0, 3.0, 4.0])
    y = np.array([0, 0, 0, 1, 1, 1])
    with pytest.raises(SeparationError):
        fit_logistic(x, y)


def test_hosmer_lemeshow_perfect_calibration():
    # rates 1/4, 1/2, 3/4 have logits -log 3, 0, log 3: exactly linear in x
    x = np.repeat([0.0, 1.0, 2.0], 4)
    y = np.array([1, 0, 0, 0, 1, 1, 0, 0, 1, 1, 1, 0])
    fit = fit_logistic(x, y)
    stat, p = hosmer_lemeshow(fit, x, y, groups=3)
    assert stat == pytest.approx(0.0, abs=1e-12)
    assert p == pytest.approx(1.0)


def test_hosmer_lemeshow_errors():
    x = np.repeat([0.0, 1.0], 10)
    y = np.array([1, 1, 0, 0, 0, 0, 0, 0, 0, 0] + [1] * 6 + [0] * 4)
    fit = fit_logistic(x, y)
    with pytest.raises(ValueError, match="empty group"):
        hosmer_lemeshow(fit, x, y, groups=10)
    with pytest.raises(ValueError, match="more groups"):
        hosmer_lemeshow(fit, x, y, groups=25)


def test_risk_groups_keep_ties_together():
    p = np.array([0.1, 0.1, 0.1, 0.2, 0.3, 0.3, 0.4, 0.5])
    g = risk_groups(p, 4)
    for v in np.unique(p):
        assert len(set(g[p == v])) == 1
    assert np.all(np.diff(g[np.argsort(p, kind="stable")]) >= 0)


def _simulate(rng, n, quadratic=False):
    x = rng.normal(size=n)
    eta = -1.0 + 1.5 * x + (1.5 * x**2 if quadratic else 0.0)
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(int)
    return x, y


def test_hosmer_lemeshow_calibrated_under_null():
    hits = 0
    for seed in range(100):
        x, y = _simulate(np.random.default_rng(seed), 2000)
        _, p = hosmer_lemeshow(fit_logistic(x, y), x, y)
        hits += p > 0.01
    assert hits >= 95


def test_hosmer_lemeshow_detects_misspecification():
    rejections = 0
    for seed in range(20):
        x, y = _simulate(np.random.default_rng(1000 + seed), 5000, quadratic=True)
        _, p = hosmer_lemeshow(fit_logistic(x, y), x, y)
        rejections += p < 0.05
    assert rejections >= 15
