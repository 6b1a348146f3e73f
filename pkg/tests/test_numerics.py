"""Numerical-kernel tests, cross-checked against closed forms, scipy, and
finite-difference oracles."""

import math

import numpy as np
import pytest
import scipy.optimize
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reservoir_pairing.numerics import (
    ColumnStats,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    chisq_cdf,
    chisq_quantile,
    cholesky_factor,
    f_cdf,
    f_quantile,
    logistic_fit,
    logistic_predict,
    mahalanobis_sq,
    pca_fit,
    pca_project,
    standardize,
)

# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------


def test_standardize_single_row_is_zero():
    assert np.array_equal(standardize(np.array([[3.0, -1.0]])), np.zeros((1, 2)))


def test_standardize_two_point_column():
    out = standardize(np.array([[0.0], [2.0]]))
    assert np.allclose(out, [[-1.0], [1.0]], atol=1e-15)


def test_standardize_constant_column():
    out = standardize(np.full((5, 2), 7.0))
    assert np.array_equal(out, np.zeros((5, 2)))


@settings(max_examples=50, deadline=None)
@given(
    arrays(
        np.float64,
        st.tuples(st.integers(2, 20), st.integers(1, 4)),
        elements=st.floats(-1e3, 1e3),
    )
)
def test_standardize_idempotent(x):
    once = standardize(x)
    twice = standardize(once)
    assert np.allclose(once, twice, atol=1e-10)


def test_column_stats_match_batch():
    gen = np.random.default_rng(0)
    x = gen.normal(size=(137, 3)) * 10 + 5
    stats = ColumnStats.from_matrix(x)
    assert np.allclose(stats.mean, x.mean(axis=0), rtol=1e-10)
    assert np.allclose(stats.std, x.std(axis=0), rtol=1e-10)


def test_column_stats_rejects_wrong_dim():
    stats = ColumnStats(dim=2)
    with pytest.raises(DimensionMismatchError):
        stats.update(np.zeros(3))


# ---------------------------------------------------------------------------
# Cholesky / Mahalanobis
# ---------------------------------------------------------------------------


def test_cholesky_reconstructs():
    gen = np.random.default_rng(1)
    a = gen.normal(size=(4, 4))
    sigma = a @ a.T + 4 * np.eye(4)
    f = cholesky_factor(sigma)
    assert np.allclose(f.lower @ f.lower.T, sigma, rtol=1e-8)


def test_cholesky_rejects_non_pd():
    with pytest.raises(NotPositiveDefiniteError):
        cholesky_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DimensionMismatchError):
        cholesky_factor(np.zeros((2, 3)))


def test_mahalanobis_examples():
    f = cholesky_factor(np.eye(3))
    x = np.array([1.0, 2.0, 3.0])
    assert mahalanobis_sq(x, x, f) == 0.0
    y = np.array([0.0, 0.0, 0.0])
    assert mahalanobis_sq(x, y, f) == pytest.approx(14.0, rel=1e-12)
    f2 = cholesky_factor(np.diag([4.0, 1.0]))
    assert mahalanobis_sq(np.array([2.0, 0.0]), np.zeros(2), f2) == pytest.approx(1.0, rel=1e-12)


def test_mahalanobis_scaled_identity():
    gen = np.random.default_rng(2)
    for c in (0.25, 1.0, 9.0):
        f = cholesky_factor(c * np.eye(3))
        x, y = gen.normal(size=3), gen.normal(size=3)
        want = float(np.sum((x - y) ** 2)) / c
        assert mahalanobis_sq(x, y, f) == pytest.approx(want, rel=1e-10)


def test_mahalanobis_symmetric_and_checks_dims():
    gen = np.random.default_rng(3)
    a = gen.normal(size=(3, 3))
    f = cholesky_factor(a @ a.T + np.eye(3))
    x, y = gen.normal(size=3), gen.normal(size=3)
    assert mahalanobis_sq(x, y, f) == pytest.approx(mahalanobis_sq(y, x, f), rel=1e-12)
    with pytest.raises(DimensionMismatchError):
        mahalanobis_sq(np.zeros(2), np.zeros(2), f)


# ---------------------------------------------------------------------------
# quantiles
# ---------------------------------------------------------------------------


def test_chisq_median_two_df():
    assert chisq_quantile(0.5, 2) == pytest.approx(2.0 * math.log(2.0), abs=1e-9)


def test_f_median_one_one():
    assert f_quantile(0.5, 1, 1) == pytest.approx(1.0, abs=1e-9)


def test_quantile_round_trips():
    ps = np.linspace(0.01, 0.99, 25)
    for d in range(1, 11):
        for p in ps:
            assert abs(chisq_cdf(chisq_quantile(p, d), d) - p) < 1e-9
            assert abs(f_cdf(f_quantile(p, d, d + 3), d, d + 3) - p) < 1e-9


def test_quantiles_against_scipy():
    ps = (0.01, 0.1, 0.5, 0.9, 0.99)
    for d in (1, 2, 5, 10):
        for p in ps:
            assert chisq_quantile(p, d) == pytest.approx(
                scipy.stats.chi2.ppf(p, d), rel=1e-6, abs=1e-9
            )
            for d2 in (1, 7, 200):
                assert f_quantile(p, d, d2) == pytest.approx(
                    scipy.stats.f.ppf(p, d, d2), rel=1e-6, abs=1e-9
                )


def test_f_limit_is_scaled_chisq():
    for p in (0.1, 0.5, 0.9):
        for d1 in (1, 3, 6):
            lhs = d1 * f_quantile(p, d1, 1_000_000)
            rhs = chisq_quantile(p, d1)
            assert abs(lhs - rhs) / rhs < 1e-3


def test_quantiles_monotone_in_p():
    qs = [chisq_quantile(p, 4) for p in np.linspace(0.05, 0.95, 19)]
    assert all(a < b for a, b in zip(qs, qs[1:]))
    qs = [f_quantile(p, 3, 8) for p in np.linspace(0.05, 0.95, 19)]
    assert all(a < b for a, b in zip(qs, qs[1:]))


def test_quantiles_reject_bad_p():
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            chisq_quantile(bad, 2)
        with pytest.raises(ValueError):
            f_quantile(bad, 2, 2)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


def test_pca_axis_alignment():
    gen = np.random.default_rng(4)
    x = gen.normal(size=(10_000, 3)) * np.array([5.0, 2.0, 0.5])
    basis = pca_fit(x, 3)
    for k, axis in enumerate(np.eye(3)):
        assert abs(float(basis.components[k] @ axis)) > 0.99
    assert np.all(np.diff(basis.explained_variance) <= 0)


def test_pca_single_dimension():
    x = np.random.default_rng(5).normal(size=(50, 1))
    basis = pca_fit(x, 1)
    assert basis.components.shape == (1, 1)
    assert abs(abs(basis.components[0, 0]) - 1.0) < 1e-12


def test_pca_projects_training_mean_to_zero():
    x = np.random.default_rng(6).normal(size=(200, 4)) + 3.0
    basis = pca_fit(x, 2)
    assert np.allclose(pca_project(basis, x.mean(axis=0)), 0.0, atol=1e-10)


def test_pca_full_rank_reconstruction():
    gen = np.random.default_rng(7)
    x = gen.normal(size=(100, 3)) @ gen.normal(size=(3, 3))
    basis = pca_fit(x, 3)
    proj = pca_project(basis, x)
    recon = proj @ basis.components + basis.mean
    assert np.allclose(recon, x, atol=1e-8)
    assert np.allclose(basis.components @ basis.components.T, np.eye(3), atol=1e-8)


def test_pca_rejects_bad_shapes():
    with pytest.raises(ValueError):
        pca_fit(np.zeros((10, 2)), 3)
    with pytest.raises(ValueError):
        pca_fit(np.zeros((2, 5)), 1)


def test_pca_deterministic_sign():
    x = np.random.default_rng(8).normal(size=(500, 2))
    a = pca_fit(x, 2)
    b = pca_fit(x[::-1].copy()[::-1], 2)
    assert np.allclose(a.components, b.components)
    for row in a.components:
        assert row[int(np.argmax(np.abs(row)))] > 0


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------


def test_logistic_intercept_only_balanced():
    y = np.array([0.0, 1.0] * 50)
    model = logistic_fit(np.zeros((100, 0)), y)
    assert model.converged
    assert abs(model.coef[0]) < 1e-8
    assert logistic_predict(model, np.zeros((1, 0)))[0] == pytest.approx(0.5, abs=1e-8)


def test_logistic_gradient_at_optimum():
    gen = np.random.default_rng(9)
    for _ in range(5):
        x = gen.normal(size=(400, 3))
        p = 1.0 / (1.0 + np.exp(-(0.3 + x @ [0.5, -1.0, 0.2])))
        y = (gen.random(400) < p).astype(float)
        model = logistic_fit(x, y)
        assert model.converged
        assert model.grad_norm < 1e-8


def test_logistic_matches_independent_optimizer():
    # the duplicated two-point dataset with 10% label noise
    x = np.array([[-1.0], [1.0]] * 100)
    y = np.array([0.0, 1.0] * 100)
    flip = np.random.default_rng(10).choice(200, size=20, replace=False)
    y[flip] = 1.0 - y[flip]

    def negloglik(beta):
        eta = beta[0] + x[:, 0] * beta[1]
        return -np.sum(y * eta - np.logaddexp(0.0, eta))

    ours = logistic_fit(x, y)
    ref = scipy.optimize.minimize(negloglik, np.zeros(2), method="Nelder-Mead", tol=1e-12)
    # the reference gradient is finite-difference checked at its optimum
    fd = scipy.optimize.approx_fprime(ref.x, negloglik, 1e-7)
    assert np.linalg.norm(fd) < 1e-2
    assert np.allclose(ours.coef, ref.x, atol=1e-4)


def test_logistic_separation_flagged():
    x = np.array([[-2.0], [-1.0], [1.0], [2.0]] * 10)
    y = np.array([0.0, 0.0, 1.0, 1.0] * 10)
    model = logistic_fit(x, y, max_iter=25)
    assert not model.converged
    assert np.isfinite(model.coef).all()


def test_logistic_predict_shapes_and_range():
    gen = np.random.default_rng(11)
    x = gen.normal(size=(50, 2))
    y = (gen.random(50) < 0.5).astype(float)
    model = logistic_fit(x, y)
    probs = logistic_predict(model, x)
    assert probs.shape == (50,)
    assert np.all((probs > 0) & (probs < 1))
    single = logistic_predict(model, x[0])
    assert np.isscalar(single) or single.ndim == 0
    with pytest.raises(DimensionMismatchError):
        logistic_predict(model, np.zeros((2, 5)))


def test_logistic_input_validation():
    with pytest.raises(DimensionMismatchError):
        logistic_fit(np.zeros(5), np.zeros(5))
    with pytest.raises(DimensionMismatchError):
        logistic_fit(np.zeros((5, 1)), np.zeros(4))
    with pytest.raises(ValueError):
        logistic_fit(np.zeros((2, 3)), np.zeros(2))
