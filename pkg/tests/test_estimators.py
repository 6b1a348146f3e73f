"""Estimator tests: IPW values, variance formulas against the enumeration
oracle, limiting-variance Monte Carlo, diagnostics."""

import numpy as np
import pytest

from reservoir_pairing.core import (
    ContractViolationError,
    InputError,
    RandomSource,
    RunTrace,
    run_stream,
)
from reservoir_pairing.designs import PackingConfig, PackingPolicy, run_iid
from reservoir_pairing.estimators import (
    OutcomeModel,
    conditional_variance,
    diagnostics,
    empty_reservoir_variance,
    exact_variance_oracle,
    ipw_estimate,
    sigma_red_sq,
)

from conftest import random_outcome_model, random_partial_pairing


def constant_model(g_const=0.0, var=0.0):
    half = g_const / 2.0
    return OutcomeModel(
        mu1=lambda x: np.full(x.shape[0], half),
        mu0=lambda x: np.full(x.shape[0], half),
        var1=lambda x: np.full(x.shape[0], var),
        var0=lambda x: np.full(x.shape[0], var),
        tau=0.0,
    )


def linear_g_model(weights, var=0.0):
    w = np.asarray(weights, dtype=float)
    return OutcomeModel(
        mu1=lambda x: x @ w,
        mu0=lambda x: np.zeros(x.shape[0]),
        var1=lambda x: np.full(x.shape[0], var),
        var0=lambda x: np.full(x.shape[0], var),
        tau=0.0,
    )


# ---------------------------------------------------------------------------
# IPW
# ---------------------------------------------------------------------------


def test_ipw_two_units():
    assert ipw_estimate(np.array([1, 0]), np.array([3.0, 1.0])) == pytest.approx(2.0)


def test_ipw_four_units():
    assert ipw_estimate(np.array([1, 1, 0, 0]), np.array([2.0, 4.0, 1.0, 3.0])) == pytest.approx(1.0)


def test_ipw_zero_outcomes():
    assert ipw_estimate(np.array([1, 0, 1]), np.zeros(3)) == 0.0


def test_ipw_rejects_bad_input():
    with pytest.raises(InputError):
        ipw_estimate(np.array([]), np.array([]))
    with pytest.raises(InputError):
        ipw_estimate(np.array([1, 0]), np.array([1.0]))


# ---------------------------------------------------------------------------
# variance formulas
# ---------------------------------------------------------------------------


def test_conditional_variance_no_pairs_constant_g():
    t = 7
    c = 3.0
    x = np.zeros((t, 1))
    got = conditional_variance(constant_model(g_const=c), x, [])
    assert got == pytest.approx(c**2 / t, rel=1e-12)


def test_conditional_variance_perfect_pairs_zero():
    x = np.array([[1.0], [1.0], [2.0], [2.0]])
    model = linear_g_model([1.0])
    got = conditional_variance(model, x, [(1, 2), (3, 4)])
    assert got == pytest.approx(0.0, abs=1e-15)


def test_conditional_variance_against_oracle_small():
    gen = np.random.default_rng(0)
    for _ in range(25):
        t = int(gen.integers(1, 13))
        x = gen.normal(size=(t, 2))
        model = random_outcome_model(gen)
        matches = random_partial_pairing(gen, t)
        a = conditional_variance(model, x, matches)
        b = exact_variance_oracle(model, x, matches)
        assert abs(a - b) < 1e-12


def test_conditional_variance_rejects_overlap():
    x = np.zeros((4, 1))
    with pytest.raises(ContractViolationError):
        conditional_variance(constant_model(), x, [(1, 2), (2, 3)])
    with pytest.raises(ContractViolationError):
        conditional_variance(constant_model(), x, [(1, 1)])
    with pytest.raises(ContractViolationError):
        conditional_variance(constant_model(), x, [(1, 5)])


def test_empty_reservoir_hand_value():
    # one pair, g = (1, 3), no noise: (1/4) * (1 - 3)^2 = 1
    x = np.array([[1.0], [3.0]])
    got = empty_reservoir_variance(linear_g_model([1.0]), x, [(1, 2)])
    assert got == pytest.approx(1.0, rel=1e-12)


def test_empty_reservoir_equal_g_zero():
    x = np.array([[2.0], [2.0]])
    assert empty_reservoir_variance(linear_g_model([1.0]), x, [(1, 2)]) == 0.0


def test_empty_reservoir_requires_full_pairing():
    with pytest.raises(ContractViolationError):
        empty_reservoir_variance(constant_model(), np.zeros((3, 1)), [(1, 2)])


def test_full_pairing_formulas_agree():
    gen = np.random.default_rng(1)
    for _ in range(20):
        k = int(gen.integers(1, 6))
        t = 2 * k
        x = gen.normal(size=(t, 2))
        model = random_outcome_model(gen)
        perm = gen.permutation(t) + 1
        matches = [
            (min(perm[2 * i], perm[2 * i + 1]), max(perm[2 * i], perm[2 * i + 1]))
            for i in range(k)
        ]
        a = conditional_variance(model, x, matches)
        b = empty_reservoir_variance(model, x, matches)
        assert abs(a - b) < 1e-12


def test_shift_invariance_of_paired_variance():
    gen = np.random.default_rng(2)
    x = gen.normal(size=(6, 2))
    matches = [(1, 4), (2, 3), (5, 6)]
    base = linear_g_model([1.0, -0.5], var=0.2)
    shifted = OutcomeModel(
        mu1=lambda v: base.mu1(v) + 10.0,
        mu0=base.mu0,
        var1=base.var1,
        var0=base.var0,
        tau=base.tau,
    )
    a = empty_reservoir_variance(base, x, matches)
    b = empty_reservoir_variance(shifted, x, matches)
    assert a == pytest.approx(b, rel=1e-12)


def test_variance_reduction_sign():
    # pairing same-sign g units always helps
    gen = np.random.default_rng(3)
    x = np.abs(gen.normal(size=(8, 1))) + 0.5  # g > 0 everywhere
    model = linear_g_model([1.0], var=0.1)
    matches = [(1, 2), (3, 4)]
    assert conditional_variance(model, x, matches) < conditional_variance(model, x, [])


# ---------------------------------------------------------------------------
# enumeration oracle
# ---------------------------------------------------------------------------


def test_oracle_single_noiseless_unit():
    # one unit, g = 2 (mu1 = mu0 = 1), no noise: estimate is +/-2, variance 4
    x = np.zeros((1, 1))
    model = constant_model(g_const=2.0)
    assert exact_variance_oracle(model, x, []) == pytest.approx(4.0, rel=1e-12)


def test_oracle_symmetric_pair_matches_paired_formula():
    gen = np.random.default_rng(4)
    x = gen.normal(size=(2, 2))
    w = gen.normal(size=2)
    model = OutcomeModel(
        mu1=lambda v, w=w: v @ w,
        mu0=lambda v, w=w: v @ w,
        var1=lambda v: np.full(v.shape[0], 0.3),
        var0=lambda v: np.full(v.shape[0], 0.3),
        tau=0.0,
    )
    assert exact_variance_oracle(model, x, [(1, 2)]) == pytest.approx(
        empty_reservoir_variance(model, x, [(1, 2)]), abs=1e-12
    )


def test_oracle_refuses_large_instances():
    x = np.zeros((25, 1))
    with pytest.raises(ValueError):
        exact_variance_oracle(constant_model(), x, [])


def test_oracle_validates_matches():
    with pytest.raises(ContractViolationError):
        exact_variance_oracle(constant_model(), np.zeros((3, 1)), [(1, 2), (2, 3)])


# ---------------------------------------------------------------------------
# limiting variance
# ---------------------------------------------------------------------------


def test_sigma_red_constant_g_homoscedastic():
    v = 0.04
    got = sigma_red_sq(
        constant_model(g_const=5.0, var=v),
        lambda gen, n: gen.random((n, 1)),
        n_mc=20_000,
        seed=0,
    )
    assert got.value == pytest.approx(2 * v, abs=5 * got.stderr + 1e-9)


def test_sigma_red_setting1_quadrature_value():
    from reservoir_pairing.dgp import setting1

    # Var((U1+U2)^2) for independent Unif(0,1) is 381/540; closed form
    # cross-checked below by a deterministic midpoint quadrature
    n = 400
    u = (np.arange(n) + 0.5) / n
    g_grid = (u[:, None] + u[None, :]) ** 2
    var_g = float(np.mean(g_grid**2) - np.mean(g_grid) ** 2)
    assert var_g == pytest.approx(381.0 / 540.0, abs=1e-4)
    expected = 2 * 0.01 + var_g / 2.0

    setting = setting1()
    got = sigma_red_sq(
        setting.model, lambda gen, n_draw: gen.random((n_draw, 2)), n_mc=200_000, seed=1
    )
    assert got.value == pytest.approx(expected, abs=4 * got.stderr + 1e-4)


def test_sigma_red_shift_invariant():
    base = linear_g_model([1.0], var=0.05)
    shifted = OutcomeModel(
        mu1=lambda v: base.mu1(v) + 7.0,
        mu0=base.mu0,
        var1=base.var1,
        var0=base.var0,
        tau=0.0,
    )
    sampler = lambda gen, n: gen.normal(size=(n, 1))
    a = sigma_red_sq(base, sampler, n_mc=20_000, seed=2)
    b = sigma_red_sq(shifted, sampler, n_mc=20_000, seed=2)
    assert a.value == pytest.approx(b.value, rel=1e-10)


def test_sigma_red_rejects_small_n():
    with pytest.raises(ValueError):
        sigma_red_sq(constant_model(), lambda gen, n: gen.random((n, 1)), n_mc=100)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def test_diagnostics_iid_run():
    res = run_iid(np.zeros((10, 2)), RandomSource(0, 1))
    diag = diagnostics(res.trace)
    assert diag.final_n_pairs == 0
    assert np.array_equal(diag.n_reservoir, np.arange(1, 11))
    assert np.all(np.isnan(diag.mean_raw_pair_distance))


def test_diagnostics_duplicate_stream():
    policy = PackingPolicy(PackingConfig(dimension=1, standardize=False))
    res = run_stream(policy, np.ones((6, 1)), RandomSource(0, 1))
    diag = diagnostics(res.trace)
    assert diag.final_n_pairs == 3
    assert diag.final_mean_raw_distance == 0.0


def test_diagnostics_hand_trace_series():
    trace = RunTrace(
        n_reservoir=np.array([1, 2, 1, 2, 1, 0]),
        pair_step=np.array([3, 5, 6]),
        pair_lo=np.array([1, 2, 4]),
        pair_hi=np.array([3, 5, 6]),
        pair_raw_distance=np.array([1.0, 3.0, 5.0]),
        pair_decision_distance=np.array([1.0, 3.0, 5.0]),
    )
    diag = diagnostics(trace)
    assert np.array_equal(diag.n_reservoir, [1, 2, 1, 2, 1, 0])
    assert np.isnan(diag.mean_raw_pair_distance[0])
    assert np.isnan(diag.mean_raw_pair_distance[1])
    assert diag.mean_raw_pair_distance[2] == pytest.approx(1.0)
    assert diag.mean_raw_pair_distance[3] == pytest.approx(1.0)
    assert diag.mean_raw_pair_distance[4] == pytest.approx(2.0)
    assert diag.mean_raw_pair_distance[5] == pytest.approx(3.0)
