"""Treatment-effect estimation and exact variance oracles."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ContractViolationError, InputError, RunTrace

ModelFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OutcomeModel:
    """Conditional outcome moments for a data-generating process.

    All callables are vectorized: they take an (n, d) covariate matrix and
    return an (n,) vector. ``tau`` is the population average treatment
    effect; ``sigma_red_sq`` optionally carries the limiting variance of
    an asymptotically perfectly paired design.
    """

    mu1: ModelFn
    mu0: ModelFn
    var1: ModelFn
    var0: ModelFn
    tau: float
    sigma_red_sq: Optional[float] = None

    def g(self, x: np.ndarray) -> np.ndarray:
        """Sum of conditional mean outcomes mu1 + mu0."""
        return self.mu1(x) + self.mu0(x)

    def g_scalar(self, row: np.ndarray) -> float:
        return float(self.g(np.atleast_2d(row))[0])


def ipw_estimate(arms: np.ndarray, outcomes: np.ndarray) -> float:
    """Inverse-propensity-weighted effect estimate (2/T) sum (2Z-1) Y."""
    z = np.asarray(arms, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if z.shape != y.shape or z.ndim != 1:
        raise InputError("arms and outcomes must be equal-length vectors")
    t = len(z)
    if t == 0:
        raise InputError("empty input")
    return float(2.0 / t * np.sum((2.0 * z - 1.0) * y))


def _validate_matches(matches: Sequence[tuple[int, int]], t: int) -> None:
    seen: set[int] = set()
    for i, j in matches:
        if i == j or not (1 <= i <= t) or not (1 <= j <= t):
            raise ContractViolationError(f"invalid pair ({i}, {j}) for T={t}")
        if i in seen or j in seen:
            raise ContractViolationError(f"unit appears in more than one pair: ({i}, {j})")
        seen.add(i)
        seen.add(j)


def conditional_variance(
    model: OutcomeModel,
    covariates: np.ndarray,
    matches: Sequence[tuple[int, int]],
) -> float:
    """Var of the IPW estimate given covariates, for any reservoir design.

    (1/T^2) sum_i (2 s1_i^2 + 2 s0_i^2 + g_i^2) - (2/T^2) sum_pairs g_i g_j.
    """
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    t = x.shape[0]
    _validate_matches(matches, t)
    g = model.g(x)
    per_unit = 2.0 * model.var1(x) + 2.0 * model.var0(x) + g**2
    total = float(np.sum(per_unit)) / t**2
    for i, j in matches:
        total -= 2.0 * g[i - 1] * g[j - 1] / t**2
    return total


def empty_reservoir_variance(
    model: OutcomeModel,
    covariates: np.ndarray,
    matches: Sequence[tuple[int, int]],
) -> float:
    """Variance formula specialized to a fully paired experiment."""
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    t = x.shape[0]
    _validate_matches(matches, t)
    if 2 * len(matches) != t:
        raise ContractViolationError("every unit must be paired")
    g = model.g(x)
    v1 = model.var1(x)
    v0 = model.var0(x)
    total = 0.0
    for i, j in matches:
        total += (
            2.0 * v1[i - 1]
            + 2.0 * v0[i - 1]
            + 2.0 * v1[j - 1]
            + 2.0 * v0[j - 1]
            + (g[i - 1] - g[j - 1]) ** 2
        )
    return total / t**2


ENUMERATION_BUDGET = 20


def exact_variance_oracle(
    model: OutcomeModel,
    covariates: np.ndarray,
    matches: Sequence[tuple[int, int]],
) -> float:
    """Exact Var(tau_hat | X) by enumerating admissible treatment vectors.

    Reservoir units carry independent fair coins; within a pair the arms
    are anti-correlated. Uses only the first and second conditional
    moments via the law of total variance, so it is independent of the
    closed-form variance expression it is used to check.
    """
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    t = x.shape[0]
    _validate_matches(matches, t)
    paired = {i for pair in matches for i in pair}
    reservoir = [i for i in range(1, t + 1) if i not in paired]
    n_free = len(reservoir) + len(matches)
    if n_free > ENUMERATION_BUDGET:
        raise ValueError(
            f"enumeration over 2^{n_free} treatment vectors exceeds the budget "
            f"of 2^{ENUMERATION_BUDGET}"
        )
    mu1 = model.mu1(x)
    mu0 = model.mu0(x)
    v1 = model.var1(x)
    v0 = model.var0(x)

    means = []
    noise_vars = []
    for bits in product((0, 1), repeat=n_free):
        z = np.zeros(t, dtype=int)
        for k, i in enumerate(reservoir):
            z[i - 1] = bits[k]
        for k, (i, j) in enumerate(matches):
            b = bits[len(reservoir) + k]
            z[i - 1] = b
            z[j - 1] = 1 - b
        sign = 2.0 * z - 1.0
        mu_z = np.where(z == 1, mu1, mu0)
        var_z = np.where(z == 1, v1, v0)
        means.append(2.0 / t * float(np.sum(sign * mu_z)))
        noise_vars.append(4.0 / t**2 * float(np.sum(var_z)))
    means_arr = np.asarray(means)
    return float(np.mean(noise_vars) + np.mean(means_arr**2) - np.mean(means_arr) ** 2)


@dataclass(frozen=True)
class MonteCarloValue:
    value: float
    stderr: float


def sigma_red_sq(
    model: OutcomeModel,
    x_sampler: Callable[[np.random.Generator, int], np.ndarray],
    n_mc: int,
    seed: int = 0,
    n_batches: int = 20,
) -> MonteCarloValue:
    """Monte-Carlo estimate of the limiting paired-design variance.

    Var(Y(1)) + Var(Y(0)) - Var(g(X)) / 2, with a batch-based standard
    error on the estimate.
    """
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 10^4")
    gen = np.random.default_rng(seed)
    batch = n_mc // n_batches
    values = []
    for _ in range(n_batches):
        x = np.atleast_2d(x_sampler(gen, batch))
        m1 = model.mu1(x)
        m0 = model.mu0(x)
        s1 = float(np.mean(model.var1(x)) + np.var(m1))
        s0 = float(np.mean(model.var0(x)) + np.var(m0))
        values.append(s1 + s0 - 0.5 * float(np.var(m1 + m0)))
    values_arr = np.asarray(values)
    return MonteCarloValue(
        value=float(np.mean(values_arr)),
        stderr=float(np.std(values_arr, ddof=1) / np.sqrt(n_batches)),
    )


@dataclass
class DiagnosticsTrace:
    """Per-step reservoir size and cumulative mean intra-pair distances."""

    step: np.ndarray  # 1..T
    n_reservoir: np.ndarray
    mean_raw_pair_distance: np.ndarray  # nan before the first pair
    mean_decision_pair_distance: np.ndarray
    final_n_pairs: int

    @property
    def final_mean_raw_distance(self) -> float:
        return float(self.mean_raw_pair_distance[-1])


def diagnostics(trace: RunTrace) -> DiagnosticsTrace:
    """Summarize a completed run into per-step diagnostic series.

    The distance series are cumulative means over the pairs formed up to
    each step (the matched-pair average plotted in the paper-style
    diagnostics figures).
    """
    t_total = len(trace.n_reservoir)
    step = np.arange(1, t_total + 1, dtype=np.int64)
    raw_series = np.full(t_total, np.nan)
    dec_series = np.full(t_total, np.nan)
    if trace.n_pairs > 0:
        order = np.argsort(trace.pair_step, kind="stable")
        steps = trace.pair_step[order]
        raw_cum = np.cumsum(trace.pair_raw_distance[order])
        dec_cum = np.cumsum(trace.pair_decision_distance[order])
        counts = np.arange(1, len(steps) + 1)
        # index of the last pair formed at or before each step
        pos = np.searchsorted(steps, step, side="right")
        has_pair = pos > 0
        raw_series[has_pair] = raw_cum[pos[has_pair] - 1] / counts[pos[has_pair] - 1]
        dec_series[has_pair] = dec_cum[pos[has_pair] - 1] / counts[pos[has_pair] - 1]
    return DiagnosticsTrace(
        step=step,
        n_reservoir=np.asarray(trace.n_reservoir, dtype=np.int64),
        mean_raw_pair_distance=raw_series,
        mean_decision_pair_distance=dec_series,
        final_n_pairs=trace.n_pairs,
    )
