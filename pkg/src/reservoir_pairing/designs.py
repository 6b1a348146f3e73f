"""The five assignment policies compared in the benchmark harness.

Each sequential policy is available both as a pure-Python ``DesignPolicy``
(driven by ``core.run_stream``) and through a compiled fast path
(``run_design``); the two produce identical decisions.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .core import (
    Decision,
    InputError,
    PairingState,
    RandomSource,
    RunResult,
    RunTrace,
    run_stream,
)
from .numerics import (
    ColumnStats,
    NotPositiveDefiniteError,
    _f_quantile_warm,
    cholesky_factor,
    f_quantile,
    mahalanobis_sq,
)

DESIGN_NAMES = ("iid", "kk14", "packing", "oracle_g", "bai")


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PackingConfig:
    dimension: int
    delta: float = 0.0
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")


@dataclass(frozen=True)
class KK14Config:
    dimension: int
    quantile: float = 0.1
    burn_in: Optional[int] = None  # defaults to the covariate dimension

    def __post_init__(self) -> None:
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")
        if self.effective_burn_in < self.dimension:
            raise ValueError("burn_in must be at least the dimension")

    @property
    def effective_burn_in(self) -> int:
        return self.dimension if self.burn_in is None else self.burn_in


@dataclass(frozen=True)
class OracleGConfig:
    g: Callable[[np.ndarray], float]
    delta: float = 0.0


def packing_radius(t: int, cfg: PackingConfig) -> float:
    """Pairing cutoff at step t: t^(-1 / ((2 + delta) * d))."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return float(t) ** (-1.0 / ((2.0 + cfg.delta) * cfg.dimension))


# ---------------------------------------------------------------------------
# Pure-Python policies
# ---------------------------------------------------------------------------


class IIDPolicy:
    name = "iid"

    def reset(self, dim: int) -> None:
        pass

    def decide(self, history: np.ndarray, reservoir: Sequence[int]) -> Decision:
        return Decision.new_independent()


class PackingPolicy:
    """Pair with the nearest reservoir unit when closer than t^(-1/(2+d)d).

    With ``transform`` set, matching happens on a derived per-row
    representation (e.g. a scalar g(x)); the radius then uses the
    transformed dimension.
    """

    def __init__(
        self,
        cfg: PackingConfig,
        transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.cfg = cfg
        self.transform = transform
        self.name = "packing"
        self._rows: Optional[np.ndarray] = None
        self._n_rows = 0
        self._stats: Optional[ColumnStats] = None

    def reset(self, dim: int) -> None:
        if self.transform is None and dim != self.cfg.dimension:
            raise InputError(
                f"stream dimension {dim} does not match config dimension {self.cfg.dimension}"
            )
        self._rows = np.empty((16, self.cfg.dimension))
        self._n_rows = 0
        self._stats = ColumnStats(dim=self.cfg.dimension)

    def _append(self, row: np.ndarray) -> None:
        assert self._rows is not None
        if self._n_rows == self._rows.shape[0]:
            grown = np.empty((2 * self._n_rows, self.cfg.dimension))
            grown[: self._n_rows] = self._rows
            self._rows = grown
        self._rows[self._n_rows] = row
        self._n_rows += 1

    def decide(self, history: np.ndarray, reservoir: Sequence[int]) -> Decision:
        t = history.shape[0]
        x = history[-1]
        if self.transform is not None:
            x = np.atleast_1d(np.asarray(self.transform(x), dtype=float))
        self._append(x)
        assert self._stats is not None
        self._stats.update(x)
        if not reservoir:
            return Decision.new_independent()
        scale = self._stats.scale() if self.cfg.standardize else np.ones(self.cfg.dimension)
        res = np.asarray(reservoir, dtype=np.int64)
        rows = self._rows[res - 1]
        diff = (x - rows) / scale
        d2 = np.einsum("ij,ij->i", diff, diff)
        best = int(np.argmin(d2))
        dist = float(np.sqrt(d2[best]))
        if dist < packing_radius(t, self.cfg):
            return Decision.pair_with(int(res[best]), match_distance=dist)
        return Decision.new_independent()


class KK14Policy:
    """Pair on Mahalanobis distance under an F-quantile cutoff.

    Burn-in arrivals all enter the reservoir; afterwards the sample
    covariance of the first t-1 rows (denominator t-2) defines the metric,
    and the squared-distance cutoff is (2d(t-1)/(t-d)) * F_q(d, t-d).
    """

    def __init__(self, cfg: KK14Config):
        self.cfg = cfg
        self.name = "kk14"
        self._count = 0
        self._mean: Optional[np.ndarray] = None
        self._m2: Optional[np.ndarray] = None

    def reset(self, dim: int) -> None:
        if dim != self.cfg.dimension:
            raise InputError(
                f"stream dimension {dim} does not match config dimension {self.cfg.dimension}"
            )
        self._count = 0
        self._mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def _fold(self, x: np.ndarray) -> None:
        assert self._mean is not None and self._m2 is not None
        self._count += 1
        delta = x - self._mean
        self._mean += delta / self._count
        self._m2 += np.outer(delta, x - self._mean)

    def decide(self, history: np.ndarray, reservoir: Sequence[int]) -> Decision:
        t = history.shape[0]
        x = history[-1]
        decision = Decision.new_independent()
        if t > self.cfg.effective_burn_in and reservoir and self._count >= 2:
            assert self._m2 is not None
            cov = self._m2 / (self._count - 1)
            try:
                factor = cholesky_factor(cov)
            except NotPositiveDefiniteError:
                factor = None
            if factor is not None:
                best_idx = -1
                best_d2 = np.inf
                for s in reservoir:
                    d2 = mahalanobis_sq(x, history[s - 1], factor)
                    if d2 < best_d2:
                        best_d2 = d2
                        best_idx = s
                if best_d2 < kk14_cutoff(self.cfg.quantile, self.cfg.dimension, t):
                    decision = Decision.pair_with(
                        best_idx, match_distance=float(np.sqrt(best_d2))
                    )
        self._fold(x)
        return decision


def iid_policy() -> IIDPolicy:
    return IIDPolicy()


def packing_policy(cfg: PackingConfig) -> PackingPolicy:
    return PackingPolicy(cfg)


def kk14_policy(cfg: KK14Config) -> KK14Policy:
    return KK14Policy(cfg)


def oracle_g_policy(cfg: OracleGConfig) -> PackingPolicy:
    """Packing on the derived scalar g(x); the radius uses dimension 1."""
    inner = PackingConfig(dimension=1, delta=cfg.delta, standardize=True)
    policy = PackingPolicy(inner, transform=lambda row: np.asarray([cfg.g(row)]))
    policy.name = "oracle_g"
    return policy


# ---------------------------------------------------------------------------
# KK14 cutoff sequence (cached, warm-started quantile inversion)
# ---------------------------------------------------------------------------

_CUTOFF_CACHE: dict[tuple[float, int], np.ndarray] = {}
_CUTOFF_LOCK = threading.Lock()


def kk14_cutoff(quantile: float, d: int, t: int) -> float:
    """Squared-distance cutoff (2d(t-1)/(t-d)) * F_q(d, t-d) at step t.

    Reads the dense per-step cache when one covers t; a single faraway
    query inverts the F CDF directly instead of growing the cache.
    """
    if t <= d:
        raise ValueError("cutoff requires t > d")
    with _CUTOFF_LOCK:
        cached = _CUTOFF_CACHE.get((quantile, d))
        if cached is not None and len(cached) > t:
            return float(cached[t])
    return 2.0 * d * (t - 1) / (t - d) * f_quantile(quantile, d, t - d)


def _cutoff_array(quantile: float, d: int, t_max: int) -> np.ndarray:
    """Cutoffs indexed by 1-based t, valid for t in (d, t_max]."""
    key = (quantile, d)
    with _CUTOFF_LOCK:
        cached = _CUTOFF_CACHE.get(key)
        if cached is not None and len(cached) > t_max:
            return cached
        size = max(t_max + 1, 2 * len(cached) if cached is not None else 1024)
        out = np.full(size, np.nan)
        start = d + 1
        q_prev = f_quantile(quantile, d, 1)
        if cached is not None:
            out[: len(cached)] = cached
            start = len(cached)
            q_prev = out[start - 1] * (start - 1 - d) / (2.0 * d * (start - 2))
        for t in range(start, size):
            q = _f_quantile_warm(quantile, d, t - d, q_prev)
            out[t] = 2.0 * d * (t - 1) / (t - d) * q
            q_prev = q
        _CUTOFF_CACHE[key] = out
        return out


# ---------------------------------------------------------------------------
# Fast runners
# ---------------------------------------------------------------------------


def _result_from_kernel(
    x: np.ndarray,
    raw: np.ndarray,
    arms: np.ndarray,
    partner: np.ndarray,
    n_reservoir: np.ndarray,
    dec_dist: np.ndarray,
) -> RunResult:
    t_total = x.shape[0]
    paired_t = np.flatnonzero(partner >= 0)
    lo = np.minimum(partner[paired_t], paired_t) + 1
    hi = np.maximum(partner[paired_t], paired_t) + 1
    raw_dist = np.linalg.norm(raw[hi - 1] - raw[lo - 1], axis=1)
    matched = set(lo.tolist()) | set(hi.tolist())
    reservoir = [i for i in range(1, t_total + 1) if i not in matched]
    state = PairingState(
        reservoir=reservoir,
        matches=[(int(a), int(b)) for a, b in zip(lo, hi)],
    )
    trace = RunTrace(
        n_reservoir=n_reservoir,
        pair_step=paired_t + 1,
        pair_lo=lo,
        pair_hi=hi,
        pair_raw_distance=raw_dist,
        pair_decision_distance=dec_dist[paired_t],
    )
    return RunResult(arms=arms, state=state, trace=trace)


def run_packing(
    x: np.ndarray,
    cfg: PackingConfig,
    rng: RandomSource,
    raw_units: Optional[np.ndarray] = None,
) -> RunResult:
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    if x.shape[1] != cfg.dimension:
        raise InputError(
            f"stream dimension {x.shape[1]} does not match config dimension {cfg.dimension}"
        )
    raw = x if raw_units is None else np.atleast_2d(np.asarray(raw_units, dtype=float))
    coins = rng.generator().integers(0, 2, size=x.shape[0]).astype(np.int8)
    arms, partner, n_res, dec = _kernels.packing_kernel(
        x, cfg.delta, cfg.standardize, coins
    )
    return _result_from_kernel(x, raw, arms, partner, n_res, dec)


def run_oracle_g(
    g_values: np.ndarray,
    cfg: OracleGConfig | None,
    rng: RandomSource,
    raw_units: Optional[np.ndarray] = None,
    delta: float = 0.0,
) -> RunResult:
    if cfg is not None:
        delta = cfg.delta
    g = np.asarray(g_values, dtype=float).reshape(-1, 1)
    inner = PackingConfig(dimension=1, delta=delta, standardize=True)
    return run_packing(g, inner, rng, raw_units=raw_units)


def run_kk14(
    x: np.ndarray,
    cfg: KK14Config,
    rng: RandomSource,
    raw_units: Optional[np.ndarray] = None,
) -> RunResult:
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    if x.shape[1] != cfg.dimension:
        raise InputError(
            f"stream dimension {x.shape[1]} does not match config dimension {cfg.dimension}"
        )
    raw = x if raw_units is None else np.atleast_2d(np.asarray(raw_units, dtype=float))
    t_total = x.shape[0]
    d = cfg.dimension
    cut_src = _cutoff_array(cfg.quantile, d, t_total)
    cutoffs = np.full(t_total, np.inf)
    if t_total > d:
        cutoffs[d : t_total] = cut_src[d + 1 : t_total + 1]
    coins = rng.generator().integers(0, 2, size=t_total).astype(np.int8)
    arms, partner, n_res, dec = _kernels.kk14_kernel(
        x, cfg.effective_burn_in, cutoffs, coins
    )
    return _result_from_kernel(x, raw, arms, partner, n_res, dec)


def run_iid(x: np.ndarray, rng: RandomSource) -> RunResult:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t_total = x.shape[0]
    arms = rng.generator().integers(0, 2, size=t_total).astype(np.int8)
    state = PairingState(reservoir=list(range(1, t_total + 1)), matches=[])
    empty_f = np.empty(0, dtype=float)
    empty_i = np.empty(0, dtype=np.int64)
    trace = RunTrace(
        n_reservoir=np.arange(1, t_total + 1, dtype=np.int64),
        pair_step=empty_i,
        pair_lo=empty_i.copy(),
        pair_hi=empty_i.copy(),
        pair_raw_distance=empty_f,
        pair_decision_distance=empty_f.copy(),
    )
    return RunResult(arms=arms, state=state, trace=trace)


# ---------------------------------------------------------------------------
# Offline optimal matching on g(X)
# ---------------------------------------------------------------------------


def bai_optimal_matching(g_values: np.ndarray) -> list[tuple[int, int]]:
    """Sort units by g and pair consecutive ranks; 1-based canonical pairs.

    With an odd count the last-ranked unit stays unpaired. Ties in g are
    broken by arrival index (stable sort).
    """
    g = np.asarray(g_values, dtype=float)
    if g.ndim != 1:
        raise InputError("g_values must be a 1-d vector")
    if not np.all(np.isfinite(g)):
        raise InputError("g_values must be finite")
    order = np.argsort(g, kind="stable")
    pairs = []
    for k in range(0, len(g) - 1, 2):
        i = int(order[k]) + 1
        j = int(order[k + 1]) + 1
        pairs.append((min(i, j), max(i, j)))
    return pairs


def run_bai_optimal(
    g_values: np.ndarray,
    rng: RandomSource,
    raw_units: Optional[np.ndarray] = None,
) -> RunResult:
    """Offline benchmark: requires the whole g vector up front.

    Within each pair the treated unit is a fair-coin draw; an odd leftover
    unit gets an independent coin.
    """
    g = np.asarray(g_values, dtype=float)
    t_total = len(g)
    pairs = bai_optimal_matching(g)
    order = np.argsort(g, kind="stable")
    gen = rng.generator()
    coins = gen.integers(0, 2, size=len(pairs) + (t_total % 2))
    arms = np.zeros(t_total, dtype=np.int8)
    for k in range(0, t_total - 1, 2):
        i = int(order[k])
        j = int(order[k + 1])
        c = int(coins[k // 2])
        arms[i] = c
        arms[j] = 1 - c
    reservoir: list[int] = []
    if t_total % 2 == 1:
        leftover = int(order[-1])
        arms[leftover] = int(coins[-1])
        reservoir = [leftover + 1]
    state = PairingState(reservoir=reservoir, matches=sorted(pairs))
    lo = np.asarray([p[0] for p in state.matches], dtype=np.int64)
    hi = np.asarray([p[1] for p in state.matches], dtype=np.int64)
    if raw_units is not None:
        raw = np.atleast_2d(np.asarray(raw_units, dtype=float))
        raw_dist = (
            np.linalg.norm(raw[hi - 1] - raw[lo - 1], axis=1)
            if len(lo)
            else np.empty(0)
        )
    else:
        raw_dist = np.abs(g[hi - 1] - g[lo - 1]) if len(lo) else np.empty(0)
    trace = RunTrace(
        n_reservoir=np.full(t_total, len(reservoir), dtype=np.int64),
        pair_step=np.full(len(lo), t_total, dtype=np.int64),
        pair_lo=lo,
        pair_hi=hi,
        pair_raw_distance=raw_dist,
        pair_decision_distance=np.abs(g[hi - 1] - g[lo - 1]) if len(lo) else np.empty(0),
    )
    return RunResult(arms=arms, state=state, trace=trace)
