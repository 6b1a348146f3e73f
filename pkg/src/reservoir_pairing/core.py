"""Sequential assignment engine for reservoir designs.

A stream of covariate rows arrives one at a time. Each arrival either
enters the reservoir with a fresh fair-coin treatment or pairs with a
reservoir unit and receives the opposite treatment. Pairing decisions are
deterministic functions of the covariates seen so far; policies never see
outcomes or future covariates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np


class ContractViolationError(RuntimeError):
    """A pairing decision broke the reservoir-design contract."""


class InputError(ValueError):
    """Malformed input stream (e.g. inconsistent row dimensions)."""


@dataclass(frozen=True)
class UnitRecord:
    """One arrival: 1-based index, covariates, assigned arm, outcome."""

    index: int
    covariates: np.ndarray
    arm: int
    outcome: Optional[float] = None

    def __post_init__(self) -> None:
        if self.index < 1:
            raise InputError("index must be >= 1")
        if self.arm not in (0, 1):
            raise InputError("arm must be 0 or 1")
        if self.outcome is not None and not np.isfinite(self.outcome):
            raise InputError("observed outcome must be finite")


@dataclass(frozen=True)
class Decision:
    """Either enter the reservoir or pair with a reservoir unit.

    ``match_distance`` optionally carries the decision-space distance to
    the chosen partner, for diagnostics.
    """

    partner: Optional[int] = None
    match_distance: Optional[float] = None

    @property
    def is_pairing(self) -> bool:
        return self.partner is not None

    @classmethod
    def new_independent(cls) -> "Decision":
        return cls()

    @classmethod
    def pair_with(cls, partner: int, match_distance: Optional[float] = None) -> "Decision":
        return cls(partner=partner, match_distance=match_distance)


@dataclass
class PairingState:
    """Reservoir index set and matched pairs; indices are 1-based.

    The reservoir list is kept in ascending order and pairs are stored as
    canonical (min, max) tuples.
    """

    reservoir: list[int] = field(default_factory=list)
    matches: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n_reservoir(self) -> int:
        return len(self.reservoir)

    @property
    def n_matched(self) -> int:
        return 2 * len(self.matches)

    @property
    def n_units(self) -> int:
        return self.n_reservoir + self.n_matched

    def check_partition(self) -> None:
        """Verify reservoir + flattened matches partition {1..t}."""
        seen = list(self.reservoir)
        for i, j in self.matches:
            seen.extend((i, j))
        if len(set(seen)) != len(seen):
            raise ContractViolationError("duplicate unit index in state")
        if seen and set(seen) != set(range(1, len(seen) + 1)):
            raise ContractViolationError("state does not partition {1..t}")


@dataclass(frozen=True)
class RandomSource:
    """Seeded, streamed randomness.

    Identical (seed, stream) pairs reproduce identical draw sequences
    bit-exactly; distinct streams are statistically independent. Treatment
    draws and data draws must use distinct streams.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = (self.seed & 0xFFFFFFFFFFFFFFFF, self.stream & 0xFFFFFFFFFFFFFFFF)
        return np.random.Generator(np.random.Philox(key=key))


class DesignPolicy(Protocol):
    """Sequential assignment rule.

    ``decide`` receives the covariates of units 1..t (the last row is the
    new arrival) and the current reservoir indices, and returns a
    Decision. The interface exposes no outcomes and no future covariates.
    """

    name: str

    def reset(self, dim: int) -> None: ...

    def decide(self, history: np.ndarray, reservoir: Sequence[int]) -> Decision: ...


def engine_step(
    state: PairingState,
    arms: Sequence[int],
    decision: Decision,
    coin: int,
) -> tuple[int, PairingState]:
    """Apply one decision; returns the assigned arm and the new state.

    ``coin`` is the pre-drawn fair coin used only if the unit enters the
    reservoir; a paired unit takes the opposite arm of its partner and
    does not consume a coin.
    """
    t = state.n_units + 1
    if decision.is_pairing:
        partner = decision.partner
        if partner not in state.reservoir:
            raise ContractViolationError(
                f"PairWith({partner}) at t={t}: index not in reservoir {state.reservoir}"
            )
        arm = 1 - arms[partner - 1]
        reservoir = [s for s in state.reservoir if s != partner]
        matches = state.matches + [(min(partner, t), max(partner, t))]
        return arm, PairingState(reservoir=reservoir, matches=matches)
    arm = int(coin)
    if arm not in (0, 1):
        raise ContractViolationError("coin must be 0 or 1")
    return arm, PairingState(
        reservoir=state.reservoir + [t], matches=list(state.matches)
    )


@dataclass
class RunTrace:
    """Per-step diagnostics collected during an assignment pass."""

    n_reservoir: np.ndarray  # (T,) reservoir size after each step
    pair_step: np.ndarray  # (n_pairs,) step t at which each pair formed
    pair_lo: np.ndarray  # (n_pairs,) lower index of each pair
    pair_hi: np.ndarray  # (n_pairs,) higher index of each pair
    pair_raw_distance: np.ndarray  # Euclidean distance in raw covariates
    pair_decision_distance: np.ndarray  # distance in the policy's decision space

    @property
    def n_pairs(self) -> int:
        return len(self.pair_step)


@dataclass
class RunResult:
    arms: np.ndarray  # (T,) in {0, 1}
    state: PairingState
    trace: RunTrace


def _as_stream_matrix(units) -> np.ndarray:
    try:
        x = np.asarray(units, dtype=float)
    except ValueError as exc:
        raise InputError(f"inconsistent covariate rows: {exc}") from exc
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise InputError(f"expected a (T, d) covariate stream, got shape {x.shape}")
    return x


def run_stream(
    policy: DesignPolicy,
    units,
    rng: RandomSource,
    raw_units: Optional[np.ndarray] = None,
) -> RunResult:
    """Run a policy over a covariate stream.

    Fair coins for the whole stream are pre-drawn from ``rng`` so the coin
    consumed by the k-th reservoir entry does not depend on how earlier
    decisions interleave. ``raw_units`` optionally supplies the
    raw-coordinate rows used for intra-pair distance diagnostics when
    ``units`` is a derived matching representation.
    """
    x = _as_stream_matrix(units)
    raw = x if raw_units is None else _as_stream_matrix(raw_units)
    t_total, dim = x.shape
    gen = rng.generator()
    coins = gen.integers(0, 2, size=t_total)
    n_coins_used = 0

    policy.reset(dim)
    state = PairingState()
    arms = np.zeros(t_total, dtype=np.int8)
    n_reservoir = np.zeros(t_total, dtype=np.int64)
    pair_step: list[int] = []
    pair_lo: list[int] = []
    pair_hi: list[int] = []
    pair_raw: list[float] = []
    pair_dec: list[float] = []

    for t in range(1, t_total + 1):
        decision = policy.decide(x[:t], state.reservoir)
        coin = int(coins[n_coins_used]) if not decision.is_pairing else 0
        arm, state = engine_step(state, arms, decision, coin)
        arms[t - 1] = arm
        if decision.is_pairing:
            s = decision.partner
            pair_step.append(t)
            pair_lo.append(min(s, t))
            pair_hi.append(max(s, t))
            pair_raw.append(float(np.linalg.norm(raw[t - 1] - raw[s - 1])))
            dec = decision.match_distance
            pair_dec.append(float(dec) if dec is not None else np.nan)
        else:
            n_coins_used += 1
        n_reservoir[t - 1] = state.n_reservoir

    trace = RunTrace(
        n_reservoir=n_reservoir,
        pair_step=np.asarray(pair_step, dtype=np.int64),
        pair_lo=np.asarray(pair_lo, dtype=np.int64),
        pair_hi=np.asarray(pair_hi, dtype=np.int64),
        pair_raw_distance=np.asarray(pair_raw, dtype=float),
        pair_decision_distance=np.asarray(pair_dec, dtype=float),
    )
    return RunResult(arms=arms, state=state, trace=trace)
