"""Sequential matched-pair treatment assignment (reservoir designs).

Units arrive one at a time; each either joins a reservoir with a fair-coin
treatment or pairs with a nearby reservoir unit and takes the opposite
arm. Includes the shrinking-radius packing design, Mahalanobis-cutoff and
oracle baselines, the IPW effect estimator with exact variance oracles,
synthetic and semi-synthetic data-generating pipelines, and a seeded
Monte-Carlo benchmark harness.
"""

from .core import (
    ContractViolationError,
    Decision,
    DesignPolicy,
    InputError,
    PairingState,
    RandomSource,
    RunResult,
    RunTrace,
    UnitRecord,
    engine_step,
    run_stream,
)
from .designs import (
    KK14Config,
    OracleGConfig,
    PackingConfig,
    bai_optimal_matching,
    iid_policy,
    kk14_cutoff,
    kk14_policy,
    oracle_g_policy,
    packing_policy,
    packing_radius,
    run_bai_optimal,
    run_iid,
    run_kk14,
    run_oracle_g,
    run_packing,
)
from .estimators import (
    DiagnosticsTrace,
    MonteCarloValue,
    OutcomeModel,
    conditional_variance,
    diagnostics,
    empty_reservoir_variance,
    exact_variance_oracle,
    ipw_estimate,
    sigma_red_sq,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    compare_designs,
    derive_seed,
    emit_csv,
    parse_csv,
    run_grid,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
