"""Monte-Carlo benchmark harness.

Runs seeded replications of (DGP x design x sample size) cells, collects
effect estimates and pairing diagnostics, and emits CSV plot data. Within
a replicate every design sees identical covariates and identical potential
outcomes, so design comparisons are paired.
"""

from __future__ import annotations

import hashlib
import math
import multiprocessing
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import dgp as dgp_mod
from .core import RandomSource, RunResult
from .designs import (
    DESIGN_NAMES,
    KK14Config,
    PackingConfig,
    run_bai_optimal,
    run_iid,
    run_kk14,
    run_oracle_g,
    run_packing,
)
from .estimators import diagnostics, ipw_estimate

WORKERS_ENV_VAR = "RESERVOIR_PAIRING_WORKERS"

DGP_NAMES = ("setting1", "setting2", "criteo")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: str
    designs: tuple[str, ...] = ("iid",)
    sample_sizes: tuple[int, ...] = (1000,)
    replicates: int = 500
    base_seed: int = 0
    workers: int = 1
    delta: float = 0.0
    kk_lambda: float = 0.1
    burn_in: Optional[int] = None
    data_path: Optional[str] = None
    schema: dgp_mod.CriteoSchema = field(default_factory=dgp_mod.CriteoSchema)

    def __post_init__(self) -> None:
        if self.dgp not in DGP_NAMES:
            raise ConfigError(f"unknown dgp {self.dgp!r}; choose from {DGP_NAMES}")
        for d in self.designs:
            if d not in DESIGN_NAMES:
                raise ConfigError(f"unknown design {d!r}; choose from {DESIGN_NAMES}")
        if not self.designs:
            raise ConfigError("at least one design is required")
        if any(t < 1 for t in self.sample_sizes) or not self.sample_sizes:
            raise ConfigError("sample sizes must be positive")
        if self.replicates < 1:
            raise ConfigError("replicate count must be >= 1")
        if self.workers < 1:
            raise ConfigError("worker count must be >= 1")
        if self.dgp == "criteo" and self.data_path is None:
            raise ConfigError("the criteo dgp requires a data path")


@dataclass(frozen=True)
class ResultRow:
    dgp: str
    design: str
    sample_size: int
    replicate: int
    tau_hat: float
    n_reservoir: int
    mean_pair_distance: float  # nan when no pairs formed
    seed: int


@dataclass(frozen=True)
class CellAggregate:
    mean: float
    variance: float  # unbiased sample variance of tau_hat
    n: int


@dataclass
class ResultTable:
    rows: list[ResultRow]

    def aggregate(self) -> dict[tuple[str, str, int], CellAggregate]:
        cells: dict[tuple[str, str, int], list[float]] = {}
        for row in self.rows:
            cells.setdefault((row.dgp, row.design, row.sample_size), []).append(
                row.tau_hat
            )
        return {
            key: CellAggregate(
                mean=float(np.mean(vals)),
                variance=float(np.var(vals, ddof=1)) if len(vals) > 1 else math.nan,
                n=len(vals),
            )
            for key, vals in cells.items()
        }

    def tau_hats(self, dgp: str, design: str, sample_size: int) -> np.ndarray:
        return np.asarray(
            [
                r.tau_hat
                for r in self.rows
                if (r.dgp, r.design, r.sample_size) == (dgp, design, sample_size)
            ]
        )


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from hashing the labelled parts."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# ---------------------------------------------------------------------------
# DGP context (built once per process)
# ---------------------------------------------------------------------------


@dataclass
class ReplicateData:
    match_covariates: np.ndarray  # what sequential designs get to see
    raw_covariates: np.ndarray  # for raw-coordinate distance diagnostics
    y0: np.ndarray
    y1: np.ndarray
    g_values: np.ndarray  # oracle g per unit, for the oracle designs


class DgpContext:
    """Per-process realization of a configured data-generating process."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        if cfg.dgp in dgp_mod.SYNTHETIC_SETTINGS:
            self.setting = dgp_mod.SYNTHETIC_SETTINGS[cfg.dgp]()
            self.pool = None
            self.dim = self.setting.dim
            self.tau = self.setting.model.tau
        else:
            data = dgp_mod.load_criteo(cfg.data_path, cfg.schema)
            semimodel = dgp_mod.fit_semisynthetic(data)
            self.setting = None
            self.pool = dgp_mod.prepare_replay(
                semimodel, data.features[semimodel.n_fit :]
            )
            self.dim = dgp_mod.N_MATCH_COMPONENTS
            self.tau = self.pool.tau

    def draw(self, gen: np.random.Generator, t: int) -> ReplicateData:
        if self.setting is not None:
            x = self.setting.sample_covariates(gen, t)
            y0, y1 = self.setting.draw_potential_outcomes(gen, x)
            return ReplicateData(
                match_covariates=x,
                raw_covariates=x,
                y0=y0,
                y1=y1,
                g_values=self.setting.model.g(x),
            )
        assert self.pool is not None
        draw = dgp_mod.sample_replay(self.pool, gen, t)
        return ReplicateData(
            match_covariates=draw.match_covariates,
            raw_covariates=draw.match_covariates,
            y0=draw.y0,
            y1=draw.y1,
            g_values=draw.g_values,
        )


def _run_design(
    design: str, data: ReplicateData, cfg: ExperimentConfig, rng: RandomSource, dim: int
) -> RunResult:
    if design == "iid":
        return run_iid(data.match_covariates, rng)
    if design == "packing":
        return run_packing(
            data.match_covariates,
            PackingConfig(dimension=dim, delta=cfg.delta, standardize=True),
            rng,
            raw_units=data.raw_covariates,
        )
    if design == "kk14":
        return run_kk14(
            data.match_covariates,
            KK14Config(dimension=dim, quantile=cfg.kk_lambda, burn_in=cfg.burn_in),
            rng,
            raw_units=data.raw_covariates,
        )
    if design == "oracle_g":
        return run_oracle_g(
            data.g_values, None, rng, raw_units=data.raw_covariates, delta=cfg.delta
        )
    if design == "bai":
        return run_bai_optimal(data.g_values, rng, raw_units=data.raw_covariates)
    raise ConfigError(f"unknown design {design!r}")


def run_replicate(
    ctx: DgpContext, cfg: ExperimentConfig, sample_size: int, rep: int
) -> list[ResultRow]:
    """One replicate of every configured design on shared data.

    The data stream seed depends only on (base seed, dgp, T, replicate),
    so all designs see identical covariates and potential outcomes; each
    design draws its treatment coins from its own stream.
    """
    data_seed = derive_seed(cfg.base_seed, cfg.dgp, sample_size, rep)
    gen = RandomSource(data_seed, stream=0).generator()
    data = ctx.draw(gen, sample_size)
    rows = []
    for design in cfg.designs:
        treat_seed = derive_seed(cfg.base_seed, cfg.dgp, sample_size, rep, design)
        try:
            result = _run_design(
                design, data, cfg, RandomSource(treat_seed, stream=1), ctx.dim
            )
            outcomes = np.where(result.arms == 1, data.y1, data.y0)
            tau_hat = ipw_estimate(result.arms, outcomes)
        except Exception as exc:
            raise RuntimeError(
                f"design {design!r} failed on dgp={cfg.dgp} T={sample_size} "
                f"replicate={rep}: {exc}"
            ) from exc
        n_pairs = result.trace.n_pairs
        mpd = (
            float(np.mean(result.trace.pair_raw_distance)) if n_pairs else math.nan
        )
        rows.append(
            ResultRow(
                dgp=cfg.dgp,
                design=design,
                sample_size=sample_size,
                replicate=rep,
                tau_hat=tau_hat,
                n_reservoir=result.state.n_reservoir,
                mean_pair_distance=mpd,
                seed=treat_seed,
            )
        )
    return rows


_WORKER_CTX: Optional[DgpContext] = None
_WORKER_CFG: Optional[ExperimentConfig] = None


def _init_worker(cfg: ExperimentConfig) -> None:
    global _WORKER_CTX, _WORKER_CFG
    _WORKER_CFG = cfg
    _WORKER_CTX = DgpContext(cfg)


def _worker_task(task: tuple[int, int]) -> list[ResultRow]:
    assert _WORKER_CTX is not None and _WORKER_CFG is not None
    sample_size, rep = task
    return run_replicate(_WORKER_CTX, _WORKER_CFG, sample_size, rep)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        return max(1, int(env))
    return 1


def run_grid(cfg: ExperimentConfig) -> ResultTable:
    """Run every (T, replicate) cell; deterministic in the worker count."""
    tasks = [(t, rep) for t in cfg.sample_sizes for rep in range(cfg.replicates)]
    if cfg.workers > 1:
        with multiprocessing.get_context("fork").Pool(
            cfg.workers, initializer=_init_worker, initargs=(cfg,)
        ) as pool:
            chunks = pool.map(_worker_task, tasks, chunksize=8)
    else:
        ctx = DgpContext(cfg)
        chunks = [run_replicate(ctx, cfg, t, rep) for t, rep in tasks]
    rows = [row for chunk in chunks for row in chunk]
    size_order = {t: i for i, t in enumerate(cfg.sample_sizes)}
    design_order = {d: i for i, d in enumerate(cfg.designs)}
    rows.sort(
        key=lambda r: (size_order[r.sample_size], r.replicate, design_order[r.design])
    )
    return ResultTable(rows=rows)


# ---------------------------------------------------------------------------
# Design comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    dgp: str
    sample_size: int
    design: str
    variance: float
    ratio_to_iid: float
    ratio_stderr: float


def compare_designs(
    table: ResultTable, n_bootstrap: int = 1000, seed: int = 0
) -> list[ComparisonRow]:
    """Sample variances and IID-normalized ratios with bootstrap errors.

    The bootstrap resamples replicates jointly across designs (the harness
    pairs them on shared data), so ratio errors account for the pairing.
    """
    cells = table.aggregate()
    keys = sorted({(r.dgp, r.sample_size) for r in table.rows})
    designs = []
    for d in (r.design for r in table.rows):
        if d not in designs:
            designs.append(d)
    if "iid" not in designs:
        raise ConfigError("comparison requires the iid design in the table")
    out = []
    gen = np.random.default_rng(seed)
    for dgp_name, t in keys:
        taus = {d: table.tau_hats(dgp_name, d, t) for d in designs}
        n = len(taus["iid"])
        if any(len(v) != n for v in taus.values()):
            raise ConfigError("designs have unequal replicate counts")
        idx = gen.integers(0, n, size=(n_bootstrap, n))
        boot_var = {
            d: np.var(taus[d][idx], axis=1, ddof=1) for d in designs
        }
        for d in designs:
            # degenerate resamples (tiny n) can hit zero iid variance
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = boot_var[d] / boot_var["iid"]
            out.append(
                ComparisonRow(
                    dgp=dgp_name,
                    sample_size=t,
                    design=d,
                    variance=cells[(dgp_name, d, t)].variance,
                    ratio_to_iid=cells[(dgp_name, d, t)].variance
                    / cells[(dgp_name, "iid", t)].variance,
                    ratio_stderr=float(np.std(ratios, ddof=1)),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Diagnose runs (per-step series, figure-1 style)
# ---------------------------------------------------------------------------


@dataclass
class DiagnoseSeries:
    design: str
    step: np.ndarray
    n_reservoir: np.ndarray
    mean_pair_distance: np.ndarray


def run_diagnose(cfg: ExperimentConfig, sample_size: int) -> list[DiagnoseSeries]:
    """Single long run per design, returning per-step diagnostic series."""
    ctx = DgpContext(cfg)
    data_seed = derive_seed(cfg.base_seed, cfg.dgp, sample_size, 0)
    gen = RandomSource(data_seed, stream=0).generator()
    data = ctx.draw(gen, sample_size)
    series = []
    for design in cfg.designs:
        treat_seed = derive_seed(cfg.base_seed, cfg.dgp, sample_size, 0, design)
        result = _run_design(design, data, cfg, RandomSource(treat_seed, 1), ctx.dim)
        diag = diagnostics(result.trace)
        series.append(
            DiagnoseSeries(
                design=design,
                step=diag.step,
                n_reservoir=diag.n_reservoir,
                mean_pair_distance=diag.mean_raw_pair_distance,
            )
        )
    return series


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


RESULT_HEADER = [
    "dgp",
    "design",
    "sample_size",
    "replicate",
    "tau_hat",
    "n_reservoir",
    "mean_pair_distance",
    "seed",
]


def emit_csv(table: ResultTable, path: str | Path) -> None:
    rows = [
        [
            r.dgp,
            r.design,
            r.sample_size,
            r.replicate,
            r.tau_hat,
            r.n_reservoir,
            r.mean_pair_distance,
            r.seed,
        ]
        for r in table.rows
    ]
    _write_csv(path, RESULT_HEADER, rows)


def parse_csv(path: str | Path) -> ResultTable:
    import csv as _csv

    rows = []
    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        for rec in reader:
            rows.append(
                ResultRow(
                    dgp=rec["dgp"],
                    design=rec["design"],
                    sample_size=int(rec["sample_size"]),
                    replicate=int(rec["replicate"]),
                    tau_hat=float(rec["tau_hat"]),
                    n_reservoir=int(rec["n_reservoir"]),
                    mean_pair_distance=float(rec["mean_pair_distance"]),
                    seed=int(rec["seed"]),
                )
            )
    return ResultTable(rows=rows)


def emit_diagnose_csv(series: list[DiagnoseSeries], path: str | Path) -> None:
    """Figure-1 style series: reservoir size and mean intra-pair distance."""
    rows = []
    for s in series:
        for k in range(len(s.step)):
            rows.append(
                [
                    s.design,
                    int(s.step[k]),
                    int(s.n_reservoir[k]),
                    float(s.mean_pair_distance[k]),
                ]
            )
    _write_csv(path, ["design", "t", "n_reservoir", "mean_pair_distance"], rows)


def emit_variance_csv(table: ResultTable, path: str | Path) -> None:
    """Figure-2 style data: sample variance per (dgp, design, T)."""
    cells = table.aggregate()
    rows = [
        [dgp_name, design, t, agg.variance, agg.mean, agg.n]
        for (dgp_name, design, t), agg in sorted(cells.items())
    ]
    _write_csv(
        path, ["dgp", "design", "sample_size", "variance", "mean_tau_hat", "n"], rows
    )


def emit_comparison_csv(comparison: list[ComparisonRow], path: str | Path) -> None:
    """Figure-3 style data: raw and IID-normalized variances."""
    rows = [
        [c.dgp, c.design, c.sample_size, c.variance, c.ratio_to_iid, c.ratio_stderr]
        for c in comparison
    ]
    _write_csv(
        path,
        ["dgp", "design", "sample_size", "variance", "ratio_to_iid", "ratio_stderr"],
        rows,
    )


def with_workers(cfg: ExperimentConfig, workers: int) -> ExperimentConfig:
    return replace(cfg, workers=workers)
