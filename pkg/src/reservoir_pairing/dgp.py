"""Data-generating processes: two synthetic settings and a semi-synthetic
pipeline that replays real (or surrogate) ad-experiment covariates through
fitted logistic outcome models."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .estimators import OutcomeModel
from .numerics import (
    LogisticModel,
    PCABasis,
    logistic_fit,
    logistic_predict,
    pca_fit,
    pca_project,
)

OUTCOME_NOISE_VAR = 0.01


class CriteoFormatError(ValueError):
    """The input file does not match the expected delimited schema."""


# ---------------------------------------------------------------------------
# Synthetic settings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSetting:
    name: str
    dim: int
    model: OutcomeModel
    sample_covariates: Callable[[np.random.Generator, int], np.ndarray]
    draw_potential_outcomes: Callable[
        [np.random.Generator, np.ndarray], tuple[np.ndarray, np.ndarray]
    ]


# E[(U1 + U2)^2] for independent Unif(0, 1)
SETTING1_TAU = 7.0 / 6.0

SETTING2_MEAN = np.array([1.0, 2.0, 3.0])
SETTING2_COV = np.array(
    [
        [1.0, 0.5, 0.2],
        [0.5, 2.0, 0.3],
        [0.2, 0.3, 1.5],
    ]
)
# s = sum(X) is Gaussian with mean 6 and variance sum(Sigma) = 6.5, so
# E[cos(s)] = cos(6) exp(-6.5 / 2)
SETTING2_TAU = 3.0 + 2.0 * math.cos(6.0) * math.exp(-np.sum(SETTING2_COV) / 2.0)


def setting1() -> SyntheticSetting:
    """Uniform covariates on the unit square; treated mean (x1 + x2)^2."""

    def mu1(x: np.ndarray) -> np.ndarray:
        return (x[:, 0] + x[:, 1]) ** 2

    def mu0(x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0])

    def var(x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[0], OUTCOME_NOISE_VAR)

    model = OutcomeModel(mu1=mu1, mu0=mu0, var1=var, var0=var, tau=SETTING1_TAU)

    def sample(gen: np.random.Generator, t: int) -> np.ndarray:
        return gen.random((t, 2))

    def draw(gen: np.random.Generator, x: np.ndarray):
        sd = math.sqrt(OUTCOME_NOISE_VAR)
        y0 = mu0(x) + gen.normal(0.0, sd, x.shape[0])
        y1 = mu1(x) + gen.normal(0.0, sd, x.shape[0])
        return y0, y1

    return SyntheticSetting(
        name="setting1",
        dim=2,
        model=model,
        sample_covariates=sample,
        draw_potential_outcomes=draw,
    )


def setting2() -> SyntheticSetting:
    """Correlated Gaussian covariates; sinusoidal means in s = x1 + x2 + x3."""
    chol = np.linalg.cholesky(SETTING2_COV)

    def mu0(x: np.ndarray) -> np.ndarray:
        return np.sin(x.sum(axis=1))

    def mu1(x: np.ndarray) -> np.ndarray:
        s = x.sum(axis=1)
        return np.sin(s) + 3.0 + 2.0 * np.cos(s)

    def var(x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[0], OUTCOME_NOISE_VAR)

    model = OutcomeModel(mu1=mu1, mu0=mu0, var1=var, var0=var, tau=SETTING2_TAU)

    def sample(gen: np.random.Generator, t: int) -> np.ndarray:
        return SETTING2_MEAN + gen.standard_normal((t, 3)) @ chol.T

    def draw(gen: np.random.Generator, x: np.ndarray):
        sd = math.sqrt(OUTCOME_NOISE_VAR)
        y0 = mu0(x) + gen.normal(0.0, sd, x.shape[0])
        y1 = mu1(x) + gen.normal(0.0, sd, x.shape[0])
        return y0, y1

    return SyntheticSetting(
        name="setting2",
        dim=3,
        model=model,
        sample_covariates=sample,
        draw_potential_outcomes=draw,
    )


SYNTHETIC_SETTINGS = {"setting1": setting1, "setting2": setting2}


# ---------------------------------------------------------------------------
# Delimited-file ingestion
# ---------------------------------------------------------------------------

N_CRITEO_FEATURES = 12


@dataclass(frozen=True)
class CriteoSchema:
    features: tuple[str, ...] = tuple(f"f{i}" for i in range(N_CRITEO_FEATURES))
    treatment: str = "treatment"
    visit: str = "visit"
    delimiter: str = ","


@dataclass
class CriteoData:
    features: np.ndarray  # (n, 12)
    treatment: np.ndarray  # (n,) in {0, 1}
    visit: np.ndarray  # (n,) in {0, 1}
    n_skipped: int

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]


MAX_MALFORMED_FRACTION = 0.01


def load_criteo(
    path: str | Path,
    schema: CriteoSchema = CriteoSchema(),
    max_rows: Optional[int] = None,
) -> CriteoData:
    """Load a delimited covariate/treatment/visit file.

    Malformed rows are skipped and counted; more than 1% malformed rows is
    a hard error, as are missing files or missing columns.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    feats: list[list[float]] = []
    treat: list[int] = []
    visit: list[int] = []
    n_skipped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise CriteoFormatError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        needed = list(schema.features) + [schema.treatment, schema.visit]
        missing = [c for c in needed if c not in header]
        if missing:
            raise CriteoFormatError(f"{path}: missing columns {missing}")
        cols = [header.index(c) for c in schema.features]
        t_col = header.index(schema.treatment)
        v_col = header.index(schema.visit)
        for row in reader:
            if max_rows is not None and len(feats) >= max_rows:
                break
            try:
                f = [float(row[c]) for c in cols]
                t = float(row[t_col])
                v = float(row[v_col])
                if not all(math.isfinite(val) for val in f):
                    raise ValueError("non-finite feature")
                if t not in (0.0, 1.0) or v not in (0.0, 1.0):
                    raise ValueError("non-binary flag")
            except (ValueError, IndexError):
                n_skipped += 1
                continue
            feats.append(f)
            treat.append(int(t))
            visit.append(int(v))
    n_total = len(feats) + n_skipped
    if n_total > 0 and n_skipped > MAX_MALFORMED_FRACTION * n_total:
        raise CriteoFormatError(
            f"{path}: {n_skipped}/{n_total} malformed rows exceeds "
            f"{MAX_MALFORMED_FRACTION:.0%}"
        )
    return CriteoData(
        features=np.asarray(feats, dtype=float).reshape(len(feats), N_CRITEO_FEATURES),
        treatment=np.asarray(treat, dtype=np.int8),
        visit=np.asarray(visit, dtype=np.int8),
        n_skipped=n_skipped,
    )


# ---------------------------------------------------------------------------
# Semi-synthetic pipeline
# ---------------------------------------------------------------------------

FIT_SAMPLE_SIZE = 10_000
N_MATCH_COMPONENTS = 3


@dataclass
class SemiSyntheticModel:
    model1: LogisticModel  # P(visit = 1 | features) on treated rows
    model0: LogisticModel  # P(visit = 1 | features) on control rows
    basis: PCABasis  # k = 3, fit on the fit-sample features
    n_fit: int


def fit_semisynthetic(
    data: CriteoData, n_fit: int = FIT_SAMPLE_SIZE
) -> SemiSyntheticModel:
    """Fit per-arm visit models and the matching PCA on the first rows."""
    if data.n_rows < n_fit:
        raise ValueError(f"need at least {n_fit} rows, got {data.n_rows}")
    feats = data.features[:n_fit]
    treat = data.treatment[:n_fit]
    visit = data.visit[:n_fit]
    if not (np.any(treat == 1) and np.any(treat == 0)):
        raise ValueError("fit sample must contain both arms")
    models = []
    for arm in (1, 0):
        labels = visit[treat == arm].astype(float)
        if len(np.unique(labels)) < 2:
            warnings.warn(
                f"arm {arm} has constant visit labels in the fit sample; "
                "the logistic fit is separated",
                stacklevel=2,
            )
        model = logistic_fit(feats[treat == arm], labels)
        if not model.converged:
            warnings.warn(
                f"arm {arm} visit model did not converge "
                f"(gradient norm {model.grad_norm:.2e})",
                stacklevel=2,
            )
        models.append(model)
    model1, model0 = models
    basis = pca_fit(feats, N_MATCH_COMPONENTS)
    return SemiSyntheticModel(model1=model1, model0=model0, basis=basis, n_fit=n_fit)


@dataclass
class ReplayPool:
    """Replay units with fitted outcome probabilities.

    Matching covariates are the leading principal-component projections;
    outcome generation uses the per-arm fitted probabilities on the raw
    features. The induced outcome moments are Bernoulli: mu_z = p_z and
    sigma_z^2 = p_z (1 - p_z).
    """

    features: np.ndarray  # (n, 12) raw features
    match_covariates: np.ndarray  # (n, 3) PCA projections
    p1: np.ndarray
    p0: np.ndarray
    semimodel: SemiSyntheticModel

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def tau(self) -> float:
        return float(np.mean(self.p1 - self.p0))

    def outcome_model(self) -> OutcomeModel:
        m1 = self.semimodel.model1
        m0 = self.semimodel.model0
        return OutcomeModel(
            mu1=lambda f: logistic_predict(m1, f),
            mu0=lambda f: logistic_predict(m0, f),
            var1=lambda f: logistic_predict(m1, f) * (1.0 - logistic_predict(m1, f)),
            var0=lambda f: logistic_predict(m0, f) * (1.0 - logistic_predict(m0, f)),
            tau=self.tau,
        )


def prepare_replay(semimodel: SemiSyntheticModel, features: np.ndarray) -> ReplayPool:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != semimodel.basis.mean.shape[0]:
        raise ValueError("replay features do not match the fitted dimension")
    return ReplayPool(
        features=features,
        match_covariates=pca_project(semimodel.basis, features),
        p1=logistic_predict(semimodel.model1, features),
        p0=logistic_predict(semimodel.model0, features),
        semimodel=semimodel,
    )


@dataclass
class ReplayDraw:
    indices: np.ndarray
    match_covariates: np.ndarray  # (T, 3)
    features: np.ndarray  # (T, 12)
    y0: np.ndarray
    y1: np.ndarray
    g_values: np.ndarray  # p1 + p0 per drawn unit


def sample_replay(pool: ReplayPool, gen: np.random.Generator, t: int) -> ReplayDraw:
    """Draw one replicate: unit rows IID from the pool, then potential
    Bernoulli outcomes from the per-arm fitted probabilities."""
    idx = gen.integers(0, pool.n_rows, size=t)
    y1 = (gen.random(t) < pool.p1[idx]).astype(float)
    y0 = (gen.random(t) < pool.p0[idx]).astype(float)
    return ReplayDraw(
        indices=idx,
        match_covariates=pool.match_covariates[idx],
        features=pool.features[idx],
        y0=y0,
        y1=y1,
        g_values=pool.p1[idx] + pool.p0[idx],
    )


# ---------------------------------------------------------------------------
# Synthetic surrogate for the real dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SurrogateTruth:
    """Ground-truth parameters behind a generated surrogate file."""

    coef1: np.ndarray  # intercept-first logistic coefficients, arm 1
    coef0: np.ndarray
    factor_loadings: np.ndarray  # (3, 12) latent-factor loadings


def _surrogate_truth(seed: int) -> SurrogateTruth:
    gen = np.random.default_rng(seed)
    loadings = gen.normal(0.0, 1.0, size=(3, 12))
    # logistic coefficients in the row space of the loadings, so the
    # signal survives 3-component PCA matching
    a1 = np.array([0.9, -0.6, 0.4])
    a0 = np.array([0.7, 0.5, -0.5])
    w1 = loadings.T @ a1
    w0 = loadings.T @ a0
    w1 = w1 / np.linalg.norm(w1) * 0.45
    w0 = w0 / np.linalg.norm(w0) * 0.45
    coef1 = np.concatenate([[0.35], w1])
    coef0 = np.concatenate([[-0.25], w0])
    return SurrogateTruth(coef1=coef1, coef0=coef0, factor_loadings=loadings)


SURROGATE_FEATURE_NOISE = 0.3


def write_criteo_surrogate(
    path: str | Path, n_rows: int, seed: int = 0
) -> SurrogateTruth:
    """Write a synthetic stand-in for the real uplift dataset.

    Twelve features driven by three latent factors, a fair-coin treatment
    flag, and a Bernoulli visit outcome from known per-arm logistic
    models. Returns the ground truth used to generate it.
    """
    truth = _surrogate_truth(seed)
    gen = np.random.default_rng(seed + 1)
    schema = CriteoSchema()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter)
        writer.writerow(list(schema.features) + [schema.treatment, schema.visit])
        chunk = 50_000
        written = 0
        while written < n_rows:
            n = min(chunk, n_rows - written)
            u = gen.standard_normal((n, 3))
            feats = u @ truth.factor_loadings + SURROGATE_FEATURE_NOISE * gen.standard_normal(
                (n, 12)
            )
            treat = gen.integers(0, 2, size=n)
            eta1 = truth.coef1[0] + feats @ truth.coef1[1:]
            eta0 = truth.coef0[0] + feats @ truth.coef0[1:]
            p = np.where(treat == 1, 1.0 / (1.0 + np.exp(-eta1)), 1.0 / (1.0 + np.exp(-eta0)))
            visit = (gen.random(n) < p).astype(int)
            for k in range(n):
                writer.writerow(
                    [f"{v:.9g}" for v in feats[k]] + [int(treat[k]), int(visit[k])]
                )
            written += n
    return truth
