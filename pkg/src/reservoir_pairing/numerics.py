"""Self-contained numerical kernels.

Streaming standardization, Cholesky/Mahalanobis, chi-squared and F
quantiles (via incomplete gamma/beta), small-dimension PCA, and IRLS
logistic regression. No dependencies beyond numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ZERO_VARIANCE_EPS = 1e-12


class NotPositiveDefiniteError(ValueError):
    """Raised when a Cholesky factorization fails."""


class DimensionMismatchError(ValueError):
    """Raised when vector/matrix dimensions are inconsistent."""


# ---------------------------------------------------------------------------
# Streaming column statistics and standardization
# ---------------------------------------------------------------------------


@dataclass
class ColumnStats:
    """Welford accumulator for per-column mean and population std."""

    dim: int
    count: int = 0
    mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    _m2: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self._m2 is None:
            self._m2 = np.zeros(self.dim)

    def update(self, row: np.ndarray) -> None:
        row = np.asarray(row, dtype=float)
        if row.shape != (self.dim,):
            raise DimensionMismatchError(
                f"expected row of length {self.dim}, got shape {row.shape}"
            )
        self.count += 1
        delta = row - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (row - self.mean)

    @property
    def std(self) -> np.ndarray:
        """Population (divide-by-n) standard deviation per column."""
        if self.count == 0:
            return np.zeros(self.dim)
        return np.sqrt(self._m2 / self.count)

    def scale(self) -> np.ndarray:
        """Per-column divisor for standardization; 1 for degenerate columns."""
        s = self.std
        return np.where(s > ZERO_VARIANCE_EPS, s, 1.0)

    @classmethod
    def from_matrix(cls, x: np.ndarray) -> "ColumnStats":
        x = np.asarray(x, dtype=float)
        stats = cls(dim=x.shape[1])
        for row in x:
            stats.update(row)
        return stats


def standardize(x: np.ndarray) -> np.ndarray:
    """Center columns and scale nondegenerate ones to population std 1.

    Constant columns (and the single-row case) map to zeros.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.where(std > ZERO_VARIANCE_EPS, std, 1.0)
    return (x - mean) / scale


# ---------------------------------------------------------------------------
# Cholesky and Mahalanobis distance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T equal to the input matrix."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def cholesky_factor(matrix: np.ndarray) -> CholeskyFactor:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError("matrix must be square")
    try:
        lower = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    return CholeskyFactor(lower=lower)


def _forward_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lower.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = (b[i] - lower[i, :i] @ out[:i]) / lower[i, i]
    return out


def mahalanobis_sq(x: np.ndarray, y: np.ndarray, factor: CholeskyFactor) -> float:
    """(x - y)^T Sigma^{-1} (x - y) via a triangular solve against L."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.shape != (factor.dim,):
        raise DimensionMismatchError(
            f"expected vectors of length {factor.dim}, got {x.shape} and {y.shape}"
        )
    u = _forward_solve(factor.lower, x - y)
    return float(u @ u)


# ---------------------------------------------------------------------------
# Incomplete gamma / beta and distribution quantiles
# ---------------------------------------------------------------------------

_MAX_ITER = 500
_FP_EPS = 1e-16
_TINY = 1e-300


def _gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x < 0 or a <= 0:
        raise ValueError("require x >= 0 and a > 0")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        # series expansion
        term = 1.0 / a
        total = term
        n = a
        for _ in range(_MAX_ITER):
            n += 1.0
            term *= x / n
            total += term
            if abs(term) < abs(total) * _FP_EPS:
                break
        return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    # continued fraction for Q(a, x), modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _FP_EPS:
            break
    q = h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    return 1.0 - q


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _FP_EPS:
            break
    return h


def _beta_inc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def chisq_cdf(x: float, d: int) -> float:
    if x <= 0.0:
        return 0.0
    return _gamma_p(d / 2.0, x / 2.0)


def _chisq_pdf(x: float, d: int) -> float:
    if x <= 0.0:
        return 0.0
    a = d / 2.0
    return math.exp((a - 1.0) * math.log(x) - x / 2.0 - math.lgamma(a) - a * math.log(2.0))


def f_cdf(x: float, d1: int, d2: int) -> float:
    if x <= 0.0:
        return 0.0
    y = d1 * x / (d1 * x + d2)
    return _beta_inc(d1 / 2.0, d2 / 2.0, y)


def _f_pdf(x: float, d1: int, d2: int) -> float:
    if x <= 0.0:
        return 0.0
    a = d1 / 2.0
    b = d2 / 2.0
    ln_b = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    ln = (
        a * math.log(d1 / d2)
        + (a - 1.0) * math.log(x)
        - (a + b) * math.log(1.0 + d1 * x / d2)
        - ln_b
    )
    return math.exp(ln)


def _invert_cdf(cdf, pdf, p: float, tol: float = 1e-10) -> float:
    """Safeguarded Newton inversion of a CDF supported on (0, inf)."""
    lo, hi = 0.0, 1.0
    while cdf(hi) < p:
        lo = hi
        hi *= 2.0
        if hi > 1e30:
            raise ArithmeticError("failed to bracket quantile")
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = cdf(x) - p
        if f > 0.0:
            hi = x
        else:
            lo = x
        dens = pdf(x)
        if dens > 0.0:
            step = f / dens
            x_new = x - step
            if not (lo < x_new < hi):
                x_new = 0.5 * (lo + hi)
        else:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < tol and hi - lo < 4.0 * max(tol, tol * x):
            return x_new
        x = x_new
    return x


def chisq_quantile(p: float, d: int) -> float:
    """Inverse chi-squared CDF with d degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be a positive integer")
    return _invert_cdf(lambda x: chisq_cdf(x, d), lambda x: _chisq_pdf(x, d), p)


def f_quantile(p: float, d1: int, d2: int) -> float:
    """Inverse F CDF with (d1, d2) degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if d1 < 1 or d2 < 1:
        raise ValueError("degrees of freedom must be positive integers")
    return _invert_cdf(lambda x: f_cdf(x, d1, d2), lambda x: _f_pdf(x, d1, d2), p)


def _f_quantile_warm(p: float, d1: int, d2: int, x0: float) -> float:
    """Newton refinement of an F quantile from a nearby starting value."""
    x = x0 if x0 > 0.0 else 1.0
    for _ in range(50):
        f = f_cdf(x, d1, d2) - p
        dens = _f_pdf(x, d1, d2)
        if dens <= 0.0:
            return f_quantile(p, d1, d2)
        step = f / dens
        x_new = x - step
        if x_new <= 0.0:
            x_new = 0.5 * x
        if abs(x_new - x) <= 1e-12 * max(1.0, x):
            return x_new
        x = x_new
    return f_quantile(p, d1, d2)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PCABasis:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows orthonormal
    explained_variance: np.ndarray  # (k,), nonincreasing


def pca_fit(x: np.ndarray, k: int) -> PCABasis:
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    if k > d:
        raise ValueError(f"k={k} exceeds dimension {d}")
    if n <= d:
        raise ValueError(f"need more rows ({n}) than columns ({d})")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    components = eigvecs[:, order].T.copy()
    # sign convention: largest-magnitude coordinate of each direction positive
    for row in components:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return PCABasis(
        mean=mean,
        components=components,
        explained_variance=eigvals[order].copy(),
    )


def pca_project(basis: PCABasis, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x - basis.mean) @ basis.components.T


# ---------------------------------------------------------------------------
# Logistic regression via IRLS
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray  # intercept first
    converged: bool
    grad_norm: float
    n_iter: int
    coef_cov: np.ndarray | None = None


def _expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_likelihood(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


_IRLS_RIDGE = 1e-10


def logistic_fit(
    features: np.ndarray,
    labels: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> LogisticModel:
    """Maximum-likelihood logistic regression (damped Newton / IRLS).

    An intercept column is prepended internally; ``coef[0]`` is the
    intercept. On perfect separation the optimum lies at infinity, so the
    convergence flag is left unset (the gradient may still vanish
    numerically once the fitted probabilities saturate).
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatchError("features must be a 2-d matrix")
    n, p = x.shape
    if y.shape != (n,):
        raise DimensionMismatchError("labels must match feature rows")
    if n <= p:
        raise ValueError(f"need more rows ({n}) than parameters ({p + 1})")
    a = np.column_stack([np.ones(n), x])
    beta = np.zeros(p + 1)
    eta = a @ beta
    ll = _log_likelihood(eta, y)
    grad_norm = math.inf
    converged = False
    it = 0
    hessian = None
    for it in range(1, max_iter + 1):
        prob = _expit(eta)
        grad = a.T @ (y - prob)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            converged = True
            break
        w = prob * (1.0 - prob)
        hessian = a.T @ (w[:, None] * a) + _IRLS_RIDGE * np.eye(p + 1)
        step = np.linalg.solve(hessian, grad)
        # halve the step until the log-likelihood does not decrease
        scale = 1.0
        for _ in range(50):
            candidate = beta + scale * step
            eta_new = a @ candidate
            ll_new = _log_likelihood(eta_new, y)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        eta = a @ beta
        ll = _log_likelihood(eta, y)
    if converged and n > 0 and np.all(np.abs(y - _expit(eta)) < 1e-4):
        # fitted probabilities saturate at the labels: separated data
        converged = False
    coef_cov = None
    if hessian is not None:
        try:
            coef_cov = np.linalg.inv(hessian)
        except np.linalg.LinAlgError:
            coef_cov = None
    return LogisticModel(
        coef=beta,
        converged=converged,
        grad_norm=grad_norm,
        n_iter=it,
        coef_cov=coef_cov,
    )


def logistic_predict(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.coef.shape[0] - 1:
        raise DimensionMismatchError(
            f"expected {model.coef.shape[0] - 1} features, got {x.shape[1]}"
        )
    probs = _expit(model.coef[0] + x @ model.coef[1:])
    return probs[0] if single else probs
