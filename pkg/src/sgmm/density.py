"""Multivariate Gaussian density evaluation and the shared linear-algebra substrate.

All mixture arithmetic elsewhere in the package is done in log space; the
routines here provide the numerically safe building blocks: Cholesky
factorization with escalating ridge repair, log-density evaluation through
triangular solves (never an explicit inverse), and a log-sum-exp that is
exact for a single entry.

Feature vectors are plain 1-D ``float64`` ndarrays throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import AllNegInfinite, DimensionMismatch, NotPositiveDefinite

LOG_2PI = math.log(2.0 * math.pi)

# Ridge repair schedule: eps escalates by x10 per attempt, 1e-10 .. 1e-6.
RIDGE_EPS0 = 1e-10
RIDGE_ATTEMPTS = 5

SYMMETRY_RTOL = 1e-12


def _check_symmetric(cov: np.ndarray) -> None:
    scale = max(float(np.abs(cov).max()), 1.0)
    if float(np.abs(cov - cov.T).max()) > SYMMETRY_RTOL * scale:
        raise DimensionMismatch("covariance matrix is not symmetric")


def repair_covariance(
    cov: np.ndarray,
    eps0: float = RIDGE_EPS0,
    attempts: int = RIDGE_ATTEMPTS,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Factor ``cov``, inflating the diagonal if needed.

    Tries a plain Cholesky first; on failure adds ``eps * trace(cov)/p`` to the
    diagonal with ``eps`` escalating tenfold per attempt.  Returns the
    (possibly repaired) covariance, its lower factor, and ``log det``.

    Raises
    ------
    NotPositiveDefinite
        If factorization still fails after the last ridge attempt.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {cov.shape}")
    p = cov.shape[0]
    base = float(np.trace(cov)) / p
    eps = eps0
    for attempt in range(attempts + 1):
        try:
            factor = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            if attempt == attempts:
                break
            cov = cov + (eps * base) * np.eye(p)
            eps *= 10.0
            continue
        logdet = 2.0 * float(np.sum(np.log(np.diag(factor))))
        return cov, factor, logdet
    raise NotPositiveDefinite(
        f"covariance not positive definite after {attempts} ridge attempts"
    )


def cholesky_logdet(
    cov: np.ndarray,
    eps0: float = RIDGE_EPS0,
    attempts: int = RIDGE_ATTEMPTS,
) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor and log-determinant of a symmetric matrix.

    The factor satisfies ``factor @ factor.T == cov`` up to any ridge applied
    by the repair schedule.  A failure after the final ridge attempt signals a
    degenerate cluster and raises :class:`NotPositiveDefinite`.
    """
    cov = np.asarray(cov, dtype=float)
    _check_symmetric(cov)
    _, factor, logdet = repair_covariance(cov, eps0=eps0, attempts=attempts)
    return factor, logdet


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component: mean vector and positive-definite covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if mean.ndim != 1:
            raise DimensionMismatch("mean must be a 1-D vector")
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        _check_symmetric(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_logpdf(x: np.ndarray, comp: GaussianComponent) -> float:
    """Log density of ``x`` under ``comp``, via the Cholesky factor.

    Computes ``-(p/2) log(2 pi) - logdet/2 - ||L^{-1}(x - mu)||^2 / 2`` with a
    triangular solve.  Propagates :class:`NotPositiveDefinite` from the
    factorization.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != comp.mean.shape:
        raise DimensionMismatch(
            f"x has shape {x.shape}, component dimension is {comp.dim}"
        )
    factor, logdet = cholesky_logdet(comp.covariance)
    z = solve_triangular(factor, x - comp.mean, lower=True)
    return -0.5 * (comp.dim * LOG_2PI + logdet + float(z @ z))


def log_density_matrix(features: np.ndarray, components) -> np.ndarray:
    """N x K matrix of component log densities for a feature matrix.

    The vectorized counterpart of :func:`gaussian_logpdf`; one factorization
    and one triangular solve per component.
    """
    features = np.asarray(features, dtype=float)
    n, p = features.shape
    out = np.empty((n, len(components)))
    for k, comp in enumerate(components):
        if comp.dim != p:
            raise DimensionMismatch(
                f"component {k} has dimension {comp.dim}, features have {p}"
            )
        factor, logdet = cholesky_logdet(comp.covariance)
        z = solve_triangular(factor, (features - comp.mean).T, lower=True)
        quad = np.einsum("ij,ij->j", z, z)
        out[:, k] = -0.5 * (p * LOG_2PI + logdet + quad)
    return out


def logsumexp(values) -> float:
    """``log(sum(exp(values)))`` with the max factored out; exact for one entry.

    Raises :class:`AllNegInfinite` when every entry is ``-inf``.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise AllNegInfinite("log-sum-exp of an empty vector")
    m = float(np.max(v))
    if m == -np.inf:
        raise AllNegInfinite("log-sum-exp of all -inf entries")
    if v.size == 1:
        return float(v[0])
    return m + math.log(float(np.sum(np.exp(v - m))))


def logsumexp_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of a 2-D array; rows of all ``-inf`` are rejected."""
    m = np.max(matrix, axis=1)
    if np.any(m == -np.inf):
        raise AllNegInfinite("a row has all entries -inf")
    return m + np.log(np.sum(np.exp(matrix - m[:, None]), axis=1))
