"""Marginal Gaussian mixture estimation: k-means seeding and feature-only EM.

The estimator here ignores locations entirely; it maximizes the marginal
mixture log-likelihood of the features and serves as the plug-in for the
kernel-local stage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .density import (
    GaussianComponent,
    log_density_matrix,
    logsumexp_rows,
    repair_covariance,
)
from .errors import DimensionMismatch, NonFiniteLikelihood

KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class MixtureParams:
    """Global mixture parameters: K components plus a global mixing vector."""

    components: tuple[GaussianComponent, ...]
    mixing: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        mixing = np.asarray(self.mixing, dtype=float)
        if len(comps) < 1:
            raise DimensionMismatch("at least one component is required")
        if mixing.shape != (len(comps),):
            raise DimensionMismatch("mixing length must equal the number of components")
        if np.any(mixing <= 0) or abs(float(mixing.sum()) - 1.0) > 1e-10:
            raise DimensionMismatch("mixing must be strictly positive and sum to 1")
        p = comps[0].dim
        if any(c.dim != p for c in comps):
            raise DimensionMismatch("components must share one dimension")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "mixing", mixing)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    def covariances(self) -> np.ndarray:
        return np.stack([c.covariance for c in self.components])


@dataclass(frozen=True)
class Dataset:
    """N instances of (feature vector, planar location), plus optional labels.

    Labels are 1-based class indices and exist only as a simulation oracle;
    no estimator reads them.
    """

    features: np.ndarray
    locations: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=float)
        s = np.ascontiguousarray(self.locations, dtype=float)
        if x.ndim != 2 or s.ndim != 2 or s.shape[1] != 2:
            raise DimensionMismatch("features must be N x p and locations N x 2")
        if x.shape[0] != s.shape[0] or x.shape[0] < 1:
            raise DimensionMismatch("features and locations must share N >= 1 rows")
        if not (np.isfinite(x).all() and np.isfinite(s).all()):
            raise DimensionMismatch("dataset contains non-finite entries")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "locations", s)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=int)
            if y.shape != (x.shape[0],) or np.any(y < 1):
                raise DimensionMismatch("labels must be an N-vector of indices >= 1")
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class FitConfig:
    """Knobs shared by every EM variant.

    ``tol`` is a relative log-likelihood (or sup-norm, for the local stage)
    change; ``min_mixing`` defaults to ``1e-6 / K`` when left unset.  The
    ridge schedule feeds the covariance repair in the density module.
    """

    max_iter: int = 2000
    tol: float = 1e-8
    min_mixing: float | None = None
    seed: int = 0
    ridge_eps0: float = 1e-10
    ridge_attempts: int = 5

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def resolve_min_mixing(self, n_components: int) -> float:
        if self.min_mixing is None:
            return 1e-6 / n_components
        if not 0.0 < self.min_mixing < 0.5 / n_components:
            raise ValueError("min_mixing must lie in (0, 0.5/K)")
        return self.min_mixing


@dataclass(frozen=True)
class FitReport:
    """Converged parameters plus the trace that produced them."""

    params: MixtureParams
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    wall_time_seconds: float


def _clamp_mixing(raw: np.ndarray, floor: float) -> np.ndarray:
    clipped = np.maximum(raw, floor)
    return clipped / clipped.sum()


def _weighted_moments(
    features: np.ndarray,
    resp: np.ndarray,
    cfg: FitConfig,
    prev: tuple[GaussianComponent, ...] | None = None,
) -> list[GaussianComponent]:
    """Weighted means/covariances per component, ridge-repaired, MLE-normalized.

    A component with zero responsibility mass keeps its previous parameters
    when ``prev`` is supplied (possible only with hand-built degenerate
    mixing fields); otherwise it is an error.
    """
    comps = []
    totals = resp.sum(axis=0)
    for k in range(resp.shape[1]):
        nk = totals[k]
        if nk <= 0.0:
            if prev is not None:
                comps.append(prev[k])
                continue
            raise NonFiniteLikelihood(f"component {k} received zero responsibility")
        mu = resp[:, k] @ features / nk
        centered = features - mu
        cov = (centered * resp[:, k, None]).T @ centered / nk
        cov = 0.5 * (cov + cov.T)
        cov, _, _ = repair_covariance(cov, cfg.ridge_eps0, cfg.ridge_attempts)
        comps.append(GaussianComponent(mu, cov))
    return comps


def _plus_plus_centers(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(n)]
    d2 = np.sum((features - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen center
            centers[j] = features[rng.integers(n)]
            continue
        centers[j] = features[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((features - centers[j]) ** 2, axis=1))
    return centers


def kmeans_init(data: Dataset, n_components: int, seed: int, cfg: FitConfig | None = None) -> MixtureParams:
    """Lloyd's algorithm with k-means++ seeding on the features only.

    Returns cluster means, within-cluster covariances (ridge-repaired, with a
    pooled-covariance fallback for degenerate clusters), and cluster fractions
    clamped at ``min_mixing``.  Deterministic under ``seed``.  Empty clusters
    are refilled with the point farthest from its assigned center.
    """
    cfg = cfg or FitConfig(seed=seed)
    x = data.features
    n, p = x.shape
    if n < n_components:
        raise DimensionMismatch(f"need at least {n_components} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_centers(x, n_components, rng)

    labels = None
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        # refill empty clusters with the globally worst-fit point
        for k in range(n_components):
            if not np.any(new_labels == k):
                worst = int(np.argmax(d2[np.arange(n), new_labels]))
                new_labels[worst] = k
                d2[worst, :] = 0.0
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(n_components):
            centers[k] = x[labels == k].mean(axis=0)

    pooled = np.cov(x, rowvar=False, bias=True).reshape(p, p)
    floor = cfg.resolve_min_mixing(n_components)
    comps = []
    fractions = np.empty(n_components)
    for k in range(n_components):
        members = x[labels == k]
        fractions[k] = members.shape[0] / n
        cov = np.cov(members, rowvar=False, bias=True).reshape(p, p) if members.shape[0] > 1 else np.zeros((p, p))
        cov = 0.5 * (cov + cov.T)
        for candidate in (cov, pooled, np.eye(p)):
            try:
                repaired, _, _ = repair_covariance(candidate, cfg.ridge_eps0, cfg.ridge_attempts)
            except Exception:
                continue
            comps.append(GaussianComponent(centers[k].copy(), repaired))
            break
    return MixtureParams(tuple(comps), _clamp_mixing(fractions, floor))


def marginal_loglik(data: Dataset, params: MixtureParams) -> float:
    """Marginal mixture log-likelihood of the features under ``params``."""
    if params.dim != data.dim:
        raise DimensionMismatch("parameter and data dimensions differ")
    log_dens = log_density_matrix(data.features, params.components)
    return float(np.sum(logsumexp_rows(log_dens + np.log(params.mixing))))


def em_fit_marginal(data: Dataset, init: MixtureParams, cfg: FitConfig) -> FitReport:
    """EM for the marginal mixture likelihood, started at ``init``.

    E-step responsibilities are formed in log space; the M-step uses MLE
    (divide-by-N) covariance normalization and floors the mixing vector at
    ``min_mixing``.  Stops when the relative log-likelihood change drops
    below ``cfg.tol`` or after ``cfg.max_iter`` iterations.
    """
    if init.dim != data.dim:
        raise DimensionMismatch("init dimension does not match data")
    start = time.perf_counter()
    floor = cfg.resolve_min_mixing(init.n_components)
    params = init
    trace = []
    converged = False
    iterations = 0
    prev = None
    for _ in range(cfg.max_iter):
        log_dens = log_density_matrix(data.features, params.components)
        weighted = log_dens + np.log(params.mixing)
        lse = logsumexp_rows(weighted)
        loglik = float(lse.sum())
        if not np.isfinite(loglik):
            raise NonFiniteLikelihood(f"log-likelihood became {loglik}")
        resp = np.exp(weighted - lse[:, None])

        mixing = _clamp_mixing(resp.mean(axis=0), floor)
        comps = _weighted_moments(data.features, resp, cfg)
        params = MixtureParams(tuple(comps), mixing)
        trace.append(loglik)
        iterations += 1
        if prev is not None and abs(loglik - prev) / (abs(prev) + 1.0) < cfg.tol:
            converged = True
            break
        prev = loglik
    return FitReport(
        params=params,
        loglik_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        wall_time_seconds=time.perf_counter() - start,
    )
