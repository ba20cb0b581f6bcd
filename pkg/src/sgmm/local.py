"""Kernel-weighted estimation of the spatially varying mixing probabilities.

At a query location ``s`` the component parameters are frozen and the mixing
vector ``tau`` maximizes the locally weighted mixture likelihood, with weights
``K((S_i1 - s1)/h) * K((S_i2 - s2)/h)``.  The fixed-point update

    E-step:  r_ik ∝ tau_k * phi_k(X_i)
    M-step:  tau_k = sum_i w_i r_ik / sum_i w_i

is the exact ascent step for that objective, so every iteration is
non-decreasing.  Each query row iterates independently on its own neighbor
list (points whose weight is non-negligible relative to the row maximum), so
the field is an embarrassingly parallel map whose output is byte-identical
for any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .density import log_density_matrix
from .errors import DimensionMismatch, EmptyNeighborhood
from .gmm import Dataset, FitConfig, MixtureParams

# Default stopping rule for the per-query fixed-point iteration.
LOCAL_MAX_ITER = 500

# Data points whose kernel weight falls below this fraction of the row
# maximum shift the update by many orders less than the stopping tolerance
# and are dropped from the row's neighbor list.
WEIGHT_DROP_RTOL = 1e-18

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Product kernel: a univariate symmetric density applied per coordinate."""

    kind: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "epanechnikov"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class LocalMixingField:
    """Estimated mixing probabilities at a set of query locations.

    ``flags`` marks rows where the neighborhood was empty and the global
    mixing was substituted.  ``iterations`` records the per-row fixed-point
    iteration counts.  Rows produced by the estimator are strictly positive
    and sum to one; hand-built fields may carry zeros (e.g. one-hot oracles).
    """

    query_points: np.ndarray
    mixing: np.ndarray
    flags: np.ndarray | None = None
    iterations: np.ndarray | None = None

    def __post_init__(self):
        q = np.ascontiguousarray(self.query_points, dtype=float)
        m = np.ascontiguousarray(self.mixing, dtype=float)
        if q.ndim != 2 or q.shape[1] != 2:
            raise DimensionMismatch("query_points must be M x 2")
        if m.ndim != 2 or m.shape[0] != q.shape[0]:
            raise DimensionMismatch("mixing must be M x K, aligned with query_points")
        if m.size and (np.any(m < 0) or np.abs(m.sum(axis=1) - 1.0).max() > 1e-10):
            raise DimensionMismatch("mixing rows must be non-negative and sum to 1")
        object.__setattr__(self, "query_points", q)
        object.__setattr__(self, "mixing", m)
        if self.flags is None:
            object.__setattr__(self, "flags", np.zeros(q.shape[0], dtype=bool))
        else:
            object.__setattr__(self, "flags", np.asarray(self.flags, dtype=bool))

    @property
    def n_points(self) -> int:
        return self.query_points.shape[0]

    @property
    def n_components(self) -> int:
        return self.mixing.shape[1]


def _kernel_1d(kind: str, t: np.ndarray) -> np.ndarray:
    if kind == "gaussian":
        return _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    out = 0.75 * (1.0 - t * t)
    return np.where(np.abs(t) <= 1.0, out, 0.0)


def kernel_weight(spec: KernelSpec, delta) -> float:
    """Product-kernel weight for a location offset ``delta = S_i - s``."""
    d = np.asarray(delta, dtype=float) / spec.bandwidth
    return float(_kernel_1d(spec.kind, d[0]) * _kernel_1d(spec.kind, d[1]))


def default_bandwidth(n: int, c: float = 2.5) -> float:
    """Rule-of-thumb bandwidth ``c * N^(-1/3)``."""
    if n < 1 or c <= 0:
        raise ValueError("need n >= 1 and c > 0")
    return c * float(n) ** (-1.0 / 3.0)


def _interleave(n: int, stride: int = 64) -> np.ndarray:
    """Fixed row permutation that spreads spatially adjacent (and similarly
    hard) rows across threads."""
    if n <= stride:
        return np.arange(n, dtype=np.int64)
    return np.argsort(np.arange(n, dtype=np.int64) % stride, kind="stable")


@numba.njit(cache=True, parallel=True)
def _fixed_point_rows(indptr, columns, weights, order, phi, tol, max_iter, out, iters):
    """Iterate every query row to its own convergence on its neighbor list.

    Rows share nothing but read-only inputs; the per-row arithmetic is a
    fixed sequential reduction over the row's neighbors, so results do not
    depend on the thread count or on the visiting order.  Each row's neighbor
    densities are gathered into contiguous scratch once and reused across its
    iterations; the responsibility ratios go through a scratch vector so the
    division loop has no cross-iteration dependency.
    """
    n_rows = indptr.size - 1
    n_comp = phi.shape[1]
    for rr in numba.prange(n_rows):
        r = order[rr]
        lo = indptr[r]
        nn = indptr[r + 1] - lo
        ph = np.empty((n_comp, nn))
        for jj in range(nn):
            i = columns[lo + jj]
            for k in range(n_comp):
                ph[k, jj] = phi[i, k]
        w = weights[lo : lo + nn]
        ratio = np.empty(nn)
        tau = out[r].copy()  # caller preloads the per-row start
        new_tau = np.empty(n_comp)
        done_at = max_iter
        for it in range(1, max_iter + 1):
            for jj in range(nn):
                den = 1e-300  # guards against total underflow
                for k in range(n_comp):
                    den += tau[k] * ph[k, jj]
                ratio[jj] = w[jj] / den
            total = 0.0
            for k in range(n_comp):
                acc = 0.0
                for jj in range(nn):
                    acc += ratio[jj] * ph[k, jj]
                new_tau[k] = acc * tau[k]
                total += new_tau[k]
            delta = 0.0
            for k in range(n_comp):
                new_tau[k] /= total
                diff = abs(new_tau[k] - tau[k])
                if diff > delta:
                    delta = diff
                tau[k] = new_tau[k]
            if delta < tol:
                done_at = it
                break
        out[r] = tau
        iters[r] = done_at


@numba.njit(cache=True, parallel=True)
def _fixed_point_rows_k2(indptr, columns, weights, order, phi, tol, max_iter, out, iters):
    """Two-component specialization of :func:`_fixed_point_rows`.

    The accumulation runs in four independent partial sums (fixed order) so
    the compiler can keep the division and multiply-add streams in vector
    registers.
    """
    n_rows = indptr.size - 1
    for rr in numba.prange(n_rows):
        r = order[rr]
        lo = indptr[r]
        nn = indptr[r + 1] - lo
        ph0 = np.empty(nn)
        ph1 = np.empty(nn)
        ratio = np.empty(nn)
        for jj in range(nn):
            i = columns[lo + jj]
            ph0[jj] = phi[i, 0]
            ph1[jj] = phi[i, 1]
        w = weights[lo : lo + nn]
        t0 = out[r, 0]  # caller preloads the per-row start
        t1 = out[r, 1]
        done_at = max_iter
        nn4 = nn - (nn % 4)
        for it in range(1, max_iter + 1):
            for jj in range(nn):
                ratio[jj] = w[jj] / (1e-300 + t0 * ph0[jj] + t1 * ph1[jj])
            u0a = 0.0
            u0b = 0.0
            u0c = 0.0
            u0d = 0.0
            u1a = 0.0
            u1b = 0.0
            u1c = 0.0
            u1d = 0.0
            for jj in range(0, nn4, 4):
                u0a += ratio[jj] * ph0[jj]
                u0b += ratio[jj + 1] * ph0[jj + 1]
                u0c += ratio[jj + 2] * ph0[jj + 2]
                u0d += ratio[jj + 3] * ph0[jj + 3]
                u1a += ratio[jj] * ph1[jj]
                u1b += ratio[jj + 1] * ph1[jj + 1]
                u1c += ratio[jj + 2] * ph1[jj + 2]
                u1d += ratio[jj + 3] * ph1[jj + 3]
            for jj in range(nn4, nn):
                u0a += ratio[jj] * ph0[jj]
                u1a += ratio[jj] * ph1[jj]
            n0 = t0 * ((u0a + u0b) + (u0c + u0d))
            n1 = t1 * ((u1a + u1b) + (u1c + u1d))
            total = n0 + n1
            n0 /= total
            n1 /= total
            delta = max(abs(n0 - t0), abs(n1 - t1))
            t0 = n0
            t1 = n1
            if delta < tol:
                done_at = it
                break
        out[r, 0] = t0
        out[r, 1] = t1
        iters[r] = done_at


@numba.njit(cache=True, parallel=True)
def _gaussian_neighbor_counts(queries, locations, inv_h, log_rtol, skip_self, counts, qmin):
    """Pass 1: per row, the minimum scaled squared distance and the number of
    points within the drop threshold of it.

    With ``skip_self`` the data point with the row's own index is left out
    (leave-one-out weighting for in-sample plug-in fields).
    """
    m = queries.shape[0]
    n = locations.shape[0]
    for r in numba.prange(m):
        qx = queries[r, 0]
        qy = queries[r, 1]
        best = np.inf
        for i in range(n):
            if skip_self and i == r:
                continue
            d1 = (locations[i, 0] - qx) * inv_h
            d2 = (locations[i, 1] - qy) * inv_h
            q = 0.5 * (d1 * d1 + d2 * d2)
            if q < best:
                best = q
        thr = best - log_rtol  # keep exp(-q) >= exp(-best) * rtol
        c = 0
        for i in range(n):
            if skip_self and i == r:
                continue
            d1 = (locations[i, 0] - qx) * inv_h
            d2 = (locations[i, 1] - qy) * inv_h
            if 0.5 * (d1 * d1 + d2 * d2) <= thr:
                c += 1
        counts[r] = c
        qmin[r] = best


@numba.njit(cache=True, parallel=True)
def _gaussian_neighbor_fill(queries, locations, inv_h, log_rtol, skip_self, indptr, qmin, columns, weights):
    """Pass 2: fill the kept columns and their kernel weights."""
    m = queries.shape[0]
    n = locations.shape[0]
    scale = 1.0 / (2.0 * np.pi)
    for r in numba.prange(m):
        qx = queries[r, 0]
        qy = queries[r, 1]
        thr = qmin[r] - log_rtol
        pos = indptr[r]
        for i in range(n):
            if skip_self and i == r:
                continue
            d1 = (locations[i, 0] - qx) * inv_h
            d2 = (locations[i, 1] - qy) * inv_h
            q = 0.5 * (d1 * d1 + d2 * d2)
            if q <= thr:
                columns[pos] = i
                weights[pos] = scale * np.exp(-q)
                pos += 1


@numba.njit(cache=True, parallel=True)
def _epanechnikov_neighbor_counts(queries, locations, inv_h, skip_self, counts):
    # strict inequality: boundary points carry weight exactly zero
    m = queries.shape[0]
    n = locations.shape[0]
    for r in numba.prange(m):
        qx = queries[r, 0]
        qy = queries[r, 1]
        c = 0
        for i in range(n):
            if skip_self and i == r:
                continue
            d1 = abs(locations[i, 0] - qx) * inv_h
            d2 = abs(locations[i, 1] - qy) * inv_h
            if d1 < 1.0 and d2 < 1.0:
                c += 1
        counts[r] = c


@numba.njit(cache=True, parallel=True)
def _epanechnikov_neighbor_fill(queries, locations, inv_h, skip_self, indptr, columns, weights):
    m = queries.shape[0]
    n = locations.shape[0]
    for r in numba.prange(m):
        qx = queries[r, 0]
        qy = queries[r, 1]
        pos = indptr[r]
        for i in range(n):
            if skip_self and i == r:
                continue
            d1 = (locations[i, 0] - qx) * inv_h
            d2 = (locations[i, 1] - qy) * inv_h
            if abs(d1) < 1.0 and abs(d2) < 1.0:
                columns[pos] = i
                weights[pos] = 0.5625 * (1.0 - d1 * d1) * (1.0 - d2 * d2)
                pos += 1


def _neighbor_lists(
    spec: KernelSpec, queries: np.ndarray, locations: np.ndarray, skip_self: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-row neighbor lists in CSR form, plus the empty-neighborhood mask.

    For the Gaussian kernel the drop rule is applied to scaled squared
    distances, so the exponential is evaluated only for kept entries; the
    Gaussian neighborhood is never empty.  The compact kernel keeps exactly
    its support.  ``skip_self`` drops the data point matching the row index.
    """
    m = queries.shape[0]
    inv_h = 1.0 / spec.bandwidth
    counts = np.zeros(m, dtype=np.int64)
    if spec.kind == "gaussian":
        qmin = np.empty(m)
        _gaussian_neighbor_counts(
            queries, locations, inv_h, np.log(WEIGHT_DROP_RTOL), skip_self, counts, qmin
        )
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        columns = np.empty(indptr[-1], dtype=np.int64)
        weights = np.empty(indptr[-1])
        _gaussian_neighbor_fill(
            queries, locations, inv_h, np.log(WEIGHT_DROP_RTOL), skip_self, indptr, qmin, columns, weights
        )
        # exp(-qmin) can underflow for queries absurdly far from the data,
        # and a leave-one-out row can run out of points entirely
        empty = np.zeros(m, dtype=bool)
        far = (qmin > 700.0) | (counts == 0)
        if np.any(far):
            empty[far] = True
            keep = np.repeat(~far, counts)
            columns = columns[keep]
            weights = weights[keep]
            counts = np.where(far, 0, counts)
            indptr = np.zeros(m + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
    else:
        _epanechnikov_neighbor_counts(queries, locations, inv_h, skip_self, counts)
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        columns = np.empty(indptr[-1], dtype=np.int64)
        weights = np.empty(indptr[-1])
        _epanechnikov_neighbor_fill(queries, locations, inv_h, skip_self, indptr, columns, weights)
        empty = counts == 0
    return indptr, columns, weights, empty


def _run_field(
    queries: np.ndarray,
    data: Dataset,
    theta: MixtureParams,
    spec: KernelSpec,
    cfg: FitConfig,
    workers: int,
    init_mixing: np.ndarray | None = None,
    skip_self: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared engine behind the single-query and whole-field entry points.

    ``init_mixing`` overrides the per-row start (default ``theta.mixing``);
    the per-query objective is concave, so the start moves only which side of
    the stopping tolerance the answer lands on, not the optimum itself.
    """
    m = queries.shape[0]
    k = theta.n_components
    floor = cfg.resolve_min_mixing(k)
    log_phi = log_density_matrix(data.features, theta.components)
    phi = np.ascontiguousarray(np.exp(log_phi - log_phi.max(axis=1, keepdims=True)))
    indptr, columns, weights, empty = _neighbor_lists(spec, queries, data.locations, skip_self)

    out = np.empty((m, k))
    iters = np.zeros(m, dtype=np.int64)
    live = np.nonzero(~empty)[0]
    if live.size:
        if live.size < m:
            # empty rows own zero entries, so the data arrays already hold
            # exactly the live rows' neighbor lists in order
            live_counts = np.diff(indptr)[live]
            live_indptr = np.zeros(live.size + 1, dtype=np.int64)
            np.cumsum(live_counts, out=live_indptr[1:])
        else:
            live_indptr = indptr
        if init_mixing is None:
            live_out = np.tile(theta.mixing, (live.size, 1))
        else:
            live_out = np.ascontiguousarray(init_mixing[live], dtype=float)
        live_iters = np.empty(live.size, dtype=np.int64)
        kernel = _fixed_point_rows_k2 if k == 2 else _fixed_point_rows
        prev_threads = numba.get_num_threads()
        numba.set_num_threads(max(1, min(workers, prev_threads)))
        try:
            kernel(
                live_indptr,
                columns,
                weights,
                _interleave(live.size),
                phi,
                cfg.tol,
                cfg.max_iter,
                live_out,
                live_iters,
            )
        finally:
            numba.set_num_threads(prev_threads)
        live_out = np.maximum(live_out, floor)
        live_out /= live_out.sum(axis=1, keepdims=True)
        out[live] = live_out
        iters[live] = live_iters
    out[empty] = theta.mixing
    return out, empty, iters


def local_em_at(
    s,
    data: Dataset,
    theta: MixtureParams,
    spec: KernelSpec,
    cfg: FitConfig | None = None,
) -> np.ndarray:
    """Local mixing probability vector at one query location.

    Maximizes the kernel-weighted likelihood in the mixing vector with the
    component parameters frozen at ``theta``, starting from ``theta.mixing``.
    Raises :class:`EmptyNeighborhood` when every kernel weight is zero.
    """
    cfg = cfg or FitConfig(max_iter=LOCAL_MAX_ITER)
    s = np.asarray(s, dtype=float).reshape(1, 2)
    if theta.n_components == 1:
        return np.ones(1)
    mixing, empty, _ = _run_field(s, data, theta, spec, cfg, workers=1)
    if empty[0]:
        raise EmptyNeighborhood(f"all kernel weights vanish at {tuple(s[0])}")
    return mixing[0]


def fit_local_mixing(
    data: Dataset,
    theta: MixtureParams,
    spec: KernelSpec,
    cfg: FitConfig | None = None,
    query_points: np.ndarray | None = None,
    workers: int = 1,
    init_mixing: np.ndarray | None = None,
    exclude_self: bool = False,
) -> LocalMixingField:
    """Estimate the mixing field at every query point (default: data locations).

    Rows are computed independently on their own neighbor lists; the result
    is byte-identical for any ``workers`` value.  Rows whose neighborhood is
    empty fall back to ``theta.mixing`` and are flagged.  ``init_mixing``
    supplies per-row starting values (used by the alternation driver to warm
    start from the previous round's field); the default start is
    ``theta.mixing`` for every row.  ``exclude_self`` applies only when the
    queries are the data locations themselves: each row's weight on its own
    instance is dropped, which keeps the plug-in prior for instance i
    independent of X_i (in-sample double counting otherwise biases the
    downstream refit).
    """
    cfg = cfg or FitConfig(max_iter=LOCAL_MAX_ITER)
    queries = (
        data.locations
        if query_points is None
        else np.ascontiguousarray(query_points, dtype=float)
    )
    if queries.ndim != 2 or (queries.size and queries.shape[1] != 2):
        raise DimensionMismatch("query_points must be M x 2")
    m = queries.shape[0]
    k = theta.n_components
    if m == 0:
        return LocalMixingField(
            np.empty((0, 2)), np.empty((0, k)), np.empty(0, dtype=bool), np.empty(0, dtype=np.int64)
        )
    if k == 1:
        return LocalMixingField(
            queries, np.ones((m, 1)), np.zeros(m, dtype=bool), np.zeros(m, dtype=np.int64)
        )
    if init_mixing is not None and init_mixing.shape != (m, k):
        raise DimensionMismatch("init_mixing must be M x K")
    if exclude_self and query_points is not None:
        raise DimensionMismatch("exclude_self applies only to in-sample queries")
    mixing, empty, iters = _run_field(
        queries, data, theta, spec, cfg, workers, init_mixing, exclude_self
    )
    return LocalMixingField(queries, mixing, empty, iters)
