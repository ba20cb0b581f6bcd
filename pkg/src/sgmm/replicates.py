"""Replicate studies over the synthetic generators.

One replicate of the clustered-location study fits the marginal, joint (both
initializations), and optionally fully-iterated estimators on one draw, plus
the in-sample and out-of-sample mixing fields, and reports raw per-replicate
metrics.  The location-mixture study compares the spatial and feature-only
pipelines on clustering scores.  Replicates are independent and keyed by
``base_seed + replicate_index``; grids fan out over a process pool.
"""

from __future__ import annotations

import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .gmm import FitConfig, MixtureParams, em_fit_marginal, kmeans_init
from .joint import SgmmModel, classify, em_fit_joint, fit_full
from .local import LOCAL_MAX_ITER, KernelSpec, default_bandwidth, fit_local_mixing
from .metrics import align_components, ari, auc, integrate_to_binary, mise_mixing
from .simulate import generate, sag_scenario, study1_scenario

# Fresh locations for out-of-sample evaluation come from an offset seed stream.
OOS_SEED_OFFSET = 1_000_003

FULL_MAX_OUTER = 10


def _slot_column(posteriors: np.ndarray, permutation, slot: int = 0) -> np.ndarray:
    """Posterior column of the estimated component aligned to a true slot."""
    for j, s in enumerate(permutation):
        if s == slot:
            return posteriors[:, j]
    raise ValueError("permutation does not cover the requested slot")


def run_study1_replicate(
    p: int,
    n: int,
    seed: int,
    include_oos: bool = True,
    full_max_outer: int = 0,
    workers: int = 1,
) -> dict:
    """Fit every estimator on one clustered-location draw and score it."""
    start = time.perf_counter()
    scenario = study1_scenario(p, n, seed)
    data = generate(scenario)
    truth = MixtureParams(scenario.components, scenario.mixing)
    cfg = FitConfig(seed=seed)
    local_cfg = replace(cfg, max_iter=LOCAL_MAX_ITER)
    kern = KernelSpec("gaussian", default_bandwidth(n))

    km = kmeans_init(data, 2, seed, cfg)
    mg = em_fit_marginal(data, km, cfg)
    field = fit_local_mixing(data, mg.params, kern, local_cfg, workers=workers, exclude_self=True)
    jnt_km = em_fit_joint(data, field, km, cfg)
    jnt_mg = em_fit_joint(data, field, mg.params, cfg)

    align_mg = align_components(mg.params, truth)
    align_jnt_km = align_components(jnt_km.params, truth)
    align_jnt_mg = align_components(jnt_mg.params, truth)

    out = {
        "p": p,
        "n": n,
        "seed": seed,
        "mse_mu1_mg": align_mg.squared_errors["mu_1"],
        "mse_mu1_jnt_km": align_jnt_km.squared_errors["mu_1"],
        "mse_mu1_jnt_mg": align_jnt_mg.squared_errors["mu_1"],
        "mise_in": mise_mixing(field, scenario, align_mg.permutation),
        "iters_mg": mg.iterations,
        "iters_jnt_km": jnt_km.iterations,
        "iters_jnt_mg": jnt_mg.iterations,
        "field_iters_mean": float(np.mean(field.iterations)),
    }

    if include_oos:
        oos_locations = generate(study1_scenario(p, n, seed + OOS_SEED_OFFSET)).locations
        field_oos = fit_local_mixing(
            data, mg.params, kern, local_cfg, query_points=oos_locations, workers=workers
        )
        out["mise_oos"] = mise_mixing(field_oos, scenario, align_mg.permutation)

    if full_max_outer > 0:
        model_full = fit_full(
            data, 2, cfg, kern, max_outer=full_max_outer, init_report=mg, workers=workers
        )
        align_full = align_components(model_full.theta, truth)
        out["mse_mu1_full"] = align_full.squared_errors["mu_1"]
        out["full_rounds"] = len(model_full.fit_info["outer_objectives"])

    # posterior ranking: spatial pipeline vs feature-only mixture
    binary = (data.labels == 1).astype(int)
    gmm_model = SgmmModel(mg.params, None, kern, "marginal")
    _, post_gmm = classify(data, gmm_model)
    out["auc_gmm"] = auc(_slot_column(post_gmm, align_mg.permutation), binary)
    sgmm_model = SgmmModel(jnt_mg.params, field, kern, "joint")
    _, post_sgmm = classify(data, sgmm_model)
    out["auc_sgmm"] = auc(_slot_column(post_sgmm, align_jnt_mg.permutation), binary)
    out["seconds"] = time.perf_counter() - start
    return out


def run_sag_replicate(
    n_components: int,
    p: int,
    n: int,
    seed: int,
    workers: int = 1,
) -> dict:
    """Compare spatial and feature-only clustering on one location-mixture draw.

    The binary reference marks the first ``ceil(L/2)`` classes positive; the
    reference enters only through metric evaluation.
    """
    scenario = replace(sag_scenario(n_components, p, seed), n=n)
    data = generate(scenario)
    cfg = FitConfig(seed=seed)
    local_cfg = replace(cfg, max_iter=LOCAL_MAX_ITER)
    kern = KernelSpec("gaussian", default_bandwidth(n))
    positive = (data.labels <= (n_components + 1) // 2).astype(int)

    km = kmeans_init(data, n_components, seed, cfg)
    mg = em_fit_marginal(data, km, cfg)
    gmm_model = SgmmModel(mg.params, None, kern, "marginal")
    labels_gmm, post_gmm = classify(data, gmm_model)
    scores_gmm, _ = integrate_to_binary(post_gmm, positive)

    field = fit_local_mixing(data, mg.params, kern, local_cfg, workers=workers, exclude_self=True)
    jnt = em_fit_joint(data, field, mg.params, cfg)
    sgmm_model = SgmmModel(jnt.params, field, kern, "joint")
    labels_sgmm, post_sgmm = classify(data, sgmm_model)
    scores_sgmm, _ = integrate_to_binary(post_sgmm, positive)

    return {
        "p": p,
        "n": n,
        "seed": seed,
        "auc_gmm": auc(scores_gmm, positive),
        "auc_sgmm": auc(scores_sgmm, positive),
        "ari_gmm": ari(labels_gmm, data.labels),
        "ari_sgmm": ari(labels_sgmm, data.labels),
    }


def _study1_task(args):
    return run_study1_replicate(*args)


def _sag_task(args):
    return run_sag_replicate(*args)


def _fan_out(task, arglist, processes: int):
    if processes > 1 and len(arglist) > 1:
        # spawned workers: the JIT threading layer is not fork safe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=processes, mp_context=ctx) as pool:
            return list(pool.map(task, arglist, chunksize=1))
    return [task(args) for args in arglist]


def run_study1_grid(
    p: int,
    n_values,
    replicates: int,
    base_seed: int,
    full_n=(),
    include_oos: bool = True,
    processes: int = 1,
) -> list[dict]:
    """All replicates over a sample-size grid; rows carry raw metric values."""
    tasks = []
    for n in n_values:
        outer = FULL_MAX_OUTER if n in set(full_n) else 0
        for r in range(replicates):
            tasks.append((p, n, base_seed + r, include_oos, outer, 1))
    rows = _fan_out(_study1_task, tasks, processes)
    for row, (_, n, seed, *_rest) in zip(rows, tasks):
        row["replicate"] = seed - base_seed
    return rows


def run_sag_grid(
    n_components: int,
    p: int,
    n_values,
    replicates: int,
    base_seed: int,
    processes: int = 1,
) -> list[dict]:
    tasks = [
        (n_components, p, n, base_seed + r, 1)
        for n in n_values
        for r in range(replicates)
    ]
    rows = _fan_out(_sag_task, tasks, processes)
    for row, (_, _, n, seed, _) in zip(rows, tasks):
        row["replicate"] = seed - base_seed
    return rows


def study1_rows_to_records(rows: list[dict]) -> list[dict]:
    """Flatten grid rows to the long replicate-report format (one row per method)."""
    records = []
    for row in rows:
        base = {"study": "study1", "p": row["p"], "n": row["n"], "replicate": row["replicate"], "seed": row["seed"]}
        records.append({**base, "method": "mg", "mse_mu1": row["mse_mu1_mg"], "auc": row["auc_gmm"]})
        records.append({**base, "method": "jnt_kmeans", "mse_mu1": row["mse_mu1_jnt_km"]})
        records.append({**base, "method": "jnt_mg", "mse_mu1": row["mse_mu1_jnt_mg"], "auc": row["auc_sgmm"]})
        if "mse_mu1_full" in row:
            records.append({**base, "method": "full", "mse_mu1": row["mse_mu1_full"]})
        records.append({**base, "method": "field_in", "mise": row["mise_in"]})
        if "mise_oos" in row:
            records.append({**base, "method": "field_oos", "mise": row["mise_oos"]})
    return records


def sag_rows_to_records(rows: list[dict]) -> list[dict]:
    records = []
    for row in rows:
        base = {"study": "sag", "p": row["p"], "n": row["n"], "replicate": row["replicate"], "seed": row["seed"]}
        records.append({**base, "method": "gmm", "auc": row["auc_gmm"], "ari": row["ari_gmm"]})
        records.append({**base, "method": "sgmm", "auc": row["auc_sgmm"], "ari": row["ari_sgmm"]})
    return records
