import os

# Keep BLAS single-threaded (must happen before numpy loads); the field
# estimator manages its own thread pool, and replicate grids use processes.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
# The workqueue layer is fork safe, unlike OpenMP.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
import pytest

from sgmm.replicates import run_sag_grid, run_study1_grid, run_study1_replicate

PROCESSES = min(2, os.cpu_count() or 1)

N_GRID = (500, 1000, 2000, 5000)
REPLICATES = 100
SAG_REPLICATES = 50
BASE_SEED = 20240


def summarize(rows, key):
    """Mean over replicates of log metric, per sample size."""
    out = {}
    for n in sorted({r["n"] for r in rows}):
        values = [r[key] for r in rows if r["n"] == n and key in r]
        out[n] = float(np.mean(np.log(values))) if values else np.nan
    return out


@pytest.fixture(scope="session")
def study1_grid():
    """R=100 replicates of the clustered-location study over the N grid.

    Includes both joint initializations, in/out-of-sample fields, and the
    fully iterated estimator at the smallest and largest N.
    """
    return run_study1_grid(
        p=2,
        n_values=N_GRID,
        replicates=REPLICATES,
        base_seed=BASE_SEED,
        full_n=(500, 5000),
        include_oos=True,
        processes=PROCESSES,
    )


@pytest.fixture(scope="session")
def study1_p10():
    """R=100 replicates at p=10, N=5000 (no out-of-sample field, no full)."""
    tasks_rows = run_study1_grid(
        p=10,
        n_values=(5000,),
        replicates=REPLICATES,
        base_seed=BASE_SEED,
        full_n=(),
        include_oos=False,
        processes=PROCESSES,
    )
    return tasks_rows


@pytest.fixture(scope="session")
def sag_grid():
    """R=50 replicates of the location-mixture study at N=2000, L=5."""
    return run_sag_grid(
        n_components=5,
        p=2,
        n_values=(2000,),
        replicates=SAG_REPLICATES,
        base_seed=BASE_SEED,
        processes=PROCESSES,
    )


@pytest.fixture(scope="session")
def study1_single():
    """One full-featured replicate at N=1000 for cheap example tests."""
    return run_study1_replicate(2, 1000, BASE_SEED, include_oos=True, full_max_outer=3)
