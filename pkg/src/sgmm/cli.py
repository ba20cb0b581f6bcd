"""Command-line front end: simulate, fit, predict, evaluate, heatmap, repro.

Exit codes: 2 for usage or schema mismatches, 3 for I/O failures, 4 when a
fit finished without converging (the model file is still written).  All
diagnostics go to stderr; artifact files are byte-identical for equal seeds
regardless of the thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import io
from .errors import DimensionMismatch, SgmmError
from .gmm import FitConfig, MixtureParams, em_fit_marginal, kmeans_init
from .joint import SgmmModel, classify, em_fit_joint, fit_full
from .local import LOCAL_MAX_ITER, KernelSpec, fit_local_mixing
from .metrics import align_components, ari, auc, integrate_to_binary, iou, mise_mixing
from .replicates import (
    run_sag_grid,
    run_study1_grid,
    sag_rows_to_records,
    study1_rows_to_records,
)
from .simulate import generate, sag_scenario, study1_scenario

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NOT_CONVERGED = 4

THREADS_ENV = "SGMM_THREADS"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _scenario_sidecar(out_path: str) -> str:
    root, _ = os.path.splitext(out_path)
    return root + ".scenario.json"


def cmd_simulate(args) -> int:
    if args.study == "1":
        scenario = study1_scenario(args.p, args.n, args.seed)
    else:
        scenario = replace(sag_scenario(args.k, args.p, args.seed), n=args.n)
    data = generate(scenario)
    io.write_dataset_csv(args.out, data)
    io.write_scenario_json(_scenario_sidecar(args.out), scenario)
    _log(f"wrote {data.n} rows to {args.out}")
    return 0


def _fit_model(data, args) -> tuple[SgmmModel, bool]:
    cfg = FitConfig(max_iter=args.max_iter, tol=args.tol, seed=args.seed)
    kern = KernelSpec(args.kernel, args.bandwidth_c * float(data.n) ** (-1.0 / 3.0))
    km = kmeans_init(data, args.k, args.seed, cfg)
    mg = em_fit_marginal(data, km, cfg)
    converged = mg.converged
    info = {
        "marginal_iterations": mg.iterations,
        "marginal_loglik": float(mg.loglik_trace[-1]),
        "converged": bool(mg.converged),
    }
    if args.stage == "marginal":
        model = SgmmModel(mg.params, None, kern, "marginal", fit_info=info)
        return model, converged

    if args.stage == "full":
        model = fit_full(
            data, args.k, cfg, kern, max_outer=args.max_outer,
            init_report=mg, workers=args.threads,
        )
        info = dict(model.fit_info)
        info["converged"] = bool(mg.converged)
        info.pop("wall_time_seconds", None)  # keeps artifacts byte-stable
        return replace(model, fit_info=info), converged

    local_cfg = replace(cfg, max_iter=LOCAL_MAX_ITER)
    field = fit_local_mixing(
        data, mg.params, kern, local_cfg, workers=args.threads, exclude_self=True
    )
    init_theta = mg.params if args.init == "marginal" else km
    jnt = em_fit_joint(data, field, init_theta, cfg)
    converged = converged and jnt.converged
    theta = replace(jnt.params, mixing=mg.params.mixing)
    info.update(
        {
            "joint_iterations": jnt.iterations,
            "joint_loglik": float(jnt.loglik_trace[-1]),
            "field_iterations_mean": float(np.mean(field.iterations)),
            "converged": bool(converged),
        }
    )
    model = SgmmModel(theta, field, kern, "joint", fit_info=info)
    return model, converged


def cmd_fit(args) -> int:
    data = io.read_dataset_csv(args.data)
    model, converged = _fit_model(data, args)
    io.write_model_json(args.out, model)
    _log(f"stage={model.stage} K={args.k} converged={converged} -> {args.out}")
    if not converged:
        _log("fit did not converge within max-iter")
        return EXIT_NOT_CONVERGED
    return 0


def cmd_predict(args) -> int:
    model = io.read_model_json(args.model)
    data = io.read_dataset_csv(args.data)
    if data.dim != model.theta.dim:
        _log(f"data has p={data.dim}, model expects p={model.theta.dim}")
        return EXIT_USAGE
    if data.labels is not None and data.labels.max() > model.theta.n_components:
        _log("labels exceed the model component count")
        return EXIT_USAGE
    reference = io.read_dataset_csv(args.train_data) if args.train_data else None
    labels, posteriors = classify(data, model, reference=reference, workers=args.threads)
    io.write_predictions_csv(args.out, labels, posteriors)
    return 0


def cmd_evaluate(args) -> int:
    pred_labels, posteriors = io.read_predictions_csv(args.pred)
    truth_data = io.read_dataset_csv(args.truth_data)
    if truth_data.labels is None:
        _log("truth data has no label column")
        return EXIT_USAGE
    labels = truth_data.labels
    if pred_labels.shape != labels.shape:
        _log("prediction and truth row counts differ")
        return EXIT_USAGE
    binary = (labels == 1).astype(int)
    values = {"n": labels.size, "ari": ari(pred_labels, labels)}
    try:
        scores, _ = integrate_to_binary(posteriors, binary)
        values["auc"] = auc(scores, binary)
        values["iou"] = iou(scores > 0.5, binary == 1)
    except SgmmError as exc:
        _log(f"skipping AUC/IoU: {exc}")

    if args.scenario:
        scenario = io.read_scenario_json(args.scenario)
        if not args.model:
            _log("--scenario requires --model for parameter errors")
            return EXIT_USAGE
        model = io.read_model_json(args.model)
        truth_params = MixtureParams(scenario.components, scenario.mixing)
        comparison = align_components(model.theta, truth_params)
        for key, value in comparison.squared_errors.items():
            values[f"mse_{key}"] = value
        if model.field is not None:
            values["mise"] = mise_mixing(model.field, scenario, comparison.permutation)
    io.write_metrics_csv(args.out, values)
    return 0


def _heatmap_grid(locations: np.ndarray, res: int) -> tuple[np.ndarray, np.ndarray]:
    lo = locations.min(axis=0)
    hi = locations.max(axis=0)
    span = hi - lo
    lo = lo - 0.05 * span
    hi = hi + 0.05 * span
    s1 = np.linspace(lo[0], hi[0], res)
    s2 = np.linspace(lo[1], hi[1], res)
    g1, g2 = np.meshgrid(s1, s2, indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel()]), (s1, s2)


def cmd_heatmap(args) -> int:
    model = io.read_model_json(args.model)
    data = io.read_dataset_csv(args.data)
    points, _axes = _heatmap_grid(data.locations, args.grid_res)
    cfg = FitConfig(max_iter=LOCAL_MAX_ITER)
    field = fit_local_mixing(
        data, model.theta, model.kernel, cfg, query_points=points, workers=args.threads
    )
    if args.quantity == "mixing":
        values = field.mixing[:, 0]
    else:
        _, posteriors = classify(data, model, workers=args.threads)
        alpha1 = posteriors[:, 0]
        num = np.zeros(points.shape[0])
        den = np.zeros(points.shape[0])
        h = model.kernel.bandwidth
        fallback = float(alpha1.mean())
        for start in range(0, points.shape[0], 2048):
            block = slice(start, min(start + 2048, points.shape[0]))
            d1 = (points[block, 0][:, None] - data.locations[:, 0][None, :]) / h
            d2 = (points[block, 1][:, None] - data.locations[:, 1][None, :]) / h
            w = np.exp(-0.5 * (d1 * d1 + d2 * d2))
            num[block] = w @ alpha1
            den[block] = w.sum(axis=1)
        values = np.where(den > 0, num / np.maximum(den, 1e-300), fallback)
    io.write_heatmap_csv(args.out, points, values, field.flags)
    if args.raster:
        grid = values.reshape(args.grid_res, args.grid_res).T  # rows follow s2
        io.write_pgm(args.raster, grid)
    return 0


def cmd_repro(args) -> int:
    n_values = [int(v) for v in args.n_grid.split(",")]
    if args.study == "1":
        full_n = [int(v) for v in args.full_n.split(",")] if args.full_n else []
        rows = run_study1_grid(
            args.p, n_values, args.replicates, args.seed,
            full_n=full_n, processes=args.threads,
        )
        records = study1_rows_to_records(rows)
    else:
        rows = run_sag_grid(
            args.k, args.p, n_values, args.replicates, args.seed, processes=args.threads
        )
        records = sag_rows_to_records(rows)
    columns = ["study", "p", "n", "replicate", "seed", "method", "mse_mu1", "mise", "auc", "ari"]
    lines = [",".join(columns)]
    for rec in records:
        cells = []
        for col in columns:
            value = rec.get(col, "")
            if isinstance(value, float):
                cells.append(format(value, ".17g"))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(f"wrote {len(records)} records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgmm",
        description="Spatially varying Gaussian mixture estimation and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    sim.add_argument("--study", choices=["1", "sag"], required=True)
    sim.add_argument("--p", type=int, default=2)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--k", type=int, default=5, help="components for the sag study")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit a model to a dataset CSV")
    fit.add_argument("--data", required=True)
    fit.add_argument("--k", type=int, required=True)
    fit.add_argument("--stage", choices=["marginal", "joint", "full"], default="joint")
    fit.add_argument("--bandwidth-c", type=float, default=2.5)
    fit.add_argument("--kernel", choices=["gaussian", "epanechnikov"], default="gaussian")
    fit.add_argument("--init", choices=["kmeans", "marginal"], default="marginal")
    fit.add_argument("--tol", type=float, default=1e-8)
    fit.add_argument("--max-iter", type=int, default=2000)
    fit.add_argument("--max-outer", type=int, default=15)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--threads", type=int, default=_default_threads())
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="labels and posteriors for a dataset")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument(
        "--train-data",
        default=None,
        help="reference sample for local mixing at out-of-sample locations "
        "(defaults to --data itself)",
    )
    pred.add_argument("--threads", type=int, default=_default_threads())
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="score predictions against labeled data")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth-data", required=True)
    ev.add_argument("--scenario", default=None)
    ev.add_argument("--model", default=None)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    heat = sub.add_parser("heatmap", help="mixing or posterior surface on a grid")
    heat.add_argument("--model", required=True)
    heat.add_argument("--data", required=True)
    heat.add_argument("--grid-res", type=int, default=200)
    heat.add_argument("--quantity", choices=["mixing", "posterior"], default="mixing")
    heat.add_argument("--threads", type=int, default=_default_threads())
    heat.add_argument("--out", required=True)
    heat.add_argument("--raster", default=None, help="optional PGM output path")
    heat.set_defaults(func=cmd_heatmap)

    rep = sub.add_parser("repro", help="replicate grid: simulate, fit, evaluate")
    rep.add_argument("--study", choices=["1", "sag"], required=True)
    rep.add_argument("--p", type=int, default=2)
    rep.add_argument("--k", type=int, default=5)
    rep.add_argument("--n-grid", default="500,1000,2000,5000")
    rep.add_argument("--replicates", type=int, default=100)
    rep.add_argument("--full-n", default="", help="comma list of n values to also fit fully iterated")
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--threads", type=int, default=_default_threads())
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_repro)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO
    except DimensionMismatch as exc:
        _log(f"schema mismatch: {exc}")
        return EXIT_USAGE
    except SgmmError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
