"""File formats: dataset CSV, model JSON, prediction/heatmap CSV, PGM rasters.

Every number is written with 17 significant digits so values round-trip
through text exactly; serialize -> parse -> serialize is byte-identical.
JSON is emitted by a small deterministic writer (fixed key order, fixed float
formatting) rather than ``json.dumps`` so the bytes are stable.
"""

from __future__ import annotations

import json

import numpy as np

from .density import GaussianComponent
from .errors import DimensionMismatch
from .gmm import Dataset, MixtureParams
from .joint import SgmmModel
from .local import KernelSpec, LocalMixingField
from .simulate import Scenario, SpatialGaussianMixture, TruncatedGaussian

SCHEMA_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _emit(obj, parts: list[str]) -> None:
    if isinstance(obj, dict):
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                parts.append(",")
            parts.append(json.dumps(key))
            parts.append(":")
            _emit(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, value in enumerate(obj):
            if i:
                parts.append(",")
            _emit(value, parts)
        parts.append("]")
    elif isinstance(obj, bool) or obj is None:
        parts.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(_fmt(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), parts)
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_json(obj: dict) -> str:
    parts: list[str] = []
    _emit(obj, parts)
    parts.append("\n")
    return "".join(parts)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# dataset CSV: x1..xp, s1, s2 [, y]


def write_dataset_csv(path, data: Dataset) -> None:
    p = data.dim
    cols = [f"x{j + 1}" for j in range(p)] + ["s1", "s2"]
    if data.labels is not None:
        cols.append("y")
    lines = [",".join(cols)]
    for i in range(data.n):
        row = [_fmt(v) for v in data.features[i]]
        row += [_fmt(data.locations[i, 0]), _fmt(data.locations[i, 1])]
        if data.labels is not None:
            row.append(str(int(data.labels[i])))
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


def read_dataset_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    has_labels = header[-1] == "y"
    p = len(header) - (3 if has_labels else 2)
    if p < 1 or header[:p] != [f"x{j + 1}" for j in range(p)]:
        raise DimensionMismatch(f"unrecognized dataset header: {header}")
    raw = np.asarray(rows, dtype=float)
    features = raw[:, :p]
    locations = raw[:, p : p + 2]
    labels = raw[:, p + 2].astype(int) if has_labels else None
    return Dataset(features, locations, labels)


# ---------------------------------------------------------------------------
# model JSON


def _symmetrized(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def model_to_dict(model: SgmmModel) -> dict:
    theta = model.theta
    doc = {
        "schema_version": SCHEMA_VERSION,
        "K": theta.n_components,
        "p": theta.dim,
        "stage": model.stage,
        "mixing": theta.mixing,
        "components": [
            {"mean": c.mean, "covariance": _symmetrized(c.covariance).ravel()}
            for c in theta.components
        ],
        "kernel": {"kind": model.kernel.kind, "bandwidth": model.kernel.bandwidth},
    }
    if model.field is not None:
        field = model.field
        doc["field"] = {
            "s1": field.query_points[:, 0],
            "s2": field.query_points[:, 1],
            "pi": [field.mixing[:, k] for k in range(field.n_components)],
            "flag": field.flags.astype(int),
        }
    if model.fit_info:
        doc["fit_report"] = model.fit_info
    return doc


def write_model_json(path, model: SgmmModel) -> None:
    _write_text(path, dumps_json(model_to_dict(model)))


def model_from_dict(doc: dict) -> SgmmModel:
    k, p = int(doc["K"]), int(doc["p"])
    comps = []
    for entry in doc["components"]:
        mean = np.asarray(entry["mean"], dtype=float)
        cov = np.asarray(entry["covariance"], dtype=float).reshape(p, p)
        comps.append(GaussianComponent(mean, cov))
    theta = MixtureParams(tuple(comps), np.asarray(doc["mixing"], dtype=float))
    kernel = KernelSpec(doc["kernel"]["kind"], float(doc["kernel"]["bandwidth"]))
    field = None
    if "field" in doc:
        f = doc["field"]
        query = np.column_stack([np.asarray(f["s1"], float), np.asarray(f["s2"], float)])
        mixing = np.column_stack([np.asarray(col, float) for col in f["pi"]])
        if mixing.shape[1] != k:
            raise DimensionMismatch("field pi arrays disagree with K")
        field = LocalMixingField(query, mixing, np.asarray(f["flag"], dtype=bool))
    return SgmmModel(
        theta=theta,
        field=field,
        kernel=kernel,
        stage=doc["stage"],
        fit_info=doc.get("fit_report"),
    )


def read_model_json(path) -> SgmmModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# scenario JSON


def scenario_to_dict(scenario: Scenario) -> dict:
    spatial = []
    for law in scenario.spatial:
        if isinstance(law, TruncatedGaussian):
            spatial.append(
                {
                    "kind": "truncated_gaussian",
                    "mean": law.mean,
                    "cov": law.cov.ravel(),
                    "box": [law.box[0], law.box[1]],
                }
            )
        elif isinstance(law, SpatialGaussianMixture):
            spatial.append(
                {
                    "kind": "gaussian_mixture",
                    "weights": law.weights,
                    "means": law.means,
                    "covs": [c.ravel() for c in law.covs],
                }
            )
        else:
            raise TypeError(f"unknown spatial law {type(law)!r}")
    return {
        "schema_version": SCHEMA_VERSION,
        "K": scenario.n_components,
        "p": scenario.dim,
        "n": scenario.n,
        "seed": scenario.seed,
        "mixing": scenario.mixing,
        "components": [
            {"mean": c.mean, "covariance": _symmetrized(c.covariance).ravel()}
            for c in scenario.components
        ],
        "spatial": spatial,
    }


def write_scenario_json(path, scenario: Scenario) -> None:
    _write_text(path, dumps_json(scenario_to_dict(scenario)))


def scenario_from_dict(doc: dict) -> Scenario:
    k, p = int(doc["K"]), int(doc["p"])
    comps = tuple(
        GaussianComponent(
            np.asarray(e["mean"], float), np.asarray(e["covariance"], float).reshape(p, p)
        )
        for e in doc["components"]
    )
    spatial = []
    for entry in doc["spatial"]:
        if entry["kind"] == "truncated_gaussian":
            spatial.append(
                TruncatedGaussian(
                    np.asarray(entry["mean"], float),
                    np.asarray(entry["cov"], float).reshape(2, 2),
                    (float(entry["box"][0]), float(entry["box"][1])),
                )
            )
        elif entry["kind"] == "gaussian_mixture":
            covs = np.stack([np.asarray(c, float).reshape(2, 2) for c in entry["covs"]])
            spatial.append(
                SpatialGaussianMixture(
                    np.asarray(entry["weights"], float),
                    np.asarray(entry["means"], float),
                    covs,
                )
            )
        else:
            raise DimensionMismatch(f"unknown spatial law kind {entry['kind']!r}")
    return Scenario(
        k, p, int(doc["n"]), np.asarray(doc["mixing"], float), comps, tuple(spatial), int(doc["seed"])
    )


def read_scenario_json(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# mixing-field CSV: s1, s2, pi_1..pi_K, flag


def write_field_csv(path, field: LocalMixingField) -> None:
    k = field.n_components
    header = ["s1", "s2"] + [f"pi_{j + 1}" for j in range(k)] + ["flag"]
    lines = [",".join(header)]
    for i in range(field.n_points):
        row = [_fmt(field.query_points[i, 0]), _fmt(field.query_points[i, 1])]
        row += [_fmt(v) for v in field.mixing[i]]
        row.append(str(int(field.flags[i])))
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# predictions CSV: label, alpha_1..alpha_K


def write_predictions_csv(path, labels: np.ndarray, posteriors: np.ndarray) -> None:
    k = posteriors.shape[1]
    header = ["label"] + [f"alpha_{j + 1}" for j in range(k)]
    lines = [",".join(header)]
    for i in range(posteriors.shape[0]):
        lines.append(",".join([str(int(labels[i]))] + [_fmt(v) for v in posteriors[i]]))
    _write_text(path, "\n".join(lines) + "\n")


def read_predictions_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if header[0] != "label":
        raise DimensionMismatch(f"unrecognized predictions header: {header}")
    raw = np.asarray(rows, dtype=float)
    return raw[:, 0].astype(int), raw[:, 1:]


# ---------------------------------------------------------------------------
# metrics CSV (single row) and heatmap artifacts

METRIC_COLUMNS = (
    "n", "ari", "auc", "iou",
    "mse_mu_1", "mse_mu_2", "mse_Sigma_1", "mse_Sigma_2", "mse_pi", "mise",
)


def write_metrics_csv(path, values: dict) -> None:
    cols = [c for c in METRIC_COLUMNS if c in values]
    line = ",".join(
        str(int(values[c])) if c == "n" else _fmt(values[c]) for c in cols
    )
    _write_text(path, ",".join(cols) + "\n" + line + "\n")


def write_heatmap_csv(path, points: np.ndarray, values: np.ndarray, flags: np.ndarray) -> None:
    lines = ["s1,s2,value,flag"]
    for i in range(points.shape[0]):
        lines.append(
            ",".join(
                [_fmt(points[i, 0]), _fmt(points[i, 1]), _fmt(values[i]), str(int(flags[i]))]
            )
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_pgm(path, grid: np.ndarray) -> None:
    """Binary 8-bit graymap of values in [0, 1]; row 0 is the top (largest s2)."""
    g = np.clip(np.asarray(grid, dtype=float), 0.0, 1.0)
    pixels = np.rint(g * 255.0).astype(np.uint8)
    pixels = pixels[::-1, :]  # north up
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
