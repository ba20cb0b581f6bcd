"""Evaluation utilities: label alignment, parameter errors, and clustering scores.

Mixture labels are unidentified, so every parameter comparison first picks the
component permutation that matches estimated means to true means.  The
clustering metrics follow the standard definitions: rank-based AUC with the
half-tie convention, pair-counting adjusted Rand index, and mask
intersection-over-union.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import comb

import numpy as np

from .errors import DimensionMismatch, SingleClass
from .gmm import MixtureParams
from .local import LocalMixingField
from .simulate import Scenario, true_mixing_field

MAX_BRUTE_FORCE_K = 8


@dataclass(frozen=True)
class AlignedComparison:
    """Best-permutation match of estimated against true components.

    ``permutation[j]`` is the true-component slot assigned to estimated
    component ``j``.  Squared errors are mean squared entry-wise errors,
    keyed ``mu_1``, ``Sigma_1``, ... by true slot, plus ``pi``.
    """

    permutation: tuple[int, ...]
    squared_errors: dict[str, float]


def align_components(est: MixtureParams, truth: MixtureParams) -> AlignedComparison:
    """Match components by minimizing total squared mean distance.

    Brute force over all permutations (K <= 8).  Errors are reported under
    the chosen permutation: entry ``mu_k`` compares the estimated component
    sitting in true slot ``k`` against the true component ``k``.
    """
    k = truth.n_components
    if est.n_components != k or est.dim != truth.dim:
        raise DimensionMismatch("estimate and truth must share K and p")
    if k > MAX_BRUTE_FORCE_K:
        raise DimensionMismatch(f"alignment is brute force; K must be <= {MAX_BRUTE_FORCE_K}")
    est_means = est.means()
    true_means = truth.means()
    best = None
    best_cost = np.inf
    for perm in permutations(range(k)):
        # perm[slot] = estimated component placed in true slot
        cost = float(sum(np.sum((est_means[perm[j]] - true_means[j]) ** 2) for j in range(k)))
        if cost < best_cost:
            best_cost = cost
            best = perm
    errors: dict[str, float] = {}
    for j in range(k):
        e = est.components[best[j]]
        t = truth.components[j]
        errors[f"mu_{j + 1}"] = float(np.mean((e.mean - t.mean) ** 2))
        errors[f"Sigma_{j + 1}"] = float(np.mean((e.covariance - t.covariance) ** 2))
    errors["pi"] = float(np.mean((est.mixing[list(best)] - truth.mixing) ** 2))
    # invert: estimated component j sits in true slot inverse[j]
    inverse = [0] * k
    for slot in range(k):
        inverse[best[slot]] = slot
    return AlignedComparison(permutation=tuple(inverse), squared_errors=errors)


def mise_mixing(
    field_hat: LocalMixingField,
    scenario: Scenario,
    permutation: tuple[int, ...] | None = None,
) -> float:
    """Mean squared error of the class-1 mixing curve over the query points.

    ``permutation`` maps estimated components to true slots (as produced by
    :func:`align_components`); identity when omitted.
    """
    truth = true_mixing_field(scenario, field_hat.query_points)
    est = field_hat.mixing
    if permutation is not None:
        slot = [None] * len(permutation)
        for j, s in enumerate(permutation):
            slot[s] = j
        est = est[:, slot]
    if est.shape != truth.shape:
        raise DimensionMismatch("field and scenario disagree on K")
    return float(np.mean((est[:, 0] - truth[:, 0]) ** 2))


def auc(scores, labels) -> float:
    """Probability a positive outscores a negative, ties counted half.

    Rank-based Mann-Whitney statistic; identical to the trapezoidal ROC area.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1 if labels.dtype != bool else labels
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need both classes to compute AUC")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def iou(pred, truth) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    union = np.logical_or(pred, truth).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, truth).sum() / union)


def ari(a, b) -> float:
    """Adjusted Rand index from the pair-counting contingency table.

    Returns 1.0 when both partitions are a single cluster (the index is
    undefined there; total agreement is the sensible convention).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.size < 2:
        raise DimensionMismatch("partitions must share a length of at least 2")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_cells = sum(comb(int(v), 2) for v in table.ravel())
    sum_rows = sum(comb(int(v), 2) for v in table.sum(axis=1))
    sum_cols = sum(comb(int(v), 2) for v in table.sum(axis=0))
    n_pairs = comb(a.size, 2)
    expected = sum_rows * sum_cols / n_pairs
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def integrate_to_binary(posteriors: np.ndarray, reference) -> tuple[np.ndarray, np.ndarray]:
    """Collapse K cluster posteriors into a binary score by majority vote.

    Each cluster is assigned to class 1 when the mean reference label among
    its argmax members exceeds one half (empty clusters go to class 0); the
    score is the summed posterior mass of the class-1 clusters.  Uses the
    reference labels at evaluation time only.
    """
    posteriors = np.asarray(posteriors, dtype=float)
    reference = np.asarray(reference).astype(float)
    if posteriors.ndim != 2 or reference.shape != (posteriors.shape[0],):
        raise DimensionMismatch("posteriors must be N x K with an N-vector reference")
    if np.all(reference == reference[0]):
        raise SingleClass("reference labels contain a single class")
    hard = np.argmax(posteriors, axis=1)
    k = posteriors.shape[1]
    cluster_to_class = np.zeros(k, dtype=int)
    for j in range(k):
        members = reference[hard == j]
        if members.size and members.mean() > 0.5:
            cluster_to_class[j] = 1
    scores = posteriors[:, cluster_to_class == 1].sum(axis=1)
    return scores, cluster_to_class
