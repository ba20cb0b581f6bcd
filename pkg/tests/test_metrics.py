from dataclasses import replace
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import ari_pair_counting, auc_pair_counting
from sgmm import (
    Dataset,
    FitConfig,
    GaussianComponent,
    LocalMixingField,
    MixtureParams,
    SingleClass,
    TruncatedGaussian,
    align_components,
    ari,
    auc,
    em_fit_marginal,
    integrate_to_binary,
    iou,
    kmeans_init,
    mise_mixing,
    study1_scenario,
    true_mixing_field,
)
from sgmm.simulate import Scenario, generate


def params_from(means, mixing=None):
    means = np.asarray(means, dtype=float)
    k, p = means.shape
    comps = tuple(GaussianComponent(m, np.eye(p)) for m in means)
    mix = np.full(k, 1.0 / k) if mixing is None else np.asarray(mixing)
    return MixtureParams(comps, mix)


class TestAlignComponents:
    def test_exact_match(self):
        truth = params_from([[1.0, 1.0], [-1.0, -1.0]], [0.4, 0.6])
        result = align_components(truth, truth)
        assert result.permutation == (0, 1)
        assert all(v == 0.0 for v in result.squared_errors.values())

    def test_swapped_components(self):
        truth = params_from([[1.0, 1.0], [-1.0, -1.0]], [0.4, 0.6])
        est = MixtureParams(truth.components[::-1], truth.mixing[::-1])
        result = align_components(est, truth)
        assert result.permutation == (1, 0)
        assert all(v == 0.0 for v in result.squared_errors.values())

    def test_offset_error_value(self):
        delta = np.array([0.3, -0.1])
        truth = params_from([[1.0, 1.0], [-1.0, -1.0]])
        est = params_from([[-1.0, -1.0] + delta, [1.0, 1.0]])
        result = align_components(est, truth)
        assert result.permutation == (1, 0)
        assert result.squared_errors["mu_2"] == pytest.approx(np.mean(delta**2), abs=1e-14)
        assert result.squared_errors["mu_1"] == 0.0

    def test_permutation_invariance_of_errors(self):
        rng = np.random.default_rng(0)
        truth = params_from(rng.normal(size=(3, 2)) * 4)
        est = params_from(truth.means() + rng.normal(size=(3, 2)) * 0.1)
        base = align_components(est, truth).squared_errors
        for perm in permutations(range(3)):
            shuffled = MixtureParams(
                tuple(est.components[j] for j in perm), est.mixing[list(perm)]
            )
            other = align_components(shuffled, truth).squared_errors
            for key in base:
                assert other[key] == pytest.approx(base[key], abs=1e-14)


def constant_truth_scenario(n=100):
    # identical spatial laws make the local mixing constant at the global one
    law = TruncatedGaussian(np.zeros(2), 0.5 * np.eye(2), (-5, 5))
    comps = (
        GaussianComponent(np.ones(2), np.eye(2)),
        GaussianComponent(-np.ones(2), np.eye(2)),
    )
    return Scenario(2, 2, n, np.array([0.4, 0.6]), comps, (law, law), seed=0)


class TestMiseMixing:
    def test_exact_field_scores_zero(self):
        sc = study1_scenario(2, 50, 3)
        pts = generate(sc).locations
        field = LocalMixingField(pts, true_mixing_field(sc, pts))
        assert mise_mixing(field, sc) == 0.0

    def test_constant_field_vs_constant_truth(self):
        sc = constant_truth_scenario()
        pts = np.random.default_rng(1).uniform(-2, 2, size=(40, 2))
        c = 0.55
        field = LocalMixingField(pts, np.tile([c, 1 - c], (40, 1)))
        assert mise_mixing(field, sc) == pytest.approx((c - 0.4) ** 2, abs=1e-12)

    def test_three_point_toy(self):
        sc = study1_scenario(2, 10, 4)
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [-2.0, 0.5]])
        truth = true_mixing_field(sc, pts)
        offsets = np.array([0.05, -0.1, 0.2])
        est = np.column_stack([truth[:, 0] + offsets, truth[:, 1] - offsets])
        field = LocalMixingField(pts, est)
        assert mise_mixing(field, sc) == pytest.approx(np.mean(offsets**2), abs=1e-12)

    def test_permutation_applied(self):
        sc = study1_scenario(2, 10, 5)
        pts = np.array([[0.5, 0.5], [-0.5, -0.5]])
        truth = true_mixing_field(sc, pts)
        field = LocalMixingField(pts, truth[:, ::-1])  # columns swapped
        assert mise_mixing(field, sc, permutation=(1, 0)) == pytest.approx(0.0, abs=1e-14)


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_perfect_reversal(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_hand_counted(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_single_class_raises(self):
        with pytest.raises(SingleClass):
            auc([0.1, 0.2], [1, 1])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_pair_counting_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(10, 200)
        scores = np.round(rng.uniform(size=n), 2)  # coarse grid forces ties
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert auc(scores, labels) == auc_pair_counting(scores, labels)


class TestIou:
    def test_identical_masks(self):
        assert iou([1, 1, 0], [1, 1, 0]) == 1.0

    def test_disjoint_masks(self):
        assert iou([1, 0, 0], [0, 1, 1]) == 0.0

    def test_hand_counted(self):
        assert iou([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(1 / 3)

    def test_both_empty(self):
        assert iou([0, 0], [0, 0]) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30))
    def test_symmetric(self, pairs):
        a = [p[0] for p in pairs]
        b = [p[1] for p in pairs]
        assert iou(a, b) == iou(b, a)

    def test_flip_matching_bit_never_improves(self):
        rng = np.random.default_rng(2)
        pred = rng.integers(0, 2, size=25).astype(bool)
        truth = rng.integers(0, 2, size=25).astype(bool)
        base = iou(pred, truth)
        for i in np.nonzero(pred == truth)[0]:
            flipped = pred.copy()
            flipped[i] = ~flipped[i]
            assert iou(flipped, truth) <= base + 1e-15


class TestAri:
    def test_identical(self):
        assert ari([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0

    def test_label_permutation(self):
        assert ari([1, 1, 2, 2], [2, 2, 1, 1]) == 1.0

    def test_hand_case_matches_oracle(self):
        a = [1, 1, 2, 2]
        b = [1, 2, 1, 2]
        assert ari(a, b) == pytest.approx(ari_pair_counting(a, b), abs=1e-12)

    def test_single_cluster_degenerate(self):
        assert ari([1, 1, 1], [2, 2, 2]) == 1.0

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_pair_counting_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(8, 60)
        a = rng.integers(0, 4, size=n)
        b = rng.integers(0, 3, size=n)
        assert ari(a, b) == pytest.approx(ari_pair_counting(a, b), abs=1e-12)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 4, size=40)
        b = rng.integers(0, 3, size=40)
        base = ari(a, b)
        for _ in range(20):
            perm_a = rng.permutation(5)
            perm_b = rng.permutation(5)
            assert ari(perm_a[a], perm_b[b]) == pytest.approx(base, abs=1e-12)


class TestIntegrateToBinary:
    def test_two_pure_clusters(self):
        post = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
        reference = np.array([1, 1, 0, 0])
        scores, mapping = integrate_to_binary(post, reference)
        assert np.array_equal(mapping, [1, 0])
        assert np.array_equal(scores, post[:, 0])

    def test_four_clusters_two_positive(self):
        rng = np.random.default_rng(4)
        hard = np.repeat([0, 1, 2, 3], 10)
        post = np.full((40, 4), 0.05)
        post[np.arange(40), hard] = 0.85
        reference = np.isin(hard, [0, 2]).astype(int)
        scores, mapping = integrate_to_binary(post, reference)
        assert np.array_equal(mapping, [1, 0, 1, 0])
        assert np.allclose(scores, post[:, 0] + post[:, 2])

    def test_single_class_reference(self):
        with pytest.raises(SingleClass):
            integrate_to_binary(np.array([[0.5, 0.5]] * 4), np.ones(4))

    def test_integrated_score_beats_single_columns(self):
        sc = study1_scenario(2, 500, 6)
        data = generate(sc)
        mg = em_fit_marginal(data, kmeans_init(data, 2, seed=0), FitConfig())
        from sgmm.density import log_density_matrix
        from sgmm.density import logsumexp_rows

        weighted = log_density_matrix(data.features, mg.params.components) + np.log(
            mg.params.mixing
        )
        post = np.exp(weighted - logsumexp_rows(weighted)[:, None])
        reference = (data.labels == 1).astype(int)
        scores, _ = integrate_to_binary(post, reference)
        best_single = max(auc(post[:, 0], reference), auc(post[:, 1], reference))
        assert auc(scores, reference) >= best_single - 1e-12
