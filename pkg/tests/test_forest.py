import numpy as np
import pytest

from connrules.cohort import AD, CN, FeatureVector, PlantedEdge, apply_mask, compute_mask, edge, generate_synthetic
from connrules.forest import (
    Forest,
    ForestParams,
    fit_forest,
    forest_atom_count,
    forest_from_json,
    forest_importance,
    forest_to_json,
    predict_forest,
)
from connrules.tree import (
    ClassCounts,
    DecisionTree,
    Internal,
    Leaf,
    TreeParams,
    fit_tree,
    predict_tree,
    tree_importance,
)


def vectors(X, labels):
    X = np.asarray(X, dtype=float)
    return [FeatureVector(row, lab, f"s{k}") for k, (row, lab) in enumerate(zip(X, labels))]


def stump(feature, threshold, left_label, right_label, n=4):
    left = Leaf(ClassCounts(0, n // 2) if left_label == CN else ClassCounts(n // 2, 0), left_label)
    right = Leaf(ClassCounts(0, n // 2) if right_label == CN else ClassCounts(n // 2, 0), right_label)
    root = Internal(feature, threshold, left, right, 0.5, n)
    return DecisionTree(root, TreeParams(), (edge(0, 1), edge(0, 2)))


def hand_forest(trees):
    return Forest(trees, ForestParams(n_estimators=len(trees)), seed=0)


class TestDeterminism:
    def test_same_seed_same_forest(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 10, size=(30, 6))
        labels = [AD if rng.random() < 0.5 else CN for _ in range(30)]
        samples = vectors(X, labels)
        params = ForestParams(n_estimators=10, max_depth=4)
        a = fit_forest(samples, params, seed=99)
        b = fit_forest(samples, params, seed=99)
        assert forest_to_json(a) == forest_to_json(b)
        probe = vectors(rng.uniform(0, 10, size=(20, 6)), [CN] * 20)
        for p in probe:
            assert predict_forest(a, p) == predict_forest(b, p)

    def test_different_seeds_differ(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 10, size=(40, 8))
        labels = [AD if rng.random() < 0.5 else CN for _ in range(40)]
        samples = vectors(X, labels)
        params = ForestParams(n_estimators=5, max_depth=4)
        assert forest_to_json(fit_forest(samples, params, 1)) != \
            forest_to_json(fit_forest(samples, params, 2))


class TestReductionToCart:
    def test_single_unrestricted_tree_equals_fit_tree(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 10, size=(25, 5))
        labels = [AD if rng.random() < 0.5 else CN for _ in range(25)]
        samples = vectors(X, labels)
        forest = fit_forest(
            samples,
            ForestParams(n_estimators=1, max_features=None),
            seed=0,
            bootstrap=False,
        )
        tree = fit_tree(samples)
        for s in samples:
            assert predict_forest(forest, s) == predict_tree(tree, s)


class TestVoting:
    def test_majority(self):
        t_ad = stump(0, 5.0, AD, AD)
        t_cn = stump(0, 5.0, CN, CN)
        forest = hand_forest([t_ad, t_ad, t_cn])
        assert predict_forest(forest, [1.0, 1.0]) == AD

    def test_tie_goes_cn(self):
        forest = hand_forest([stump(0, 5.0, AD, AD), stump(0, 5.0, CN, CN)])
        assert predict_forest(forest, [1.0, 1.0]) == CN

    def test_identical_stumps_match_single(self):
        t = stump(0, 5.0, CN, AD)
        forest = hand_forest([t] * 100)
        for x in ([2.0, 0.0], [7.0, 0.0]):
            assert predict_forest(forest, x) == predict_tree(t, x)


class TestImportance:
    def test_identical_trees_match_single(self):
        t = stump(0, 5.0, CN, AD)
        forest = hand_forest([t] * 3)
        assert forest_importance(forest).scores == tree_importance(t).scores

    def test_disjoint_single_features_average(self):
        f = hand_forest([stump(0, 5.0, CN, AD), stump(1, 5.0, CN, AD)])
        scores = forest_importance(f).scores
        assert scores[edge(0, 1)] == pytest.approx(0.5)
        assert scores[edge(0, 2)] == pytest.approx(0.5)

    def test_unused_feature_zero(self):
        f = hand_forest([stump(0, 5.0, CN, AD)])
        assert forest_importance(f).scores[edge(0, 2)] == 0.0

    def test_sums_to_one(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(0, 10, size=(30, 6))
        labels = [AD if rng.random() < 0.5 else CN for _ in range(30)]
        forest = fit_forest(vectors(X, labels), ForestParams(n_estimators=7), seed=5)
        assert sum(forest_importance(forest).scores.values()) == pytest.approx(1.0, abs=1e-9)


class TestAtoms:
    def test_single_leaf_tree(self):
        leaf_tree = DecisionTree(Leaf(ClassCounts(2, 1), AD), TreeParams(), (edge(0, 1),))
        assert forest_atom_count(hand_forest([leaf_tree])) == 1

    def test_two_stumps(self):
        forest = hand_forest([stump(0, 5.0, CN, AD), stump(1, 5.0, CN, AD)])
        assert forest_atom_count(forest) == 8

    def test_empty_forest_rejected(self):
        with pytest.raises(ValueError, match="n_estimators"):
            Forest([], ForestParams(n_estimators=1), seed=0)


class TestOnSyntheticCohort:
    def test_forest_close_to_tree_on_held_out(self):
        # several separating edges, so per-node feature subsampling finds signal
        planted = [
            PlantedEdge(edge(2, 5), 2.0, "low"),
            PlantedEdge(edge(3, 9), 2.5, "high"),
            PlantedEdge(edge(10, 40), 2.0, "low"),
            PlantedEdge(edge(20, 60), 3.0, "low"),
            PlantedEdge(edge(7, 30), 2.5, "high"),
            PlantedEdge(edge(15, 55), 2.0, "low"),
        ]
        cohort = generate_synthetic(7, 60, planted, 0.0)
        train = cohort.subset([s.id for k, s in enumerate(cohort.subjects) if k % 3 != 0])
        test = cohort.subset([s.id for k, s in enumerate(cohort.subjects) if k % 3 == 0])
        mask = compute_mask(train, 0.30)
        train_vecs = apply_mask(train, mask)
        test_vecs = apply_mask(test, mask)
        tree = fit_tree(train_vecs)
        forest = fit_forest(train_vecs, ForestParams(n_estimators=50), seed=0)
        tree_acc = np.mean([predict_tree(tree, v) == v.label for v in test_vecs])
        forest_acc = np.mean([predict_forest(forest, v) == v.label for v in test_vecs])
        assert forest_acc >= tree_acc - 0.05


class TestForestJson:
    def test_round_trip(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 10, size=(20, 4))
        labels = [AD if rng.random() < 0.5 else CN for _ in range(20)]
        forest = fit_forest(vectors(X, labels), ForestParams(n_estimators=3), seed=1)
        back = forest_from_json(forest_to_json(forest))
        assert forest_to_json(back) == forest_to_json(forest)
