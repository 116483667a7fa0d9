"""Random forest: bagged CART trees with per-node feature subsampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import AD, CN, EdgeId, FeatureVector, canonical_edges
from .tree import (
    DecisionTree,
    ImportanceRanking,
    TreeParams,
    _as_matrix,
    _fit_arrays,
    predict_tree,
    tree_atom_count,
    tree_from_obj,
    tree_importance,
    tree_to_obj,
)


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 8
    min_samples_split: int = 2
    max_features: str | int | None = "sqrt"  # "sqrt", explicit int, or None for all


@dataclass
class Forest:
    trees: list[DecisionTree]
    params: ForestParams
    seed: int

    def __post_init__(self):
        if len(self.trees) != self.params.n_estimators:
            raise ValueError("forest must hold exactly n_estimators trees")


def _n_features_per_split(max_features, n_features: int) -> int | None:
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, math.floor(math.sqrt(n_features)))
    m = int(max_features)
    if not (1 <= m <= n_features):
        raise ValueError(f"max_features {m} out of range for {n_features} features")
    return m


def fit_forest(
    samples: Sequence[FeatureVector],
    params: ForestParams | None = None,
    seed: int = 0,
    bootstrap: bool = True,
) -> Forest:
    """Fit n_estimators trees, each on a size-n with-replacement bootstrap.

    Tree t uses sub-seed (seed, t); each node draws its feature subset from
    sub-seed (seed, t, node_id) with node ids assigned in preorder, so the
    result is a pure function of (samples, params, seed). The bootstrap flag
    exists for reduction-to-CART tests only.
    """
    params = params or ForestParams()
    X, is_ad = _as_matrix(samples)
    if X.shape[0] < 2:
        raise ValueError("fit_forest needs at least 2 samples")
    feature_order = samples[0].edges or tuple(canonical_edges()[: X.shape[1]])
    if len(feature_order) != X.shape[1]:
        raise ValueError("feature_order length does not match feature count")
    m_features = _n_features_per_split(params.max_features, X.shape[1])
    tree_params = TreeParams(params.max_depth, params.min_samples_split)
    base = seed % 2**32

    trees = []
    for t in range(params.n_estimators):
        rng = np.random.default_rng([base, t])
        if bootstrap:
            idx = rng.integers(0, X.shape[0], size=X.shape[0])
        else:
            idx = np.arange(X.shape[0])
        sampler = None
        if m_features is not None:
            def sampler(node_id, nf, _t=t):
                node_rng = np.random.default_rng([base, _t, node_id])
                return np.sort(node_rng.choice(nf, size=m_features, replace=False))
        trees.append(_fit_arrays(X[idx], is_ad[idx], tree_params, tuple(feature_order), sampler))
    return Forest(trees, params, seed)


def predict_forest(forest: Forest, x) -> str:
    """Hard majority vote over the trees; ties go to CN."""
    ad_votes = sum(predict_tree(t, x) == AD for t in forest.trees)
    return AD if ad_votes * 2 > len(forest.trees) else CN


def forest_importance(forest: Forest) -> ImportanceRanking:
    """Mean of per-tree normalized importances, renormalized to sum 1."""
    if not forest.trees:
        raise ValueError("empty forest")
    acc: dict[EdgeId, float] = {}
    for t in forest.trees:
        for e, v in tree_importance(t).scores.items():
            acc[e] = acc.get(e, 0.0) + v
    scores = {e: v / len(forest.trees) for e, v in acc.items()}
    total = sum(scores.values())
    if total > 0:
        scores = {e: v / total for e, v in scores.items()}
    return ImportanceRanking(scores, source="rf")


def forest_atom_count(forest: Forest) -> int:
    if not forest.trees:
        raise ValueError("empty forest")
    return sum(tree_atom_count(t) for t in forest.trees)


def forest_to_json(forest: Forest) -> str:
    obj = {
        "params": {
            "n_estimators": forest.params.n_estimators,
            "max_depth": forest.params.max_depth,
            "min_samples_split": forest.params.min_samples_split,
            "max_features": forest.params.max_features,
        },
        "seed": forest.seed,
        "trees": [tree_to_obj(t) for t in forest.trees],
    }
    return json.dumps(obj)


def forest_from_json(text: str) -> Forest:
    obj = json.loads(text)
    params = ForestParams(**obj["params"])
    return Forest([tree_from_obj(t) for t in obj["trees"]], params, obj["seed"])
