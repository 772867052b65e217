"""Interventional Shapley values for tree ensembles, computed leaf by leaf.

For one instance x, one background row b and one leaf with box R, the path
features split into three groups: satisfied by x only (set A, size a),
satisfied by b only (set B, size c), satisfied by both. The leaf is reachable
from a hybrid of x and b iff every path feature is satisfied by at least one
of them, and then it is reached exactly when the coalition contains all of A
and none of B. The Shapley value of that indicator game is
    +(a-1)! c! / (a+c)!   for each feature in A
    -a! (c-1)! / (a+c)!   for each feature in B
and zero for everything else. Summing leaf value times that weight over
leaves and trees and averaging over background rows gives exact
interventional values in time linear in the number of leaves.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from ..models import TrainedModel
from .base import (
    MARGIN, PROBABILITY, Attribution, ExplainerError, ScoreFunction, as_rows, check_background, default_mode,
)

TREE_EXPLAINABLE = ("DT", "RF", "ET", "XGB", "AB")


def additive_components(model: TrainedModel, mode: str | None = None):
    """(tree, leaf outputs n_nodes x n_classes) pairs whose sum is the explained score."""
    mode = mode or default_mode(model)
    kind = model.kind
    if kind not in TREE_EXPLAINABLE:
        raise ExplainerError(f"tree attribution needs a tree model, got {kind}")
    K = model.n_classes
    if kind in ("DT", "RF", "ET"):
        if mode != PROBABILITY:
            raise ExplainerError(f"{kind} is explained in probability space")
        return [(t, w * t.value) for t, w in zip(model.trees, model.tree_weights)]
    if mode != MARGIN:
        raise ExplainerError(f"{kind} probabilities are not additive over trees; use margin mode "
                             "or a model-agnostic method")
    if kind == "XGB":
        out = []
        for i, t in enumerate(model.trees):
            v = np.zeros((t.n_nodes, K))
            v[:, i % K] = t.value[:, 0]
            out.append((t, v))
        return out
    return [(t, w * t.value) for t, w in zip(model.trees, model.tree_weights)]


def _weight_tables(depth: int):
    """WA[a, c] and WB[a, c] for a, c up to ``depth``."""
    n = depth + 1
    WA = np.zeros((n, n))
    WB = np.zeros((n, n))
    for a in range(n):
        for c in range(n):
            if a + c == 0:
                continue
            if a >= 1:
                WA[a, c] = factorial(a - 1) * factorial(c) / factorial(a + c)
            if c >= 1:
                WB[a, c] = factorial(a) * factorial(c - 1) / factorial(a + c)
    return WA, WB


def tree_shap_all(model: TrainedModel, X, background, mode: str | None = None):
    """Attributions for every class at once.

    Returns (phi n x d x K, base K, scores n x K) where scores are the explained
    score of each row, so phi.sum(1) + base == scores up to rounding.
    """
    X = as_rows(X)
    n, d = X.shape
    if d != model.n_features:
        raise ExplainerError(f"model expects {model.n_features} features, got {d}")
    B = check_background(background, d)
    m = len(B)
    components = additive_components(model, mode)
    K = model.n_classes
    max_depth = max((t.depth() for t, _ in components), default=0)
    WA, WB = _weight_tables(max_depth)
    phi = np.zeros((n, d, K))
    base = np.zeros(K)
    scores = np.zeros((n, K))
    for tree, values in components:
        base += values[tree.apply(B)].mean(axis=0)
        scores += values[tree.apply(X)]
        for leaf, box in tree.leaf_paths():
            v = values[leaf]
            if not np.any(v):
                continue
            feats = list(box)
            if not feats:
                continue  # single-leaf tree, constant output
            lo = np.array([box[f][0] for f in feats])
            hi = np.array([box[f][1] for f in feats])
            Xin = ((X[:, feats] > lo) & (X[:, feats] <= hi)).astype(float)  # n x p
            Bin = ((B[:, feats] > lo) & (B[:, feats] <= hi)).astype(float)  # m x p
            a = (Xin @ (1 - Bin).T).astype(int)  # x-only count per pair
            c = ((1 - Xin) @ Bin.T).astype(int)  # b-only count per pair
            dead = ((1 - Xin) @ (1 - Bin).T) > 0
            wa = np.where(dead, 0.0, WA[a, c])
            wb = np.where(dead, 0.0, WB[a, c])
            # feature f in A for pair (i, j) iff Xin[i,f] and not Bin[j,f]
            gain = Xin * (wa @ (1 - Bin)) - (1 - Xin) * (wb @ Bin)  # n x p
            phi[:, feats, :] += gain[:, :, None] * (v / m)[None, None, :]  # feats are distinct
    return phi, base, scores


def tree_shap(model: TrainedModel, X, label, background, mode: str | None = None) -> list[Attribution]:
    """One :class:`Attribution` per row of ``X`` for class ``label``."""
    f = ScoreFunction.for_class(model, label, mode)
    phi, base, scores = tree_shap_all(model, X, background, f.mode)
    X = as_rows(X)
    c = f.class_index
    names = tuple(model.feature_names)
    return [Attribution(float(base[c]), phi[i, :, c].copy(), X[i].copy(), float(scores[i, c]), f.label, names,
                        "tree") for i in range(len(X))]
