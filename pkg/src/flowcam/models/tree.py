"""Array-backed binary trees and their growers (Gini CART, extra-random, second-order boosting)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    """Nodes in preorder; ``feature == LEAF`` marks a leaf. Samples go left when x <= threshold."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # n_nodes x n_outputs

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(len(X), dtype=np.int64)
        todo = np.flatnonzero(self.feature[node] != LEAF)
        while len(todo):
            n = node[todo]
            go_left = X[todo, self.feature[n]] <= self.threshold[n]
            node[todo] = np.where(go_left, self.left[n], self.right[n])
            todo = todo[self.feature[node[todo]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max(initial=0))

    def leaf_paths(self):
        """Yield (leaf id, {feature: (low, high)}) with x in (low, high] on the path."""
        stack = [(0, {})]
        while stack:
            node, box = stack.pop()
            f = self.feature[node]
            if f == LEAF:
                yield node, box
                continue
            t = self.threshold[node]
            lo, hi = box.get(f, (-np.inf, np.inf))
            left = dict(box)
            left[f] = (lo, min(hi, t))
            right = dict(box)
            right[f] = (max(lo, t), hi)
            stack.append((self.right[node], right))
            stack.append((self.left[node], left))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float).reshape(len(d["feature"]), -1),
        )


class _Builder:
    def __init__(self, n_out: int):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []
        self.n_out = n_out

    def add(self, value) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(np.asarray(value, dtype=float).reshape(self.n_out))
        return len(self.feature) - 1

    def split(self, node: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(np.array(self.feature, dtype=np.int64), np.array(self.threshold, dtype=float),
                    np.array(self.left, dtype=np.int64), np.array(self.right, dtype=np.int64),
                    np.vstack(self.value) if self.value else np.zeros((0, self.n_out)))


def _midpoints(xs: np.ndarray) -> np.ndarray:
    """Midpoint between consecutive sorted values, never rounding up onto the right value."""
    mid = (xs[:-1] + xs[1:]) / 2
    return np.where(mid < xs[1:], mid, xs[:-1])


def _candidate_features(Xn: np.ndarray, max_features: int | None, rng) -> np.ndarray:
    """Features examined at a node, ascending.

    With subsampling, features are visited in random order and constant ones do
    not count towards ``max_features``.
    """
    d = Xn.shape[1]
    varying = Xn.min(axis=0) < Xn.max(axis=0)
    if max_features is None or max_features >= d:
        return np.flatnonzero(varying)
    order = rng.permutation(d)
    chosen = order[varying[order]][:max_features]
    return np.sort(chosen)


def _sorted_block(Xn: np.ndarray, feats: np.ndarray):
    block = Xn[:, feats]
    order = np.argsort(block, axis=0, kind="stable")
    xs = np.take_along_axis(block, order, axis=0)
    return order, xs


def _gini_best(Xn, W, feats):
    """Best (score, feature, threshold) maximizing sum over children of |w_k|^2 / W."""
    order, xs = _sorted_block(Xn, feats)
    cum = np.cumsum(W[order], axis=0)[:-1]  # n-1 x c x K
    total = W.sum(axis=0)
    L = cum
    R = total - cum
    wl = L.sum(axis=-1)
    wr = R.sum(axis=-1)
    valid = (xs[:-1] < xs[1:]) & (wl > 0) & (wr > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (L * L).sum(-1) / wl + (R * R).sum(-1) / wr
    score = np.where(valid, score, -np.inf).T  # c x n-1, feature-major
    flat = int(np.argmax(score))
    ci, pos = divmod(flat, score.shape[1])
    if not np.isfinite(score[ci, pos]):
        return None
    thr = _midpoints(xs[:, ci])[pos]
    return float(score[ci, pos]), int(feats[ci]), float(thr)


def _gini_random(Xn, W, feats, rng):
    """One uniform threshold per candidate feature; best by the same Gini score."""
    block = Xn[:, feats]
    lo, hi = block.min(axis=0), block.max(axis=0)
    t = rng.uniform(lo, hi)
    t = np.where(t >= hi, lo, t)
    left = (block <= t).astype(float)
    L = left.T @ W  # c x K
    R = W.sum(axis=0) - L
    wl, wr = L.sum(axis=1), R.sum(axis=1)
    valid = (wl > 0) & (wr > 0)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (L * L).sum(1) / wl + (R * R).sum(1) / wr
    score = np.where(valid, score, -np.inf)
    ci = int(np.argmax(score))
    return float(score[ci]), int(feats[ci]), float(t[ci])


def grow_gini_tree(X: np.ndarray, y: np.ndarray, n_classes: int, *, max_depth: int,
                   sample_weight: np.ndarray | None = None, max_features: int | None = None,
                   random_thresholds: bool = False, rng: np.random.Generator | None = None,
                   min_samples_split: int = 2) -> Tree:
    """CART classification tree; leaves hold weighted class frequencies."""
    n, _ = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    W = np.zeros((n, n_classes))
    W[np.arange(n), y] = w
    if rng is None:
        rng = np.random.default_rng(0)
    b = _Builder(n_classes)

    def dist(Wn):
        tot = Wn.sum(axis=0)
        s = tot.sum()
        return tot / s if s > 0 else np.full(n_classes, 1.0 / n_classes)

    stack = [(b.add(dist(W)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        Wn = W[idx]
        counts = (Wn > 0).any(axis=0).sum()
        if depth >= max_depth or len(idx) < min_samples_split or counts <= 1:
            continue
        Xn = X[idx]
        feats = _candidate_features(Xn, max_features, rng)
        if len(feats) == 0:
            continue
        found = _gini_random(Xn, Wn, feats, rng) if random_thresholds else _gini_best(Xn, Wn, feats)
        if found is None:
            continue
        _, f, t = found
        go_left = Xn[:, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        left = b.add(dist(W[li]))
        right = b.add(dist(W[ri]))
        b.split(node, f, t, left, right)
        stack.append((right, ri, depth + 1))
        stack.append((left, li, depth + 1))
    return _renumber(b.build())


def grow_boosted_tree(X: np.ndarray, grad: np.ndarray, hess: np.ndarray, *, max_depth: int,
                      reg_lambda: float = 1.0, gamma: float = 0.0, min_child_weight: float = 1.0,
                      learning_rate: float = 0.3) -> Tree:
    """Regression tree on gradient statistics with leaf weight -lr * G / (H + lambda)."""
    n, d = X.shape
    b = _Builder(1)

    def leaf(G, H):
        return -learning_rate * G / (H + reg_lambda)

    stack = [(b.add(leaf(grad.sum(), hess.sum())), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2:
            continue
        Xn = X[idx]
        feats = _candidate_features(Xn, None, None)
        if len(feats) == 0:
            continue
        g, h = grad[idx], hess[idx]
        G, H = g.sum(), h.sum()
        order, xs = _sorted_block(Xn, feats)
        GL = np.cumsum(g[order], axis=0)[:-1]
        HL = np.cumsum(h[order], axis=0)[:-1]
        GR, HR = G - GL, H - HL
        gain = 0.5 * (GL ** 2 / (HL + reg_lambda) + GR ** 2 / (HR + reg_lambda)
                      - G ** 2 / (H + reg_lambda)) - gamma
        valid = (xs[:-1] < xs[1:]) & (HL >= min_child_weight) & (HR >= min_child_weight)
        gain = np.where(valid, gain, -np.inf).T
        flat = int(np.argmax(gain))
        ci, pos = divmod(flat, gain.shape[1])
        if not gain[ci, pos] > 1e-12:
            continue
        f = int(feats[ci])
        t = float(_midpoints(xs[:, ci])[pos])
        go_left = Xn[:, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        left = b.add(leaf(grad[li].sum(), hess[li].sum()))
        right = b.add(leaf(grad[ri].sum(), hess[ri].sum()))
        b.split(node, f, t, left, right)
        stack.append((right, ri, depth + 1))
        stack.append((left, li, depth + 1))
    return _renumber(b.build())


def _renumber(tree: Tree) -> Tree:
    """Reorder nodes into preorder so saved files do not depend on growth order."""
    order = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if tree.feature[i] != LEAF:
            stack.append(tree.right[i])
            stack.append(tree.left[i])
    remap = np.empty(tree.n_nodes, dtype=np.int64)
    remap[order] = np.arange(len(order))
    order = np.array(order)
    left = np.where(tree.left[order] == LEAF, LEAF, remap[tree.left[order]])
    right = np.where(tree.right[order] == LEAF, LEAF, remap[tree.right[order]])
    return Tree(tree.feature[order], tree.threshold[order], left, right, tree.value[order])
