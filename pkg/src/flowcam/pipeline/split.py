"""Seeded stratified train/test partition."""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..features import FeatureMatrix


class SplitError(ValueError):
    pass


def split_indices(labels, ratio: float = 0.8, seed: int = 0, stratified: bool = True):
    """(train, test) row indices, each in ascending order.

    Every class keeps floor(ratio * n + 1/2) rows for training, so per-class
    proportions are met to within one row.
    """
    if not 0 < ratio <= 1:
        raise SplitError(f"split ratio must lie in (0, 1], got {ratio}")
    labels = list(labels)
    rng = np.random.default_rng(seed)
    if ratio == 1:
        warnings.warn("split ratio 1.0 leaves the test set empty", stacklevel=2)
    if not stratified:
        perm = rng.permutation(len(labels))
        cut = math.floor(ratio * len(labels) + 0.5)
        return np.sort(perm[:cut]), np.sort(perm[cut:])
    classes = sorted(set(labels))
    arr = np.asarray(labels, dtype=object)
    train, test = [], []
    for c in classes:
        idx = np.flatnonzero(arr == c)
        if len(idx) < 2:
            raise SplitError(f"class {c!r} has {len(idx)} row(s); stratified split needs at least 2")
        idx = rng.permutation(idx)
        cut = math.floor(ratio * len(idx) + 0.5)
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(m: FeatureMatrix, ratio: float = 0.8, seed: int = 0,
          stratified: bool = True) -> tuple[FeatureMatrix, FeatureMatrix]:
    if m.labels is None:
        raise SplitError("split needs a labelled matrix")
    tr, te = split_indices(m.labels, ratio, seed, stratified)
    return m.take(tr), m.take(te)
