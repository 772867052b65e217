"""Brute-force Shapley values over every feature coalition."""

from __future__ import annotations

from math import factorial

import numpy as np

from .base import Attribution, ExplainerError, as_rows, check_background, label_of, names_of

MAX_EXACT_FEATURES = 15


def coalition_masks(d: int) -> np.ndarray:
    """2^d x d boolean matrix; row s has feature j on iff bit j of s is set."""
    s = np.arange(2 ** d)[:, None]
    return ((s >> np.arange(d)) & 1).astype(bool)


def coalition_values(f, x: np.ndarray, B: np.ndarray, masks: np.ndarray, chunk_rows: int = 200_000) -> np.ndarray:
    """v(S) = mean over background rows b of f(x on S, b elsewhere), one per mask row."""
    m, d = B.shape
    per = max(1, chunk_rows // m)
    out = np.empty(len(masks))
    for s in range(0, len(masks), per):
        mk = masks[s:s + per]
        rows = np.where(mk[:, None, :], x[None, None, :], B[None, :, :]).reshape(-1, d)
        out[s:s + per] = np.asarray(f(rows), dtype=float).reshape(len(mk), m).mean(axis=1)
    return out


def shapley_from_values(v: np.ndarray, d: int) -> np.ndarray:
    """phi_i = sum over S without i of |S|!(d-|S|-1)!/d! * (v(S+i) - v(S))."""
    idx = np.arange(2 ** d)
    sizes = np.array([bin(i).count("1") for i in idx]) if d <= 16 else None
    weights = np.array([factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)])
    phi = np.zeros(d)
    for i in range(d):
        bit = 1 << i
        without = idx[(idx & bit) == 0]
        phi[i] = np.sum(weights[sizes[without]] * (v[without | bit] - v[without]))
    return phi


def exact_shapley(f, x, background, max_features: int = MAX_EXACT_FEATURES) -> Attribution:
    """Exact interventional Shapley values of the scalar score ``f`` at ``x``."""
    x = as_rows(x)[0]
    d = len(x)
    if d > max_features:
        raise ExplainerError(f"{d} features is too many for exact enumeration (limit {max_features}); "
                             "use the tree or kernel method")
    B = check_background(background, d)
    v = coalition_values(f, x, B, coalition_masks(d))
    phi = shapley_from_values(v, d)
    return Attribution(float(v[0]), phi, x.copy(), float(v[-1]), label_of(f), names_of(f, d), "exact")
