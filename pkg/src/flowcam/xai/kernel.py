"""Kernel SHAP: weighted least squares over coalitions with the Shapley kernel."""

from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np

from .base import Attribution, ExplainerError, as_rows, check_background, label_of, names_of
from .exact import coalition_values


def shapley_kernel(d: int, s: int) -> float:
    return (d - 1) / (comb(d, s) * s * (d - s))


def _all_coalitions(d: int):
    masks, weights = [], []
    for s in range(1, d):
        w = shapley_kernel(d, s)
        for idx in combinations(range(d), s):
            z = np.zeros(d, dtype=bool)
            z[list(idx)] = True
            masks.append(z)
            weights.append(w)
    return np.array(masks), np.array(weights)


def _sampled_coalitions(d: int, budget: int, rng: np.random.Generator):
    """Enumerate whole size classes (smallest and largest first) while the budget covers them,
    then spend the rest on paired random draws from the remaining sizes."""
    half = d // 2
    sizes = list(range(1, half + 1))
    paired = {s: s != d - s for s in sizes}
    mass = np.array([(d - 1) / (s * (d - s)) * (2 if paired[s] else 1) for s in sizes])
    mass /= mass.sum()

    masks, weights = [], []
    left = budget
    remaining_mass = 1.0
    done = 0
    for k, s in enumerate(sizes):
        count = comb(d, s) * (2 if paired[s] else 1)
        share = mass[k] / remaining_mass
        if left * share < count:
            break
        w_each = mass[k] / count
        for idx in combinations(range(d), s):
            z = np.zeros(d, dtype=bool)
            z[list(idx)] = True
            masks.append(z)
            weights.append(w_each)
            if paired[s]:
                masks.append(~z)
                weights.append(w_each)
        left -= count
        remaining_mass -= mass[k]
        done = k + 1

    rest = sizes[done:]
    if rest and left > 0:
        probs = mass[done:] / mass[done:].sum()
        seen: dict[bytes, int] = {}
        sampled: list[np.ndarray] = []
        counts: list[float] = []
        draws = 0
        while left > 0:
            s = rest[rng.choice(len(rest), p=probs)]
            z = np.zeros(d, dtype=bool)
            z[rng.choice(d, size=s, replace=False)] = True
            pair = [z, ~z] if left >= 2 else [z]
            for q in pair:
                key = q.tobytes()
                if key in seen:
                    counts[seen[key]] += 1
                else:
                    seen[key] = len(sampled)
                    sampled.append(q)
                    counts.append(1.0)
                left -= 1
                draws += 1
        share = remaining_mass / draws
        masks.extend(sampled)
        weights.extend(c * share for c in counts)
    return np.array(masks).reshape(-1, d), np.array(weights)


def _solve(Z: np.ndarray, w: np.ndarray, v: np.ndarray, base: float, fx: float) -> np.ndarray:
    """Minimise sum w (v - base - Z phi)^2 subject to sum(phi) = fx - base."""
    total = fx - base
    last = Z[:, -1].astype(float)
    A = Z[:, :-1].astype(float) - last[:, None]
    y = v - base - last * total
    sw = np.sqrt(w)
    Aw = A * sw[:, None]
    if np.linalg.matrix_rank(Aw) < A.shape[1]:
        raise np.linalg.LinAlgError("singular coalition design")
    head, *_ = np.linalg.lstsq(Aw, y * sw, rcond=None)
    return np.append(head, total - head.sum())


def kernel_shap(f, x, background, n_samples: int = 2048, seed: int = 0) -> Attribution:
    """Kernel SHAP estimate of the scalar score ``f`` at ``x``.

    When ``n_samples`` covers every proper coalition the full design is used
    and the result equals exact Shapley values up to rounding.
    """
    x = as_rows(x)[0]
    d = len(x)
    if d < 2:
        raise ExplainerError("need at least two features")
    if n_samples < 2 * d + 2:
        raise ExplainerError(f"n_samples={n_samples} is below the minimum 2d+2={2 * d + 2}")
    B = check_background(background, d)
    ends = coalition_values(f, x, B, np.array([np.zeros(d, bool), np.ones(d, bool)]))
    base, fx = float(ends[0]), float(ends[1])

    if n_samples >= 2 ** d - 2:
        Z, w = _all_coalitions(d)
        phi = _solve(Z, w, coalition_values(f, x, B, Z), base, fx)
    else:
        for attempt in range(2):
            rng = np.random.default_rng([seed, attempt])
            Z, w = _sampled_coalitions(d, n_samples, rng)
            try:
                phi = _solve(Z, w, coalition_values(f, x, B, Z), base, fx)
                break
            except np.linalg.LinAlgError:
                if attempt:
                    raise ExplainerError("coalition design stayed singular after re-sampling") from None
    return Attribution(base, phi, x.copy(), fx, label_of(f), names_of(f, d), "kernel")
