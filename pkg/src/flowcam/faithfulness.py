"""How stable and how sufficient an explainer's attributions are.

An explainer here is any callable mapping an n x d matrix to n x d attributions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import spearmanr

Explainer = Callable[[np.ndarray], np.ndarray]
MIN_ROWS = 10


class FaithfulnessError(ValueError):
    pass


def rank_agreement(a, b) -> float:
    """Spearman correlation; equal series give 1, a constant series against a varying one gives 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        return 1.0
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    return float(spearmanr(a, b).statistic)


@dataclass(frozen=True)
class FaithfulnessReport:
    overall_consistency: float
    per_feature_consistency: dict[str, float]
    sufficiency: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _noisy(X: np.ndarray, noise_frac: float, rng: np.random.Generator) -> np.ndarray:
    return X + rng.normal(size=X.shape) * (noise_frac * X.std(axis=0))


def consistency(X, explainer: Explainer, noise_frac: float = 0.05, runs: int = 5, seed: int = 0,
                names=None) -> tuple[float, dict[str, float]]:
    """Agreement of attributions between ``X`` and Gaussian-perturbed copies of it.

    Overall: Spearman between mean-|phi| importance vectors, averaged over runs.
    Per feature: Spearman between that feature's attribution series, averaged over runs.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    if len(X) < MIN_ROWS:
        raise FaithfulnessError(f"consistency needs at least {MIN_ROWS} rows, got {len(X)}")
    if runs < 1:
        raise FaithfulnessError("runs must be positive")
    d = X.shape[1]
    names = list(names) if names is not None else [f"x{j}" for j in range(d)]
    ref = np.asarray(explainer(X))
    ref_imp = np.abs(ref).mean(axis=0)
    overall = []
    per = np.zeros(d)
    for r in range(runs):
        rng = np.random.default_rng([seed, r])
        phi = np.asarray(explainer(_noisy(X, noise_frac, rng)))
        overall.append(rank_agreement(ref_imp, np.abs(phi).mean(axis=0)))
        per += [rank_agreement(ref[:, j], phi[:, j]) for j in range(d)]
    return float(np.mean(overall)), {n: float(v / runs) for n, v in zip(names, per)}


def top_k_mask(phi: np.ndarray, k: int) -> np.ndarray:
    """Boolean n x d mask of each row's k largest |phi| (lower index wins ties)."""
    order = np.argsort(-np.abs(phi), axis=1, kind="stable")[:, :k]
    mask = np.zeros(phi.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def sufficiency(predict: Callable[[np.ndarray], list], X, explainer: Explainer, k: int = 10,
                fill=None, phi=None) -> float:
    """Fraction of rows whose predicted label survives mean-imputing all but their top-k features.

    ``fill`` is the per-feature imputation value (the training mean); ``phi``
    may be passed in to reuse attributions already computed for ``X``.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    d = X.shape[1]
    if not 1 <= k <= d:
        raise FaithfulnessError(f"k={k} must lie in 1..{d}")
    if len(X) == 0:
        return 1.0
    fill = X.mean(axis=0) if fill is None else np.asarray(fill, dtype=float)
    phi = np.asarray(explainer(X)) if phi is None else phi
    masked = np.where(top_k_mask(phi, k), X, fill[None, :])
    before = np.asarray(predict(X))
    after = np.asarray(predict(masked))
    return float(np.mean(before == after))


def faithfulness_report(model, X, explainer: Explainer, k: int = 10, noise_frac: float = 0.05, runs: int = 5,
                        seed: int = 0, fill=None) -> FaithfulnessReport:
    X = np.asarray(getattr(X, "X", X), dtype=float)
    names = list(model.feature_names)
    overall, per = consistency(X, explainer, noise_frac, runs, seed, names)
    k = min(k, X.shape[1])
    suff = sufficiency(model.predict, X, explainer, k, fill)
    config = {"noise_frac": noise_frac, "runs": runs, "k": k, "seed": seed, "rows": int(len(X))}
    return FaithfulnessReport(overall, per, suff, config)
