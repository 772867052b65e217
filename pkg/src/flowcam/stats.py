"""Pearson correlation, binned mutual information and PCA over active features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import FeatureMatrix

DEFAULT_MI_BINS = 20


@dataclass(frozen=True)
class CorrelationMatrix:
    values: np.ndarray
    names: tuple[str, ...]


@dataclass(frozen=True)
class MIReport:
    scores: np.ndarray  # nats, one per active feature
    names: tuple[str, ...]

    @property
    def ranking(self) -> list[int]:
        """Feature positions by decreasing MI; ties keep the lower position first."""
        return sorted(range(len(self.scores)), key=lambda i: (-self.scores[i], i))

    def as_dict(self) -> dict[str, float]:
        return {self.names[i]: float(self.scores[i]) for i in self.ranking}


@dataclass(frozen=True)
class PCAProjection:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance: np.ndarray  # eigenvalues of the kept components
    explained_ratio: np.ndarray
    dropped_variance: float
    names: tuple[str, ...]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def _require_rows(m: FeatureMatrix, n: int = 2) -> None:
    if len(m) < n:
        raise ValueError(f"need at least {n} rows, got {len(m)}")


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """r between two columns; 0 when either column is constant."""
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.sqrt((xc @ xc) * (yc @ yc))
    if den == 0:
        return 0.0
    return float(np.clip((xc @ yc) / den, -1.0, 1.0))


def pearson_matrix(m: FeatureMatrix) -> CorrelationMatrix:
    _require_rows(m)
    X = m.X
    Xc = X - X.mean(axis=0)
    norms = np.sqrt((Xc * Xc).sum(axis=0))
    ok = norms > 0
    Z = np.zeros_like(Xc)
    Z[:, ok] = Xc[:, ok] / norms[ok]
    r = np.clip(Z.T @ Z, -1.0, 1.0)
    r = (r + r.T) / 2
    np.fill_diagonal(r, np.where(ok, 1.0, 0.0))
    return CorrelationMatrix(r, tuple(m.active_names))


def correlated_pairs(c: CorrelationMatrix, threshold: float = 0.9,
                     mi: Sequence[float] | None = None) -> tuple[list[tuple[str, str, float]], set[str]]:
    """Pairs with |r| > threshold and the features to drop.

    Within each connected group of correlated features the one with the highest
    MI survives (lowest position on ties, or always when ``mi`` is None).
    """
    d = len(c.names)
    pairs = []
    parent = list(range(d))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(d):
        for j in range(i + 1, d):
            r = float(c.values[i, j])
            if abs(r) > threshold:
                pairs.append((c.names[i], c.names[j], r))
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(d):
        groups.setdefault(find(i), []).append(i)
    score = (lambda i: 0.0) if mi is None else (lambda i: float(mi[i]))
    drop = set()
    for members in groups.values():
        if len(members) < 2:
            continue
        keep = min(members, key=lambda i: (-score(i), i))
        drop.update(c.names[i] for i in members if i != keep)
    return pairs, drop


def discretize(x: np.ndarray, bins: int = DEFAULT_MI_BINS) -> np.ndarray:
    """Equal-frequency bin codes; integer features with few values keep them.

    Codes depend only on the ordering of values, so strictly increasing
    transforms of ``x`` give identical codes. Tied values share a bin.
    """
    uniq, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    if len(uniq) <= bins and np.all(uniq == np.round(uniq)):
        return inverse
    first_rank = np.concatenate([[0], np.cumsum(counts)[:-1]])
    codes = np.minimum(first_rank * bins // len(x), bins - 1)
    return codes[inverse]


def plugin_mi(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information (nats) of two integer-coded sequences."""
    n = len(a)
    if n == 0:
        return 0.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    joint /= n
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(max((joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])).sum(), 0.0))


def mutual_information(m: FeatureMatrix, labels: Sequence[str] | None = None,
                       bins: int = DEFAULT_MI_BINS) -> MIReport:
    labels = m.labels if labels is None else list(labels)
    if labels is None:
        raise ValueError("mutual information needs labels")
    names = tuple(m.active_names)
    X = m.X
    if len(set(labels)) < 2:
        return MIReport(np.zeros(X.shape[1]), names)
    y = np.asarray(labels)
    scores = np.array([plugin_mi(discretize(X[:, j], bins), y) for j in range(X.shape[1])])
    return MIReport(scores, names)


def pca_fit(m: FeatureMatrix, variance: float) -> PCAProjection:
    if not 0 < variance <= 1:
        raise ValueError("variance must lie in (0, 1]")
    _require_rows(m)
    X = m.X
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    cov = Z.T @ Z / (len(X) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(evals.max(initial=0.0), 0.0) * len(evals) * np.finfo(float).eps
    keep = evals > tol
    evals, evecs = evals[keep], evecs[:, keep]
    if len(evals) == 0:
        raise ValueError("all features are constant")
    total = evals.sum()
    ratios = evals / total
    cum = np.cumsum(ratios)
    k = int(np.searchsorted(cum, variance - 1e-12) + 1)
    k = min(k, len(evals))
    # fix eigenvector signs so the largest loading is positive
    comps = evecs[:, :k].T.copy()
    flip = comps[np.arange(k), np.abs(comps).argmax(axis=1)] < 0
    comps[flip] *= -1
    return PCAProjection(mean, scale, comps, evals[:k], ratios[:k], float(evals[k:].sum()),
                         tuple(m.active_names))


def pca_apply(p: PCAProjection, m: FeatureMatrix) -> FeatureMatrix:
    X = m.X
    if X.shape[1] != len(p.mean):
        raise ValueError(f"expected {len(p.mean)} active features, got {X.shape[1]}")
    scores = ((X - p.mean) / p.scale) @ p.components.T
    names = tuple(f"PC{i + 1}" for i in range(p.n_components))
    return FeatureMatrix(scores, labels=None if m.labels is None else list(m.labels), names=names)


def pca_reconstruct(p: PCAProjection, projected: np.ndarray) -> np.ndarray:
    """Back-project component scores into the original feature units."""
    return (projected @ p.components) * p.scale + p.mean
