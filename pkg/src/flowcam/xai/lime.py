"""LIME on quartile-discretised tabular features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import ExplainerError, as_rows, label_of, names_of


@dataclass(frozen=True)
class QuartileDiscretizer:
    """Per-feature quartile cut points with the training bin frequencies and ranges."""

    cuts: tuple[np.ndarray, ...]  # sorted, distinct cut points per feature
    freqs: tuple[np.ndarray, ...]
    lows: tuple[np.ndarray, ...]
    highs: tuple[np.ndarray, ...]
    constant: np.ndarray  # bool per feature

    @classmethod
    def fit(cls, X) -> "QuartileDiscretizer":
        X = as_rows(getattr(X, "X", X))
        if len(X) == 0:
            raise ExplainerError("cannot fit a discretizer on zero rows")
        cuts, freqs, lows, highs = [], [], [], []
        for col in X.T:
            q = np.unique(np.percentile(col, [25, 50, 75]))
            cuts.append(q)
            bins = np.searchsorted(q, col, side="left")
            counts = np.bincount(bins, minlength=len(q) + 1).astype(float)
            freqs.append(counts / counts.sum())
            edges = np.concatenate([[col.min()], q, [col.max()]])
            lows.append(edges[:-1])
            highs.append(edges[1:])
        constant = np.array([c.min() == c.max() for c in X.T])
        return cls(tuple(cuts), tuple(freqs), tuple(lows), tuple(highs), constant)

    @property
    def n_features(self) -> int:
        return len(self.cuts)

    def bin_of(self, j: int, values) -> np.ndarray:
        """Bin k holds cut[k-1] < v <= cut[k]."""
        return np.searchsorted(self.cuts[j], values, side="left")

    def condition(self, j: int, name: str, value: float) -> tuple[float, float, str]:
        q = self.cuts[j]
        k = int(self.bin_of(j, value))
        lo = -np.inf if k == 0 else float(q[k - 1])
        hi = np.inf if k == len(q) else float(q[k])
        if k == 0:
            text = f"{name} <= {hi:.2f}"
        elif k == len(q):
            text = f"{name} > {lo:.2f}"
        else:
            text = f"{lo:.2f} < {name} <= {hi:.2f}"
        return lo, hi, text

    def sample(self, x: np.ndarray, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` rows (row 0 is ``x``) and their binary same-bin indicators."""
        d = self.n_features
        rows = np.tile(x, (n, 1))
        same = np.ones((n, d), dtype=bool)
        for j in range(d):
            if self.constant[j]:
                continue
            b = rng.choice(len(self.freqs[j]), size=n - 1, p=self.freqs[j])
            u = rng.uniform(self.lows[j][b], self.highs[j][b])
            rows[1:, j] = u
            same[1:, j] = b == self.bin_of(j, x[j])
        return rows, same


@dataclass(frozen=True)
class Condition:
    feature: str
    index: int
    low: float
    high: float
    text: str
    weight: float


@dataclass(frozen=True)
class LimeExplanation:
    conditions: tuple[Condition, ...]
    intercept: float
    r2: float
    value: float  # score of the instance
    local_value: float  # surrogate prediction at the instance
    label: str | None = None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "intercept": self.intercept,
            "r2": self.r2,
            "value": self.value,
            "local_value": self.local_value,
            "conditions": [{"feature": c.feature, "condition": c.text, "weight": c.weight} for c in self.conditions],
        }


def weighted_ridge(Z: np.ndarray, y: np.ndarray, w: np.ndarray, alpha: float = 1.0):
    """Ridge with an unpenalised intercept; returns (coef, intercept, weighted R^2)."""
    sw = w / w.sum()
    zm = sw @ Z
    ym = float(sw @ y)
    Zc = Z - zm
    yc = y - ym
    G = Zc.T @ (Zc * w[:, None]) + alpha * np.eye(Z.shape[1])
    coef = np.linalg.solve(G, Zc.T @ (w * yc))
    intercept = ym - float(zm @ coef)
    resid = y - (Z @ coef + intercept)
    ss_res = float(w @ resid ** 2)
    ss_tot = float(w @ yc ** 2)
    r2 = (1.0 if ss_res == 0 else 0.0) if ss_tot == 0 else 1 - ss_res / ss_tot
    return coef, intercept, r2


def lime_explain(f, x, discretizer: QuartileDiscretizer, n_features: int = 10, n_perturbations: int = 5000,
                 seed: int = 0, feature_names=None, kernel_width: float | None = None,
                 ridge_alpha: float = 1.0) -> LimeExplanation:
    """Top ``n_features`` quartile conditions around ``x`` ranked by surrogate |weight|.

    Constant training features are never reported, so fewer than
    ``n_features`` conditions come back when few features vary.
    """
    x = as_rows(x)[0]
    d = len(x)
    if d != discretizer.n_features:
        raise ExplainerError(f"discretizer has {discretizer.n_features} features, instance has {d}")
    if n_perturbations < 2:
        raise ExplainerError("need at least two perturbations")
    names = feature_names or names_of(f, d) or tuple(f"x{i}" for i in range(d))
    rng = np.random.default_rng(seed)
    rows, same = discretizer.sample(x, n_perturbations, rng)
    y = np.asarray(f(rows), dtype=float)
    width = kernel_width if kernel_width is not None else 0.75 * np.sqrt(d)
    dist2 = (~same).sum(axis=1)
    w = np.exp(-dist2 / width ** 2)

    live = np.flatnonzero(~discretizer.constant)
    if len(live) == 0:
        return LimeExplanation((), float(y[0]), 1.0, float(y[0]), float(y[0]), label_of(f))
    coef, intercept, r2 = weighted_ridge(same[:, live].astype(float), y, w, ridge_alpha)
    order = sorted(range(len(live)), key=lambda k: (-abs(coef[k]), live[k]))[:n_features]
    conds = []
    for k in order:
        j = int(live[k])
        lo, hi, text = discretizer.condition(j, names[j], x[j])
        conds.append(Condition(names[j], j, lo, hi, text, float(coef[k])))
    local = intercept + float(coef.sum())  # the instance matches its own bin everywhere
    return LimeExplanation(tuple(conds), float(intercept), float(r2), float(y[0]), local, label_of(f))
