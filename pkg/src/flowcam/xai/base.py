"""Score adapters and attribution containers shared by the explainers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..models import BOOSTED_KINDS, TrainedModel

PROBABILITY = "probability"
MARGIN = "margin"


class ExplainerError(ValueError):
    pass


def default_mode(model: TrainedModel) -> str:
    """Boosted kinds are explained in raw margin space, everything else in probability."""
    return MARGIN if model.kind in BOOSTED_KINDS else PROBABILITY


@dataclass(frozen=True)
class ScoreFunction:
    """Scalar score of one class for a batch of rows."""

    model: TrainedModel
    class_index: int
    mode: str = PROBABILITY

    @classmethod
    def for_class(cls, model: TrainedModel, label: str | int, mode: str | None = None) -> "ScoreFunction":
        idx = label if isinstance(label, (int, np.integer)) else model.classes.index(str(label))
        if not 0 <= idx < model.n_classes:
            raise ExplainerError(f"class index {idx} out of range")
        return cls(model, int(idx), mode or default_mode(model))

    @property
    def label(self) -> str:
        return self.model.classes[self.class_index]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.mode == MARGIN:
            return self.model.predict_margins(X)[:, self.class_index]
        if self.mode == PROBABILITY:
            return self.model.predict_scores(X)[:, self.class_index]
        raise ExplainerError(f"unknown score mode {self.mode!r}")


Score = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Attribution:
    base_value: float
    phi: np.ndarray
    instance: np.ndarray
    value: float  # score of the instance
    label: str | None = None
    feature_names: tuple[str, ...] | None = None
    method: str = ""

    @property
    def local_gap(self) -> float:
        """score(x) - (base + sum(phi)); zero up to rounding for exact methods."""
        return float(self.value - self.base_value - self.phi.sum())

    def ranking(self) -> list[int]:
        return sorted(range(len(self.phi)), key=lambda i: (-abs(self.phi[i]), i))

    def to_dict(self, top: int | None = None) -> dict:
        """Waterfall-ready: features ordered by |phi|, plus base and final score."""
        names = self.feature_names or tuple(f"x{i}" for i in range(len(self.phi)))
        order = self.ranking()[:top] if top else self.ranking()
        return {
            "method": self.method,
            "label": self.label,
            "base_value": float(self.base_value),
            "value": float(self.value),
            "features": [
                {"name": names[i], "value": float(self.instance[i]), "phi": float(self.phi[i])} for i in order
            ],
        }


def as_rows(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def names_of(f, d: int) -> tuple[str, ...] | None:
    if isinstance(f, ScoreFunction):
        return tuple(f.model.feature_names)
    return None


def label_of(f) -> str | None:
    return f.label if isinstance(f, ScoreFunction) else None


def check_background(background, d: int) -> np.ndarray:
    B = as_rows(getattr(background, "X", background))
    if len(B) == 0:
        raise ExplainerError("background set is empty")
    if B.shape[1] != d:
        raise ExplainerError(f"background has {B.shape[1]} features, instance has {d}")
    return B


def sample_background(X: np.ndarray, n: int = 100, seed: int = 0) -> np.ndarray:
    """Seeded subsample (without replacement) of at most ``n`` rows."""
    X = as_rows(X)
    if len(X) <= n:
        return X.copy()
    idx = np.sort(np.random.default_rng(seed).choice(len(X), size=n, replace=False))
    return X[idx]


def mean_abs(phis: np.ndarray) -> np.ndarray:
    return np.abs(phis).mean(axis=0)


def rank_features(scores: Sequence[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))
