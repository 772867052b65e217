"""Attribution methods: exact enumeration, tree, kernel and LIME, plus batch helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import FeatureMatrix
from ..models import TrainedModel
from .base import (
    MARGIN, PROBABILITY, Attribution, ExplainerError, ScoreFunction, default_mode, rank_features,
    sample_background,
)
from .exact import MAX_EXACT_FEATURES, exact_shapley
from .kernel import kernel_shap
from .lime import Condition, LimeExplanation, QuartileDiscretizer, lime_explain
from .treeshap import TREE_EXPLAINABLE, tree_shap, tree_shap_all

METHODS = ("tree", "kernel", "exact")
PREDICTED = "predicted"


def _class_indices(model: TrainedModel, X: np.ndarray, target) -> np.ndarray:
    if target == PREDICTED:
        return np.argmax(model.predict_scores(X), axis=1)
    if isinstance(target, (str, int, np.integer)):
        idx = ScoreFunction.for_class(model, target).class_index
        return np.full(len(X), idx)
    return np.array([ScoreFunction.for_class(model, t).class_index for t in target])


def attribution_matrix(model: TrainedModel, X, background, target=PREDICTED, method: str = "tree",
                       mode: str | None = None, n_samples: int = 2048, seed: int = 0) -> np.ndarray:
    """n x d attributions; row i explains class ``target`` (or row i's predicted class)."""
    X = np.atleast_2d(np.asarray(getattr(X, "X", X), dtype=float))
    B = np.atleast_2d(np.asarray(getattr(background, "X", background), dtype=float))
    cls = _class_indices(model, X, target)
    mode = mode or default_mode(model)
    if method == "tree":
        phi, _, _ = tree_shap_all(model, X, B, mode)
        return phi[np.arange(len(X)), :, cls]
    out = np.zeros(X.shape)
    for i, (row, c) in enumerate(zip(X, cls)):
        f = ScoreFunction(model, int(c), mode)
        if method == "exact":
            out[i] = exact_shapley(f, row, B).phi
        elif method == "kernel":
            out[i] = kernel_shap(f, row, B, n_samples=n_samples, seed=seed).phi
        else:
            raise ExplainerError(f"unknown attribution method {method!r}; choose from {METHODS}")
    return out


@dataclass(frozen=True)
class Importance:
    scores: np.ndarray
    ranking: list[int]
    names: tuple[str, ...]

    def top(self, k: int = 10) -> list[tuple[str, float]]:
        return [(self.names[i], float(self.scores[i])) for i in self.ranking[:k]]


def mean_abs_attributions(model: TrainedModel, X, background, target=PREDICTED, method: str = "tree",
                          **kw) -> Importance:
    """Global importance: mean |phi| per feature over the rows of ``X`` and its ranking."""
    scores = np.abs(attribution_matrix(model, X, background, target, method, **kw)).mean(axis=0)
    return Importance(scores, rank_features(list(scores)), tuple(model.feature_names))


def class_importance(model: TrainedModel, m: FeatureMatrix, background, method: str = "tree",
                     **kw) -> dict[str, Importance]:
    """Per class: mean |phi| of that class's score over the rows labelled with it."""
    if m.labels is None:
        raise ExplainerError("class importance needs a labelled matrix")
    labels = np.asarray(m.labels)
    out = {}
    for c in model.classes:
        rows = m.X[labels == c]
        if len(rows):
            out[c] = mean_abs_attributions(model, rows, background, c, method, **kw)
    return out


def attribution_explainer(model: TrainedModel, background, target=PREDICTED, method: str = "tree", **kw):
    """Callable X -> n x d attributions, the shape the faithfulness checks consume."""
    def explain(X):
        return attribution_matrix(model, X, background, target, method, **kw)
    return explain


__all__ = [
    "MARGIN", "PROBABILITY", "PREDICTED", "METHODS", "MAX_EXACT_FEATURES", "TREE_EXPLAINABLE",
    "Attribution", "Condition", "ExplainerError", "LimeExplanation", "QuartileDiscretizer", "ScoreFunction",
    "Importance", "attribution_explainer", "attribution_matrix", "class_importance", "default_mode",
    "exact_shapley", "kernel_shap", "lime_explain", "mean_abs_attributions", "rank_features", "sample_background",
    "tree_shap", "tree_shap_all",
]
