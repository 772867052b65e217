"""The eight classifier kinds, training, scoring and versioned JSON persistence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from ..features import FeatureMatrix
from .tree import Tree, grow_boosted_tree, grow_gini_tree

KINDS = ("DT", "kNN", "NB", "LR", "RF", "XGB", "ET", "AB")
TREE_KINDS = ("DT", "RF", "ET", "XGB", "AB")
BOOSTED_KINDS = ("XGB", "AB")
FORMAT_VERSION = 1

DEFAULT_HYPERPARAMETERS: dict[str, dict[str, Any]] = {
    "DT": {"max_depth": 30},
    "kNN": {"k": 8},
    "NB": {"var_smoothing": 1e-9},
    "LR": {"max_iterations": 1000, "l2": 1e-4},
    "RF": {"max_depth": 30, "n_estimators": 300},
    "XGB": {"max_depth": 30, "n_estimators": 200, "learning_rate": 0.3, "reg_lambda": 1.0,
            "gamma": 0.0, "min_child_weight": 1.0},
    "ET": {"max_depth": 50, "n_estimators": 300},
    "AB": {"max_depth": 30, "n_estimators": 100, "learning_rate": 1.0},
}


class ModelError(ValueError):
    pass


class ModelFileError(ModelError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.hyperparameters) - set(DEFAULT_HYPERPARAMETERS[self.kind])
        if unknown:
            raise ModelError(f"{self.kind} does not take {sorted(unknown)}")

    @property
    def params(self) -> dict[str, Any]:
        return {**DEFAULT_HYPERPARAMETERS[self.kind], **self.hyperparameters}


def member_seed(seed: int, i: int) -> int:
    """Per-member seed derived from (seed, member index)."""
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


@dataclass
class TrainedModel:
    spec: ModelSpec
    classes: list[str]
    feature_names: list[str]
    trees: list[Tree] = field(default_factory=list)
    tree_weights: list[float] = field(default_factory=list)
    # standardization (kNN, LR)
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    # NB
    theta: np.ndarray | None = None
    var: np.ndarray | None = None
    log_prior: np.ndarray | None = None
    # LR
    coef: np.ndarray | None = None
    intercept: np.ndarray | None = None
    # kNN
    train_X: np.ndarray | None = None
    train_y: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_margins(self, X) -> np.ndarray:
        """Raw additive per-class scores (boosted kinds)."""
        if self.kind not in BOOSTED_KINDS:
            raise ModelError(f"{self.kind} has no raw margins")
        X = self._check(X)
        out = np.zeros((len(X), self.n_classes))
        if self.kind == "XGB":
            for i, tree in enumerate(self.trees):
                out[:, i % self.n_classes] += tree.predict(X)[:, 0]
        else:
            for tree, w in zip(self.trees, self.tree_weights):
                out += w * tree.predict(X)
        return out

    def predict_scores(self, X) -> np.ndarray:
        """Per-class probabilities; rows sum to one."""
        X = self._check(X)
        k = self.kind
        if k == "XGB":
            return softmax(self.predict_margins(X), axis=1)
        if k == "AB":
            return softmax(self.predict_margins(X) / max(self.n_classes - 1, 1), axis=1)
        if k in ("DT", "RF", "ET"):
            out = np.zeros((len(X), self.n_classes))
            for tree, w in zip(self.trees, self.tree_weights):
                out += w * tree.predict(X)
            return out / out.sum(axis=1, keepdims=True)
        if k == "NB":
            jll = self._nb_joint_log_likelihood(X)
            return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
        if k == "LR":
            Z = (X - self.mean) / self.scale
            return softmax(Z @ self.coef.T + self.intercept, axis=1)
        if k == "kNN":
            return self._knn_votes(X)
        raise ModelError(k)

    def predict(self, X) -> list[str]:
        scores = self.predict_scores(X)
        return [self.classes[i] for i in np.argmax(scores, axis=1)]

    def _nb_joint_log_likelihood(self, X):
        out = []
        for c in range(self.n_classes):
            ll = -0.5 * np.sum(np.log(2 * np.pi * self.var[c]))
            ll = ll - 0.5 * np.sum((X - self.theta[c]) ** 2 / self.var[c], axis=1)
            out.append(self.log_prior[c] + ll)
        return np.column_stack(out)

    def _knn_votes(self, X, chunk=512):
        k = min(self.spec.params["k"], len(self.train_X))
        Z = (X - self.mean) / self.scale
        T = self.train_X
        tn = (T * T).sum(axis=1)
        votes = np.zeros((len(X), self.n_classes))
        for s in range(0, len(Z), chunk):
            z = Z[s:s + chunk]
            d2 = np.maximum((z * z).sum(axis=1)[:, None] - 2 * z @ T.T + tn[None, :], 0.0)
            nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
            labels = self.train_y[nn]
            for c in range(self.n_classes):
                votes[s:s + chunk, c] = (labels == c).sum(axis=1)
        return votes / k


def _encode(labels: Sequence[str], classes: Sequence[str] | None) -> tuple[list[str], np.ndarray]:
    labels = [str(v) for v in labels]
    if classes is None:
        classes = sorted(set(labels))
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    try:
        y = np.array([index[v] for v in labels], dtype=np.int64)
    except KeyError as exc:
        raise ModelError(f"label {exc.args[0]!r} not in class alphabet {classes}") from None
    return classes, y


def _standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    return mean, np.where(scale > 0, scale, 1.0)


def train(spec: ModelSpec, data: FeatureMatrix | np.ndarray, labels: Sequence[str] | None = None,
          classes: Sequence[str] | None = None, feature_names: Sequence[str] | None = None) -> TrainedModel:
    """Fit one model on the active features of ``data`` (or a plain array plus labels)."""
    if isinstance(data, FeatureMatrix):
        X = data.X
        labels = data.labels if labels is None else labels
        feature_names = data.active_names if feature_names is None else feature_names
    else:
        X = np.asarray(data, dtype=float)
    if labels is None:
        raise ModelError("training needs labels")
    if X.ndim != 2 or len(X) != len(labels):
        raise ModelError("feature rows and labels differ in length")
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite feature values")
    classes, y = _encode(labels, classes)
    counts = np.bincount(y, minlength=len(classes))
    if len(classes) < 2:
        raise ModelError("need at least two classes")
    if np.any(counts == 0):
        empty = [c for c, n in zip(classes, counts) if n == 0]
        raise ModelError(f"empty classes: {empty}")
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]
    model = TrainedModel(spec, classes, list(feature_names))
    _FITTERS[spec.kind](model, X, y, spec.params, spec.seed)
    return model


def _fit_dt(model, X, y, p, seed):
    model.trees = [grow_gini_tree(X, y, model.n_classes, max_depth=p["max_depth"],
                                  rng=np.random.default_rng(seed))]
    model.tree_weights = [1.0]


def bagged_member(X, y, n_classes, p, seed, i, *, bootstrap: bool, random_thresholds: bool) -> Tree:
    """Member ``i`` of a random forest / extra-trees ensemble."""
    rng = np.random.default_rng(member_seed(seed, i))
    mf = max(1, int(math.sqrt(X.shape[1])))
    weight = None
    if bootstrap:
        weight = np.bincount(rng.integers(0, len(X), len(X)), minlength=len(X)).astype(float)
        keep = weight > 0
        Xb, yb, weight = X[keep], y[keep], weight[keep]
    else:
        Xb, yb = X, y
    return grow_gini_tree(Xb, yb, n_classes, max_depth=p["max_depth"], sample_weight=weight,
                          max_features=mf, random_thresholds=random_thresholds, rng=rng)


def _fit_bagged(bootstrap, random_thresholds):
    def fit(model, X, y, p, seed):
        n = p["n_estimators"]
        model.trees = [bagged_member(X, y, model.n_classes, p, seed, i, bootstrap=bootstrap,
                                     random_thresholds=random_thresholds) for i in range(n)]
        model.tree_weights = [1.0 / n] * n
    return fit


def _fit_ab(model, X, y, p, seed):
    """Multi-class SAMME; tree leaves are one-hot votes, weights alpha_m / sum(alpha)."""
    K = model.n_classes
    n = len(X)
    w = np.full(n, 1.0 / n)
    trees, alphas = [], []
    for m in range(p["n_estimators"]):
        tree = grow_gini_tree(X, y, K, max_depth=p["max_depth"], sample_weight=w,
                              rng=np.random.default_rng(member_seed(seed, m)))
        pred = np.argmax(tree.value, axis=1)[tree.apply(X)]
        wrong = pred != y
        err = float(w[wrong].sum() / w.sum())
        if err >= 1 - 1 / K:
            if not trees:
                raise ModelError("first boosting round is no better than chance")
            break
        vote = np.eye(K)[np.argmax(tree.value, axis=1)]
        tree = Tree(tree.feature, tree.threshold, tree.left, tree.right, vote)
        if err <= 0:
            trees.append(tree)
            alphas.append(1.0)
            break
        alpha = p["learning_rate"] * (math.log((1 - err) / err) + math.log(K - 1))
        trees.append(tree)
        alphas.append(alpha)
        w = w * np.exp(alpha * wrong)
        w /= w.sum()
    total = sum(alphas)
    model.trees = trees
    model.tree_weights = [a / total for a in alphas]


def _fit_xgb(model, X, y, p, seed):
    """Softmax gradient boosting: per round one tree per class, grown on (p - y, p(1 - p))."""
    K = model.n_classes
    Y = np.eye(K)[y]
    F = np.zeros((len(X), K))
    trees = []
    for _ in range(p["n_estimators"]):
        P = softmax(F, axis=1)
        G = P - Y
        H = np.maximum(P * (1 - P), 1e-16)
        for c in range(K):
            t = grow_boosted_tree(X, G[:, c], H[:, c], max_depth=p["max_depth"], reg_lambda=p["reg_lambda"],
                                  gamma=p["gamma"], min_child_weight=p["min_child_weight"],
                                  learning_rate=p["learning_rate"])
            trees.append(t)
            F[:, c] += t.predict(X)[:, 0]
    model.trees = trees
    model.tree_weights = [1.0] * len(trees)


def _fit_nb(model, X, y, p, seed):
    K = model.n_classes
    eps = p["var_smoothing"] * float(X.var(axis=0).max())
    model.theta = np.vstack([X[y == c].mean(axis=0) for c in range(K)])
    model.var = np.vstack([X[y == c].var(axis=0) for c in range(K)]) + eps
    if eps == 0:
        model.var = np.where(model.var > 0, model.var, 1e-300)
    counts = np.bincount(y, minlength=K)
    model.log_prior = np.log(counts / counts.sum())


def _fit_lr(model, X, y, p, seed):
    K = model.n_classes
    mean, scale = _standardize(X)
    Z = (X - mean) / scale
    n, d = Z.shape
    Y = np.eye(K)[y]
    lam = p["l2"]

    def objective(theta):
        W = theta[:K * d].reshape(K, d)
        b = theta[K * d:]
        logits = Z @ W.T + b
        lse = logsumexp(logits, axis=1, keepdims=True)
        loss = -(Y * (logits - lse)).sum() / n + 0.5 * lam * (W * W).sum()
        P = np.exp(logits - lse)
        gW = (P - Y).T @ Z / n + lam * W
        gb = (P - Y).sum(axis=0) / n
        return loss, np.concatenate([gW.ravel(), gb])

    res = minimize(objective, np.zeros(K * (d + 1)), jac=True, method="L-BFGS-B",
                   options={"maxiter": p["max_iterations"], "gtol": 1e-10, "ftol": 1e-15})
    model.coef = res.x[:K * d].reshape(K, d)
    model.intercept = res.x[K * d:]
    model.mean, model.scale = mean, scale


def _fit_knn(model, X, y, p, seed):
    model.mean, model.scale = _standardize(X)
    model.train_X = (X - model.mean) / model.scale
    model.train_y = y.copy()


_FITTERS = {
    "DT": _fit_dt,
    "RF": _fit_bagged(bootstrap=True, random_thresholds=False),
    "ET": _fit_bagged(bootstrap=False, random_thresholds=True),
    "AB": _fit_ab,
    "XGB": _fit_xgb,
    "NB": _fit_nb,
    "LR": _fit_lr,
    "kNN": _fit_knn,
}


def predict(model: TrainedModel, rows) -> list[str]:
    return model.predict(rows)


def predict_scores(model: TrainedModel, rows) -> np.ndarray:
    return model.predict_scores(rows)


# -- persistence ----------------------------------------------------------------

_ARRAYS = ("mean", "scale", "theta", "var", "log_prior", "coef", "intercept", "train_X", "train_y")


def _float_list(a: np.ndarray):
    # repr round-trips doubles exactly
    return np.asarray(a).tolist()


def model_to_dict(model: TrainedModel) -> dict:
    params = {"trees": [t.to_dict() for t in model.trees], "tree_weights": list(model.tree_weights)}
    for name in _ARRAYS:
        val = getattr(model, name)
        if val is not None:
            params[name] = _float_list(val)
    return {
        "format": "flowcam-model",
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "seed": model.spec.seed,
        "hyperparameters": model.spec.params,
        "classes": model.classes,
        "feature_names": model.feature_names,
        "parameters": params,
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != "flowcam-model":
        raise ModelFileError("not a flowcam model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format version {doc.get('version')!r} "
                             f"(this build reads version {FORMAT_VERSION})")
    try:
        spec = ModelSpec(doc["kind"], dict(doc["hyperparameters"]), int(doc["seed"]))
        p = doc["parameters"]
        model = TrainedModel(spec, list(doc["classes"]), list(doc["feature_names"]),
                             trees=[Tree.from_dict(t) for t in p["trees"]],
                             tree_weights=[float(w) for w in p["tree_weights"]])
        for name in _ARRAYS:
            if name in p:
                dtype = np.int64 if name == "train_y" else float
                setattr(model, name, np.asarray(p[name], dtype=dtype))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from None
    return model


def save(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load(path: str | Path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"corrupt model file {path}: {exc}") from None
    return model_from_dict(doc)
