"""Config-driven runs: data -> split -> models -> metrics, attributions, faithfulness, manifest."""

from __future__ import annotations

import hashlib
import json
import os
import platform
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from .. import __version__
from ..extract import DEFAULT_LABEL, extract_pcap
from ..faithfulness import faithfulness_report
from ..features import FeatureMatrix, prune_static, read_csv, write_csv
from ..flows import DEFAULT_ACTIVITY_TIMEOUT, DEFAULT_FLOW_TIMEOUT
from ..metrics import confusion, evaluation_report
from ..models import DEFAULT_HYPERPARAMETERS, KINDS, ModelSpec, train
from ..stats import correlated_pairs, mutual_information, pca_fit, pearson_matrix
from ..xai import METHODS, TREE_EXPLAINABLE, attribution_explainer, class_importance, sample_background
from .schema import LabelSchema
from .split import split
from .synth import default_spec, synth_generate
from .twostage import evaluate_pipeline, train_pipeline

SEED_ENV = "FLOWCAM_SEED"
SYNTH_NAMES = ("synth4", "synth6")


class ConfigError(ValueError):
    """A config problem, located by a dotted/indexed path such as ``models[0].kind``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(SEED_ENV, f"not an integer: {raw!r}") from None


def load_config(path: str | Path) -> dict:
    """JSON, or TOML where the interpreter ships ``tomllib``; a saved manifest is accepted too."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            raise ConfigError("config", "TOML needs Python 3.11+; use JSON") from None
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"invalid TOML: {exc}") from None
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
    if isinstance(doc, dict) and "config" in doc and "config_hash" in doc:
        doc = doc["config"]
    return doc


def _get(doc: dict, key: str, path: str, kind, default=None, required: bool = False):
    if key not in doc or doc[key] is None:
        if required:
            raise ConfigError(f"{path}{key}" if not path else f"{path}.{key}", "is required")
        return default
    value = doc[key]
    where = f"{path}.{key}" if path else key
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and (not isinstance(value, kind) or (kind is int and isinstance(value, bool))):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(where, f"expected {names}, got {type(value).__name__}")
    return value


def _section(doc: dict, key: str, allowed: set[str]) -> dict | None:
    sec = _get(doc, key, "", dict)
    if sec is None:
        return None
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown field")
    return sec


def validate_config(raw: Any) -> dict:
    """Fill defaults and check types; the result is what the manifest records."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "must be a mapping")
    known = {"seed", "data", "task", "split", "prune", "models", "explain", "faithfulness", "analysis", "schema"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown field")
    cfg: dict[str, Any] = {"seed": _get(raw, "seed", "", int, default_seed())}

    data = _get(raw, "data", "", dict, required=True)
    source = _get(data, "source", "data", str, required=True)
    if source == "synth":
        name = _get(data, "name", "data", str, "synth4")
        if name not in SYNTH_NAMES:
            raise ConfigError("data.name", f"must be one of {SYNTH_NAMES}")
        d = {"source": source, "name": name, "n_per_class": _get(data, "n_per_class", "data", int, 500),
             "separation": _get(data, "separation", "data", float, 1.5),
             "label_by": _get(data, "label_by", "data", str, "class")}
        if d["label_by"] not in ("class", "component"):
            raise ConfigError("data.label_by", "must be 'class' or 'component'")
    elif source == "csv":
        d = {"source": source, "path": _get(data, "path", "data", str, required=True)}
    elif source == "pcap":
        paths = _get(data, "paths", "data", list, required=True)
        for i, p in enumerate(paths):
            if not isinstance(p, str):
                raise ConfigError(f"data.paths[{i}]", "expected str")
        labels = _get(data, "labels", "data", list, [DEFAULT_LABEL] * len(paths))
        if len(labels) != len(paths):
            raise ConfigError("data.labels", f"needs one label per path ({len(paths)})")
        d = {"source": source, "paths": paths, "labels": [str(x) for x in labels],
             "flow_timeout": _get(data, "flow_timeout", "data", float, DEFAULT_FLOW_TIMEOUT),
             "activity_timeout": _get(data, "activity_timeout", "data", float, DEFAULT_ACTIVITY_TIMEOUT)}
    else:
        raise ConfigError("data.source", "must be synth, csv or pcap")
    cfg["data"] = d

    cfg["task"] = _get(raw, "task", "", str, "flat")
    if cfg["task"] not in ("flat", "two_stage"):
        raise ConfigError("task", "must be 'flat' or 'two_stage'")
    cfg["split"] = _get(raw, "split", "", float, 0.8)
    if not 0 < cfg["split"] < 1:
        raise ConfigError("split", "must lie strictly between 0 and 1")
    cfg["prune"] = _get(raw, "prune", "", bool, True)
    cfg["schema"] = _get(raw, "schema", "", dict, LabelSchema().to_dict())

    models = _get(raw, "models", "", list, [])
    cfg["models"] = []
    for i, m in enumerate(models):
        where = f"models[{i}]"
        if not isinstance(m, dict):
            raise ConfigError(where, "expected a mapping")
        kind = _get(m, "kind", where, str, required=True)
        if kind not in KINDS:
            raise ConfigError(f"{where}.kind", f"unknown kind {kind!r}; expected one of {KINDS}")
        hp = _get(m, "hyperparameters", where, dict, {})
        for key in hp:
            if key not in DEFAULT_HYPERPARAMETERS[kind]:
                raise ConfigError(f"{where}.hyperparameters.{key}", f"not a {kind} hyperparameter")
        cfg["models"].append({"kind": kind, "hyperparameters": dict(sorted(hp.items()))})

    ex = _section(raw, "explain", {"method", "background", "rows", "topk"})
    if ex is not None:
        method = _get(ex, "method", "explain", str, "tree")
        if method not in METHODS:
            raise ConfigError("explain.method", f"must be one of {METHODS}")
        ex = {"method": method, "background": _get(ex, "background", "explain", int, 100),
              "rows": _get(ex, "rows", "explain", int, 200), "topk": _get(ex, "topk", "explain", int, 10)}
    cfg["explain"] = ex

    fa = _section(raw, "faithfulness", {"noise_frac", "runs", "k", "rows", "background"})
    if fa is not None:
        fa = {"noise_frac": _get(fa, "noise_frac", "faithfulness", float, 0.05),
              "runs": _get(fa, "runs", "faithfulness", int, 5), "k": _get(fa, "k", "faithfulness", int, 10),
              "rows": _get(fa, "rows", "faithfulness", int, 200),
              "background": _get(fa, "background", "faithfulness", int, 100)}
    cfg["faithfulness"] = fa

    an = _section(raw, "analysis", {"correlation_threshold", "pca_variance", "mi_bins"})
    if an is not None:
        an = {"correlation_threshold": _get(an, "correlation_threshold", "analysis", float, 0.9),
              "pca_variance": _get(an, "pca_variance", "analysis", float, 0.95),
              "mi_bins": _get(an, "mi_bins", "analysis", int, 20)}
    cfg["analysis"] = an
    return cfg


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def load_data(cfg: dict, out_dir: Path | None = None) -> FeatureMatrix:
    d = cfg["data"]
    if d["source"] == "synth":
        spec = default_spec(d["name"], d["n_per_class"], cfg["seed"], d["separation"])
        return synth_generate(spec, d["label_by"])
    if d["source"] == "csv":
        return read_csv(d["path"])
    parts = []
    for p, lab in zip(d["paths"], d["labels"]):
        m, _ = extract_pcap(p, lab, d["flow_timeout"], d["activity_timeout"])
        parts.append(m)
    values = np.vstack([m.values for m in parts])
    labels = [lab for m in parts for lab in (m.labels or [])]
    m = FeatureMatrix(values, labels=labels)
    if out_dir is not None:
        write_csv(m, out_dir / "features.csv")
    return m


def _importance_rows(kind: str, imp: dict) -> list[str]:
    lines = []
    for cls, rep in imp.items():
        for rank, j in enumerate(rep.ranking, start=1):
            lines.append(f"{kind},{cls},{rank},{rep.names[j]},{float(rep.scores[j])!r}")
    return lines


def _analysis(m: FeatureMatrix, an: dict) -> dict:
    corr = pearson_matrix(m)
    mi = mutual_information(m, bins=an["mi_bins"])
    pairs, drop = correlated_pairs(corr, an["correlation_threshold"], mi.scores)
    pca = pca_fit(m, an["pca_variance"])
    return {
        "mutual_information": mi.as_dict(),
        "correlated_pairs": [[a, b, r] for a, b, r in pairs],
        "drop": sorted(drop),
        "pca": {"components": pca.n_components, "explained_ratio": pca.explained_ratio.tolist(),
                "cumulative": float(pca.explained_ratio.sum())},
    }


def run_report(config: dict, out_dir: str | Path) -> dict:
    """Run everything ``config`` asks for and write the bundle; returns the manifest."""
    cfg = validate_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    m = load_data(cfg, out)
    outputs: dict[str, Any] = {}
    if cfg["data"]["source"] == "pcap":
        outputs["features.csv"] = None

    metrics: dict[str, Any] = {}
    faith: dict[str, Any] = {}
    attr_lines: list[str] = []
    if cfg["models"] or cfg["analysis"]:
        if m.labels is None:
            raise ConfigError("data", "training and analysis need labelled rows")
        if cfg["prune"]:
            m = prune_static(m)
        train_m, test_m = split(m, cfg["split"], seed)
        metrics["rows"] = {"train": len(train_m), "test": len(test_m)}
        metrics["features"] = list(train_m.active_names)
        if cfg["analysis"]:
            (out / "analysis.json").write_text(canonical_json(_analysis(train_m, cfg["analysis"])))
            outputs["analysis.json"] = None
        schema = LabelSchema.from_dict(cfg["schema"])
        background = sample_background(train_m.X, (cfg["explain"] or cfg["faithfulness"] or {}).get("background", 100),
                                       seed)
        metrics["models"] = {}
        for mc in cfg["models"]:
            spec = ModelSpec(mc["kind"], mc["hyperparameters"], seed)
            kind = spec.kind
            if cfg["task"] == "two_stage":
                pipe = train_pipeline(train_m, spec, schema=schema)
                metrics["models"][kind] = evaluate_pipeline(pipe, test_m)
                model = pipe.stage1
                eval_m = test_m.with_mask(test_m.active_mask)
                eval_m.labels = [schema.stage1_of(lab) for lab in test_m.labels]
            else:
                model = train(spec, train_m)
                pred = model.predict(test_m.X)
                metrics["models"][kind] = evaluation_report(confusion(test_m.labels, pred, model.classes))
                eval_m = test_m
            tree_ok = kind in TREE_EXPLAINABLE
            ex = cfg["explain"]
            if ex and (tree_ok or ex["method"] != "tree") and len(eval_m):
                rows = eval_m.take(np.arange(min(ex["rows"], len(eval_m))))
                imp = class_importance(model, rows, background[: ex["background"]], ex["method"], seed=seed)
                attr_lines += _importance_rows(kind, imp)
            fa = cfg["faithfulness"]
            if fa and tree_ok and len(eval_m) >= 10:
                rows = sample_background(eval_m.X, fa["rows"], seed)
                explainer = attribution_explainer(model, background[: fa["background"]])
                rep = faithfulness_report(model, rows, explainer, fa["k"], fa["noise_frac"], fa["runs"], seed,
                                          fill=train_m.X.mean(axis=0))
                faith[kind] = rep.to_dict()
        (out / "metrics.json").write_text(canonical_json(metrics))
        outputs["metrics.json"] = None
        if attr_lines:
            (out / "attributions.csv").write_text("model,class,rank,feature,mean_abs_phi\n" + "\n".join(attr_lines)
                                                  + "\n")
            outputs["attributions.csv"] = None
        if faith:
            (out / "faithfulness.json").write_text(canonical_json(faith))
            outputs["faithfulness.json"] = None

    for name in outputs:
        outputs[name] = hashlib.sha256((out / name).read_bytes()).hexdigest()
    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seeds": {"global": seed, "split": seed, "models": seed, "background": seed, "faithfulness": seed,
                  "synth": seed if cfg["data"]["source"] == "synth" else None},
        "versions": {"flowcam": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(canonical_json(manifest))
    return manifest
