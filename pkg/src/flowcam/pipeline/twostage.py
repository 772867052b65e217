"""Flow classifier gating a camera classifier."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..features import FeatureMatrix
from ..metrics import confusion, evaluation_report
from ..models import ModelError, ModelSpec, TrainedModel, train
from ..models.core import model_from_dict, model_to_dict
from ..xai import attribution_matrix
from .schema import LabelSchema

FORMAT = "flowcam-pipeline"
VERSION = 1


@dataclass
class PipelineModel:
    stage1: TrainedModel
    stage2: TrainedModel | None
    schema: LabelSchema
    feature_names: list[str]

    def check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise ModelError(f"pipeline expects {len(self.feature_names)} features, got {X.shape[1]}")
        return X

    def to_dict(self) -> dict:
        return {
            "format": FORMAT, "version": VERSION, "schema": self.schema.to_dict(),
            "feature_names": list(self.feature_names),
            "stage1": model_to_dict(self.stage1),
            "stage2": None if self.stage2 is None else model_to_dict(self.stage2),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineModel":
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise ModelError(f"not a {FORMAT} v{VERSION} document")
        s2 = doc["stage2"]
        return cls(model_from_dict(doc["stage1"]), None if s2 is None else model_from_dict(s2),
                   LabelSchema.from_dict(doc["schema"]), list(doc["feature_names"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "PipelineModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_pipeline(m: FeatureMatrix, stage1_spec: ModelSpec, stage2_spec: ModelSpec | None = None,
                   schema: LabelSchema | None = None) -> PipelineModel:
    """Stage 1 learns every row's stage-1 label; stage 2 learns camera labels on camera rows only.

    Both stages see the same active features of ``m``.
    """
    schema = schema or LabelSchema()
    if m.labels is None:
        raise ModelError("pipeline training needs labels")
    y1 = [schema.stage1_of(lab) for lab in m.labels]
    present1 = [c for c in schema.stage1 if c in set(y1)]
    stage1 = train(stage1_spec, m.X, y1, classes=present1, feature_names=m.active_names)
    cam_rows = [i for i, lab in enumerate(m.labels) if schema.stage2_of(lab)]
    stage2 = None
    if cam_rows:
        y2 = [m.labels[i] for i in cam_rows]
        present2 = [c for c in schema.stage2 if c in set(y2)]
        if len(present2) >= 2:
            stage2 = train(stage2_spec or stage1_spec, m.X[cam_rows], y2, classes=present2,
                           feature_names=m.active_names)
    return PipelineModel(stage1, stage2, schema, list(m.active_names))


def classify_rows(p: PipelineModel, X) -> tuple[list[str], list[str | None]]:
    """Stage-1 labels and, only where stage 1 says the gate class, stage-2 labels."""
    X = p.check(X)
    s1 = p.stage1.predict(X)
    s2: list[str | None] = [None] * len(X)
    gated = [i for i, lab in enumerate(s1) if lab == p.schema.gate]
    if gated and p.stage2 is not None:
        for i, lab in zip(gated, p.stage2.predict(X[gated])):
            s2[i] = lab
    return s1, s2


def two_stage_classify(p: PipelineModel, rows, explain: bool = False, background=None) -> list[dict]:
    """Per-row result dicts; with ``explain`` each stage adds tree attributions for its predicted class."""
    X = p.check(rows)
    s1, s2 = classify_rows(p, X)
    out = [{"stage1": a} if b is None else {"stage1": a, "stage2": b} for a, b in zip(s1, s2)]
    if explain:
        if background is None:
            raise ModelError("explain needs a background set")
        phi1 = attribution_matrix(p.stage1, X, background)
        for i, r in enumerate(out):
            r["attributions"] = {"stage1": dict(zip(p.feature_names, phi1[i].tolist()))}
        gated = [i for i, r in enumerate(out) if "stage2" in r]
        if gated:
            phi2 = attribution_matrix(p.stage2, X[gated], background)
            for k, i in enumerate(gated):
                out[i]["attributions"]["stage2"] = dict(zip(p.feature_names, phi2[k].tolist()))
    return out


def final_label(stage1: str, stage2: str | None) -> str:
    return stage2 if stage2 is not None else stage1


def evaluate_pipeline(p: PipelineModel, m: FeatureMatrix) -> dict:
    """Stage-1 metrics, stage-2 metrics on true camera rows (all, and those stage 1 passed), end to end."""
    if m.labels is None:
        raise ModelError("evaluation needs labels")
    sch = p.schema
    s1, s2 = classify_rows(p, m.X)
    truth1 = [sch.stage1_of(lab) for lab in m.labels]
    alphabet1 = list(p.stage1.classes)
    report = {"stage1": evaluation_report(confusion(truth1, s1, alphabet1))}
    violations = sum((b is not None) != (a == sch.gate) for a, b in zip(s1, s2)) if p.stage2 else 0
    report["gating_violations"] = int(violations)
    cam = [i for i, lab in enumerate(m.labels) if sch.stage2_of(lab)]
    if p.stage2 is not None and cam:
        alphabet2 = list(p.stage2.classes)
        pred_all = p.stage2.predict(m.X[cam])
        report["stage2_true_gate"] = evaluation_report(confusion([m.labels[i] for i in cam], pred_all, alphabet2))
        passed = [i for i in cam if s1[i] == sch.gate]
        if passed:
            report["stage2_passed_gate"] = evaluation_report(
                confusion([m.labels[i] for i in passed], [s2[i] for i in passed], alphabet2))
        known = [i for i, lab in enumerate(m.labels) if lab != sch.gate]
        alphabet = [c for c in alphabet1 if c != sch.gate] + alphabet2
        report["end_to_end"] = evaluation_report(
            confusion([m.labels[i] for i in known], [final_label(s1[i], s2[i]) for i in known], alphabet))
    return report
