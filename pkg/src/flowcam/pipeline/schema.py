"""Stage-1 and stage-2 label alphabets and the mapping from combined labels."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

STAGE1 = ("Conf", "Share", "IoTCam", "Others")
CAMERAS = ("Netatmo", "SpyClock", "Canary", "D3D", "Ezviz", "V380")
GATE = "IoTCam"


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class LabelSchema:
    """A combined label is either a stage-1 label or a camera label (which implies the gate class)."""

    stage1: tuple[str, ...] = STAGE1
    stage2: tuple[str, ...] = CAMERAS
    gate: str = GATE

    def __post_init__(self):
        if set(self.stage1) & set(self.stage2):
            raise SchemaError(f"alphabets overlap: {sorted(set(self.stage1) & set(self.stage2))}")
        if self.gate not in self.stage1:
            raise SchemaError(f"gate class {self.gate!r} is not a stage-1 label")

    def stage1_of(self, label: str) -> str:
        if label in self.stage2:
            return self.gate
        if label in self.stage1:
            return label
        raise SchemaError(f"label {label!r} is in neither alphabet")

    def stage2_of(self, label: str) -> str | None:
        return label if label in self.stage2 else None

    def to_dict(self) -> dict:
        return {"stage1": list(self.stage1), "stage2": list(self.stage2), "gate": self.gate}

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelSchema":
        try:
            return cls(tuple(doc["stage1"]), tuple(doc["stage2"]), doc.get("gate", GATE))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"schema needs stage1 and stage2 lists ({exc})") from None

    @classmethod
    def load(cls, path: str | Path) -> "LabelSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))
