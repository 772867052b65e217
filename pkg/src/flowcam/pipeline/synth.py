"""Seeded Gaussian-mixture stand-ins for labelled flow-feature data.

Rows fill the 63 feature slots that survive the red list; red-listed columns
stay zero. The first 32 slots separate the stage-1 classes, the remaining 31
separate the camera clusters. The IoTCam class of ``synth4`` is the equal
mixture of the six ``synth6`` cameras, so one generator feeds both stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import FEATURE_NAMES, N_FEATURES, RED_LIST, FeatureMatrix
from .schema import CAMERAS, GATE, STAGE1

SLOTS = tuple(i for i, n in enumerate(FEATURE_NAMES) if n not in RED_LIST)  # 63 positions
N_SLOTS = len(SLOTS)
STAGE1_SLOTS = 32
LAYOUT_SEED = 1729  # fixes cluster geometry; the spec seed only drives sampling
DEFAULT_SEPARATION = 1.5  # lets a single axis-aligned tree clear 0.95


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    name: str
    mean: np.ndarray
    cov: np.ndarray  # per-slot variances, or a full slot x slot matrix
    weight: float = 1.0

    def factor(self) -> np.ndarray:
        """Matrix L with L @ L.T == cov; raises on a non-positive-definite covariance."""
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 1:
            if np.any(cov <= 0):
                raise SynthError(f"component {self.name}: covariance is not positive definite")
            return np.diag(np.sqrt(cov))
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise SynthError(f"component {self.name}: covariance is not positive definite") from None


@dataclass(frozen=True)
class SynthClass:
    name: str
    components: tuple[Component, ...]


@dataclass(frozen=True)
class SynthSpec:
    name: str
    classes: tuple[SynthClass, ...]
    n_per_class: int = 500
    seed: int = 0
    separation: float = DEFAULT_SEPARATION
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def _profile(n: int, decay: float) -> np.ndarray:
    """Geometrically fading per-slot scale, so importance is graded rather than flat."""
    return np.exp(-np.arange(n) / decay)


def _layout():
    rng = np.random.default_rng(LAYOUT_SEED)
    s2 = N_SLOTS - STAGE1_SLOTS
    stage1_means = 3.0 * rng.normal(size=(len(STAGE1), STAGE1_SLOTS)) * _profile(STAGE1_SLOTS, 10.0)
    stage1_vars = rng.uniform(0.5, 1.5, size=(len(STAGE1), STAGE1_SLOTS))
    cam_means = 3.0 * rng.normal(size=(len(CAMERAS), s2)) * _profile(s2, 10.0)
    cam_vars = rng.uniform(0.5, 1.5, size=(len(CAMERAS), s2))
    return stage1_means, stage1_vars, cam_means, cam_vars


def _camera_components(stage1_means, stage1_vars, cam_means, cam_vars) -> list[Component]:
    g = STAGE1.index(GATE)
    return [
        Component(cam, np.concatenate([stage1_means[g], cam_means[k]]),
                  np.concatenate([stage1_vars[g], cam_vars[k]]))
        for k, cam in enumerate(CAMERAS)
    ]


def default_spec(name: str, n_per_class: int = 500, seed: int = 0,
                 separation: float = DEFAULT_SEPARATION) -> SynthSpec:
    """``synth4``: Conf, Share, IoTCam (six-camera mixture), Others. ``synth6``: the six cameras."""
    m1, v1, mc, vc = _layout()
    cams = _camera_components(m1, v1, mc, vc)
    if name == "synth6":
        classes = tuple(SynthClass(c.name, (c,)) for c in cams)
    elif name == "synth4":
        s2 = N_SLOTS - STAGE1_SLOTS
        classes = []
        for i, label in enumerate(STAGE1):
            if label == GATE:
                classes.append(SynthClass(label, tuple(cams)))
            else:
                comp = Component(label, np.concatenate([m1[i], np.zeros(s2)]), np.concatenate([v1[i], np.ones(s2)]))
                classes.append(SynthClass(label, (comp,)))
        classes = tuple(classes)
    else:
        raise SynthError(f"unknown synthetic dataset {name!r}; choose synth4 or synth6")
    return SynthSpec(name, classes, n_per_class, seed, separation)


def synth_generate(spec: SynthSpec, label_by: str = "class") -> FeatureMatrix:
    """Draw ``n_per_class`` rows per class.

    ``label_by="component"`` labels mixture rows by their component (camera
    name), which yields the combined labels the two-stage pipeline trains on.
    """
    if label_by not in ("class", "component"):
        raise SynthError("label_by must be 'class' or 'component'")
    if spec.n_per_class < 0:
        raise SynthError("n_per_class must be non-negative")
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for cls in spec.classes:
        factors = [c.factor() for c in cls.components]
        w = np.array([c.weight for c in cls.components], dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise SynthError(f"class {cls.name}: mixture weights must be non-negative and not all zero")
        pick = rng.choice(len(w), size=spec.n_per_class, p=w / w.sum())
        z = rng.normal(size=(spec.n_per_class, N_SLOTS))
        rows = np.empty((spec.n_per_class, N_SLOTS))
        for k, comp in enumerate(cls.components):
            sel = pick == k
            rows[sel] = spec.separation * comp.mean + z[sel] @ factors[k].T
        labels.extend(cls.components[k].name if label_by == "component" else cls.name for k in pick)
        blocks.append(rows)
    slots = np.vstack(blocks) if blocks else np.empty((0, N_SLOTS))
    values = np.zeros((len(slots), N_FEATURES))
    values[:, SLOTS] = slots
    mask = np.zeros(N_FEATURES, dtype=bool)
    mask[list(SLOTS)] = True
    return FeatureMatrix(values, labels=labels, active_mask=mask)

