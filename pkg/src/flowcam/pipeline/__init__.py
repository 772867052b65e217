"""Two-stage classification, synthetic data, splitting and config-driven reports."""

from .report import ConfigError, SEED_ENV, default_seed, load_config, run_report, validate_config
from .schema import CAMERAS, GATE, STAGE1, LabelSchema, SchemaError
from .split import SplitError, split, split_indices
from .synth import Component, SynthClass, SynthError, SynthSpec, default_spec, synth_generate
from .twostage import (
    PipelineModel, classify_rows, evaluate_pipeline, final_label, train_pipeline, two_stage_classify,
)

__all__ = [
    "CAMERAS", "GATE", "STAGE1", "SEED_ENV", "Component", "ConfigError", "LabelSchema", "PipelineModel",
    "SchemaError", "SplitError", "SynthClass", "SynthError", "SynthSpec", "classify_rows", "default_seed",
    "default_spec", "evaluate_pipeline", "final_label", "load_config", "run_report", "split", "split_indices",
    "synth_generate", "train_pipeline", "two_stage_classify", "validate_config",
]
