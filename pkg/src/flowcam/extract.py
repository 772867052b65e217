"""Capture file -> feature matrix, the work behind ``flowcam extract``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .features import FeatureMatrix, extract_matrix
from .flows import DEFAULT_ACTIVITY_TIMEOUT, DEFAULT_FLOW_TIMEOUT, assemble_flows
from .pcap import read_pcap

DEFAULT_LABEL = "Unknown"


@dataclass(frozen=True)
class ExtractStats:
    packets: int
    skipped: int
    truncated: bool
    flows: int


def extract_pcap(path: str | Path, label: str = DEFAULT_LABEL,
                 flow_timeout: float = DEFAULT_FLOW_TIMEOUT,
                 activity_timeout: float = DEFAULT_ACTIVITY_TIMEOUT) -> tuple[FeatureMatrix, ExtractStats]:
    reader = read_pcap(path)
    flows = assemble_flows(reader, flow_timeout=flow_timeout, activity_timeout=activity_timeout)
    m = extract_matrix(flows, label=label)
    return m, ExtractStats(reader.read, reader.skipped, reader.truncated, len(flows))
