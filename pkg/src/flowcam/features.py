"""The 77 CICFlowMeter-style flow features, static pruning and CSV I/O."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .flows import FlowBuffer
from .pcap import FORWARD

FEATURE_NAMES: tuple[str, ...] = (
    "Flow Duration", "Tot Fwd Pkts", "Tot Bwd Pkts", "TotLen Fwd Pkts", "TotLen Bwd Pkts",
    "Fwd Pkt Len Max", "Fwd Pkt Len Min", "Fwd Pkt Len Mean", "Fwd Pkt Len Std",
    "Bwd Pkt Len Max", "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std",
    "Flow Byte/s", "Flow Packets/s",
    "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max", "Flow IAT Min",
    "Fwd IAT Max", "Fwd IAT Min", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Total",
    "Bwd IAT Min", "Bwd IAT Max", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Total",
    "Fwd Header Length", "Bwd Header Length", "FWD Packets/s", "Bwd Packets/s",
    "Min Packet Length", "Max Packet Length", "Packet Length Mean", "Packet Length Std",
    "Packet Length Variance", "Down/Up Ratio", "Average Packet Size", "Fwd Header Len",
    "Avg Fwd Segment Size", "AVG Bwd Segment Size", "Bwd PSH Flag",
    "FIN Flag Count", "SYN Flag Count", "RST Flag Count", "PSH Flag Count", "ACK Flag Count",
    "Subflow Fwd Packets", "Subflow Fwd Bytes", "Subflow Bwd Packets", "Subflow Bwd Bytes",
    "Init_Win_bytes_backward", "Act_data_pkt_forward",
    "Active Min", "Active Mean", "Active Max", "Active Std",
    "Idle Min", "Idle Mean", "Idle Max", "Idle Std",
    # discarded during preprocessing, kept so CSV output stays column-complete
    "Fwd PSH flag", "Fwd URG Flag", "Bwd URG Flag", "URG Flag Count", "CWR Flag Count",
    "ECE Flag Count", "Fwd Avg Bytes/Bulk", "Fwd AVG Packet/Bulk", "Fwd AVG Bulk Rate",
    "Bwd Avg Bytes/Bulk", "Bwd AVG Packet/Bulk", "Bwd AVG Bulk Rate",
    "Init_Win_bytes_forward", "Min_seg_size_forward",
)
N_FEATURES = len(FEATURE_NAMES)
RED_LIST: tuple[str, ...] = FEATURE_NAMES[63:]
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# Column spellings used by CICFlowMeter releases and public CSV corpora.
ALIASES = {
    "Flow Byts/s": "Flow Byte/s", "Flow Bytes/s": "Flow Byte/s",
    "Flow Pkts/s": "Flow Packets/s",
    "Total Fwd Packets": "Tot Fwd Pkts", "Total Fwd Packet": "Tot Fwd Pkts",
    "Total Backward Packets": "Tot Bwd Pkts", "Total Bwd packets": "Tot Bwd Pkts",
    "Total Length of Fwd Packets": "TotLen Fwd Pkts", "Total Length of Fwd Packet": "TotLen Fwd Pkts",
    "Total Length of Bwd Packets": "TotLen Bwd Pkts", "Total Length of Bwd Packet": "TotLen Bwd Pkts",
    "Fwd Packet Length Max": "Fwd Pkt Len Max", "Fwd Packet Length Min": "Fwd Pkt Len Min",
    "Fwd Packet Length Mean": "Fwd Pkt Len Mean", "Fwd Packet Length Std": "Fwd Pkt Len Std",
    "Bwd Packet Length Max": "Bwd Pkt Len Max", "Bwd Packet Length Min": "Bwd Pkt Len Min",
    "Bwd Packet Length Mean": "Bwd Pkt Len Mean", "Bwd Packet Length Std": "Bwd Pkt Len Std",
    "Fwd IAT Tot": "Fwd IAT Total", "Bwd IAT Tot": "Bwd IAT Total",
    "Bwd Header Len": "Bwd Header Length", "Fwd Header Length.1": "Fwd Header Len",
    "Fwd Pkts/s": "FWD Packets/s", "Fwd Packets/s": "FWD Packets/s", "Bwd Pkts/s": "Bwd Packets/s",
    "Pkt Len Min": "Min Packet Length", "Packet Length Min": "Min Packet Length",
    "Pkt Len Max": "Max Packet Length", "Packet Length Max": "Max Packet Length",
    "Pkt Len Mean": "Packet Length Mean", "Pkt Len Std": "Packet Length Std",
    "Pkt Len Var": "Packet Length Variance",
    "Pkt Size Avg": "Average Packet Size", "Fwd Seg Size Avg": "Avg Fwd Segment Size",
    "Bwd Seg Size Avg": "AVG Bwd Segment Size", "Avg Bwd Segment Size": "AVG Bwd Segment Size",
    "Bwd PSH Flags": "Bwd PSH Flag", "Fwd PSH Flags": "Fwd PSH flag",
    "Fwd URG Flags": "Fwd URG Flag", "Bwd URG Flags": "Bwd URG Flag",
    "FIN Flag Cnt": "FIN Flag Count", "SYN Flag Cnt": "SYN Flag Count",
    "RST Flag Cnt": "RST Flag Count", "PSH Flag Cnt": "PSH Flag Count",
    "ACK Flag Cnt": "ACK Flag Count", "URG Flag Cnt": "URG Flag Count",
    "CWE Flag Count": "CWR Flag Count", "ECE Flag Cnt": "ECE Flag Count",
    "Subflow Fwd Pkts": "Subflow Fwd Packets", "Subflow Fwd Byts": "Subflow Fwd Bytes",
    "Subflow Bwd Pkts": "Subflow Bwd Packets", "Subflow Bwd Byts": "Subflow Bwd Bytes",
    "Init Bwd Win Byts": "Init_Win_bytes_backward", "Init Fwd Win Byts": "Init_Win_bytes_forward",
    "Fwd Act Data Pkts": "Act_data_pkt_forward", "Fwd Seg Size Min": "Min_seg_size_forward",
    "Fwd Byts/b Avg": "Fwd Avg Bytes/Bulk", "Fwd Pkts/b Avg": "Fwd AVG Packet/Bulk",
    "Fwd Blk Rate Avg": "Fwd AVG Bulk Rate", "Bwd Byts/b Avg": "Bwd Avg Bytes/Bulk",
    "Bwd Pkts/b Avg": "Bwd AVG Packet/Bulk", "Bwd Blk Rate Avg": "Bwd AVG Bulk Rate",
}

SUBFLOW_GAP_US = 1_000_000
BULK_GAP_US = 1_000_000
BULK_MIN_PACKETS = 4
LABEL_COLUMN = "Label"


def canonical_name(name: str) -> str:
    name = name.strip()
    if name in FEATURE_INDEX:
        return name
    try:
        return ALIASES[name]
    except KeyError:
        raise KeyError(f"unknown feature {name!r}") from None


def feature_index(name: str) -> int:
    return FEATURE_INDEX[canonical_name(name)]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} values, got shape {self.values.shape}")

    def __getitem__(self, name: str) -> float:
        return float(self.values[feature_index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


@dataclass
class FeatureMatrix:
    """Rows of feature values with optional labels and an active-feature mask.

    ``names`` defaults to the 77 flow features; other name lists are allowed so
    small synthetic problems can flow through the same code.
    """

    values: np.ndarray
    labels: list[str] | None = None
    active_mask: np.ndarray | None = None
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, len(self.names))
        if self.active_mask is None:
            self.active_mask = np.ones(len(self.names), dtype=bool)
        self.active_mask = np.asarray(self.active_mask, dtype=bool)
        if self.active_mask.shape != (len(self.names),):
            raise ValueError("active_mask length must match feature count")
        if self.labels is not None:
            self.labels = [str(v) for v in self.labels]
            if len(self.labels) != len(self.values):
                raise ValueError(f"{len(self.labels)} labels for {len(self.values)} rows")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def X(self) -> np.ndarray:
        """Values restricted to active features."""
        return self.values[:, self.active_mask]

    @property
    def active_names(self) -> list[str]:
        return [n for n, keep in zip(self.names, self.active_mask) if keep]

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(self.values[i].copy())

    def take(self, idx: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=int)
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return replace(self, values=self.values[idx], labels=labels, active_mask=self.active_mask.copy())

    def with_mask(self, mask: np.ndarray) -> "FeatureMatrix":
        return replace(self, active_mask=np.asarray(mask, dtype=bool).copy(),
                       labels=None if self.labels is None else list(self.labels))

    @classmethod
    def from_vectors(cls, rows: Iterable[FeatureVector], labels=None) -> "FeatureMatrix":
        vals = [r.values for r in rows]
        arr = np.vstack(vals) if vals else np.empty((0, N_FEATURES))
        return cls(arr, labels=labels)


def _stats(xs: Sequence[float]) -> tuple[float, float, float, float]:
    """(min, mean, max, population std); zeros for an empty sequence."""
    if len(xs) == 0:
        return 0.0, 0.0, 0.0, 0.0
    a = np.asarray(xs, dtype=float)
    return float(a.min()), float(a.mean()), float(a.max()), float(a.std())


def _diffs(ts: Sequence[int]) -> list[int]:
    return [b - a for a, b in zip(ts, ts[1:])]


def _rate(count: float, duration_us: int) -> float:
    return count * 1_000_000 / duration_us if duration_us > 0 else 0.0


def _active_idle(ts: Sequence[int], threshold_us: int) -> tuple[list[int], list[int]]:
    active, idle = [], []
    start = end = ts[0]
    for t in ts[1:]:
        if t - end > threshold_us:
            if end - start > 0:
                active.append(end - start)
            idle.append(t - end)
            start = end = t
        else:
            end = t
    if end - start > 0:
        active.append(end - start)
    return active, idle


def _bulk(pkts, direction: str) -> tuple[float, float, float]:
    """(bytes per bulk, packets per bulk, bulk bytes per second) for one direction.

    A bulk is a run of >= 4 payload-carrying packets in one direction, each within
    1 s of the previous, not interrupted by payload in the other direction.
    """
    bulks = []  # (bytes, packets, duration_us)
    run = []
    for p in pkts:
        if p.payload_len == 0:
            continue
        if p.direction != direction:
            if len(run) >= BULK_MIN_PACKETS:
                bulks.append(run)
            run = []
            continue
        if run and p.timestamp - run[-1].timestamp > BULK_GAP_US:
            if len(run) >= BULK_MIN_PACKETS:
                bulks.append(run)
            run = []
        run.append(p)
    if len(run) >= BULK_MIN_PACKETS:
        bulks.append(run)
    if not bulks:
        return 0.0, 0.0, 0.0
    nbytes = sum(p.payload_len for b in bulks for p in b)
    npkts = sum(len(b) for b in bulks)
    dur = sum(b[-1].timestamp - b[0].timestamp for b in bulks)
    return nbytes / len(bulks), npkts / len(bulks), _rate(nbytes, dur)


def _sort_key(p):
    return (p.timestamp, p.direction != FORWARD, p.payload_len, p.l4_header_len, p.ip_total_len,
            tuple(sorted(p.tcp_flags)), -2 if p.tcp_window is None else p.tcp_window)


def compute_features(flow: FlowBuffer) -> FeatureVector:
    """Compute the 77 features of one flow.

    Packet length means transport payload bytes; header length is the transport
    header (TCP data offset or 8 for UDP). Times are microseconds, rates per second.
    """
    if not flow.packets:
        raise ValueError("flow has no packets")
    pkts = sorted(flow.packets, key=_sort_key)
    fwd = [p for p in pkts if p.direction == FORWARD]
    bwd = [p for p in pkts if p.direction != FORWARD]
    ts = [p.timestamp for p in pkts]
    duration = ts[-1] - ts[0]

    f = {}
    f["Flow Duration"] = duration
    f["Tot Fwd Pkts"] = len(fwd)
    f["Tot Bwd Pkts"] = len(bwd)
    fwd_len = [p.payload_len for p in fwd]
    bwd_len = [p.payload_len for p in bwd]
    all_len = [p.payload_len for p in pkts]
    f["TotLen Fwd Pkts"] = sum(fwd_len)
    f["TotLen Bwd Pkts"] = sum(bwd_len)
    for prefix, lens in (("Fwd", fwd_len), ("Bwd", bwd_len)):
        lo, mean, hi, std = _stats(lens)
        f[f"{prefix} Pkt Len Max"] = hi
        f[f"{prefix} Pkt Len Min"] = lo
        f[f"{prefix} Pkt Len Mean"] = mean
        f[f"{prefix} Pkt Len Std"] = std

    f["Flow Byte/s"] = _rate(sum(all_len), duration)
    f["Flow Packets/s"] = _rate(len(pkts), duration)

    lo, mean, hi, std = _stats(_diffs(ts))
    f["Flow IAT Mean"], f["Flow IAT Std"], f["Flow IAT Max"], f["Flow IAT Min"] = mean, std, hi, lo
    for prefix, group in (("Fwd", fwd), ("Bwd", bwd)):
        iat = _diffs([p.timestamp for p in group])
        lo, mean, hi, std = _stats(iat)
        f[f"{prefix} IAT Min"] = lo
        f[f"{prefix} IAT Max"] = hi
        f[f"{prefix} IAT Mean"] = mean
        f[f"{prefix} IAT Std"] = std
        f[f"{prefix} IAT Total"] = sum(iat)

    fwd_hdr = sum(p.l4_header_len for p in fwd)
    f["Fwd Header Length"] = fwd_hdr
    f["Bwd Header Length"] = sum(p.l4_header_len for p in bwd)
    f["FWD Packets/s"] = _rate(len(fwd), duration)
    f["Bwd Packets/s"] = _rate(len(bwd), duration)

    lo, mean, hi, std = _stats(all_len)
    f["Min Packet Length"] = lo
    f["Max Packet Length"] = hi
    f["Packet Length Mean"] = mean
    f["Packet Length Std"] = std
    f["Packet Length Variance"] = std * std
    f["Down/Up Ratio"] = len(bwd) / len(fwd) if fwd else 0.0
    f["Average Packet Size"] = sum(all_len) / len(pkts)
    f["Fwd Header Len"] = fwd_hdr
    f["Avg Fwd Segment Size"] = sum(fwd_len) / len(fwd) if fwd else 0.0
    f["AVG Bwd Segment Size"] = sum(bwd_len) / len(bwd) if bwd else 0.0

    def flag_count(group, flag):
        return sum(1 for p in group if flag in p.tcp_flags)

    f["Bwd PSH Flag"] = flag_count(bwd, "PSH")
    f["FIN Flag Count"] = flag_count(pkts, "FIN")
    f["SYN Flag Count"] = flag_count(pkts, "SYN")
    f["RST Flag Count"] = flag_count(pkts, "RST")
    f["PSH Flag Count"] = flag_count(pkts, "PSH")
    f["ACK Flag Count"] = flag_count(pkts, "ACK")

    subflows = 1 + sum(1 for gap in _diffs(ts) if gap > SUBFLOW_GAP_US)
    f["Subflow Fwd Packets"] = len(fwd) / subflows
    f["Subflow Fwd Bytes"] = sum(fwd_len) / subflows
    f["Subflow Bwd Packets"] = len(bwd) / subflows
    f["Subflow Bwd Bytes"] = sum(bwd_len) / subflows

    bwd_win = [p.tcp_window for p in bwd if p.tcp_window is not None]
    fwd_win = [p.tcp_window for p in fwd if p.tcp_window is not None]
    f["Init_Win_bytes_backward"] = bwd_win[0] if bwd_win else -1
    f["Act_data_pkt_forward"] = sum(1 for p in fwd if p.payload_len >= 1)

    threshold = int(round(flow.activity_timeout * 1_000_000))
    active, idle = _active_idle(ts, threshold)
    for prefix, series in (("Active", active), ("Idle", idle)):
        lo, mean, hi, std = _stats(series)
        f[f"{prefix} Min"], f[f"{prefix} Mean"], f[f"{prefix} Max"], f[f"{prefix} Std"] = lo, mean, hi, std

    f["Fwd PSH flag"] = flag_count(fwd, "PSH")
    f["Fwd URG Flag"] = flag_count(fwd, "URG")
    f["Bwd URG Flag"] = flag_count(bwd, "URG")
    f["URG Flag Count"] = flag_count(pkts, "URG")
    f["CWR Flag Count"] = flag_count(pkts, "CWR")
    f["ECE Flag Count"] = flag_count(pkts, "ECE")
    for prefix, direction in (("Fwd", FORWARD), ("Bwd", "backward")):
        per_bytes, per_pkts, rate = _bulk(pkts, direction)
        f[f"{prefix} Avg Bytes/Bulk"] = per_bytes
        f[f"{prefix} AVG Packet/Bulk"] = per_pkts
        f[f"{prefix} AVG Bulk Rate"] = rate
    f["Init_Win_bytes_forward"] = fwd_win[0] if fwd_win else -1
    f["Min_seg_size_forward"] = min(p.l4_header_len for p in fwd) if fwd else 0

    return FeatureVector(np.array([float(f[name]) for name in FEATURE_NAMES]))


def extract_matrix(flows: Iterable[FlowBuffer], label: str | None = None) -> FeatureMatrix:
    flows = list(flows)
    labels = [label] * len(flows) if label is not None else None
    return FeatureMatrix.from_vectors((compute_features(fl) for fl in flows), labels=labels)


def prune_static(m: FeatureMatrix) -> FeatureMatrix:
    """Mask the red-listed features, then every feature that never varies."""
    if len(m) < 2:
        raise ValueError("need at least 2 rows to estimate variance")
    mask = m.active_mask.copy()
    for name in RED_LIST:
        if name in m.names:
            mask[m.names.index(name)] = False
    mask &= m.values.std(axis=0, ddof=1) > 0
    return m.with_mask(mask)


def format_value(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_csv(m: FeatureMatrix, dest: str | Path | io.TextIOBase) -> None:
    """Write all columns (not just active ones) plus ``Label`` when labels exist."""
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", newline="") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        header = list(m.names) + ([LABEL_COLUMN] if m.labels is not None else [])
        w.writerow(header)
        for i, row in enumerate(m.values):
            cells = [format_value(v) for v in row]
            if m.labels is not None:
                cells.append(m.labels[i])
            w.writerow(cells)
    finally:
        if own:
            fh.close()


def read_csv(src: str | Path | io.TextIOBase) -> FeatureMatrix:
    """Load a feature CSV; columns are matched by name (aliases accepted), extras ignored."""
    own = isinstance(src, (str, Path))
    fh = open(src, newline="") if own else src
    try:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {}
        label_col = None
        for j, raw in enumerate(header):
            name = raw.strip()
            if name == LABEL_COLUMN:
                label_col = j
                continue
            try:
                canon = canonical_name(name)
            except KeyError:
                continue
            cols.setdefault(canon, j)
        missing = [n for n in FEATURE_NAMES if n not in cols]
        if missing:
            raise ValueError(f"CSV lacks feature columns: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        order = [cols[n] for n in FEATURE_NAMES]
        values, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                values.append([float(rec[j]) for j in order])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            if label_col is not None:
                labels.append(rec[label_col].strip())
    finally:
        if own:
            fh.close()
    arr = np.array(values, dtype=float).reshape(-1, N_FEATURES)
    return FeatureMatrix(arr, labels=labels if label_col is not None else None)
