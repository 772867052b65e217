"""Bidirectional flow assembly with a 600 s window and TCP FIN/RST closure."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, replace
from typing import Iterable

from .pcap import BACKWARD, FORWARD, FlowKey, PacketSummary

DEFAULT_FLOW_TIMEOUT = 600.0
DEFAULT_ACTIVITY_TIMEOUT = 5.0
REORDER_WINDOW_US = 1_000_000


class OutOfOrderError(ValueError):
    """A packet arrived earlier than the reorder window allows."""


@dataclass(frozen=True)
class FlowBuffer:
    key: FlowKey
    first_ts: int
    packets: tuple[PacketSummary, ...]
    forward_endpoint: tuple[str, int]
    activity_timeout: float = DEFAULT_ACTIVITY_TIMEOUT

    @property
    def last_ts(self) -> int:
        return self.packets[-1].timestamp

    def __len__(self) -> int:
        return len(self.packets)


class _OpenFlow:
    __slots__ = ("key", "first_ts", "forward", "packets", "fin_fwd", "fin_bwd", "order")

    def __init__(self, pkt: PacketSummary, order: int):
        self.key = pkt.flow_key
        self.first_ts = pkt.timestamp
        self.forward = pkt.src
        self.packets: list[PacketSummary] = []
        self.fin_fwd = False
        self.fin_bwd = False
        self.order = order

    def add(self, pkt: PacketSummary) -> bool:
        """Append the packet; True when the flow is now closed."""
        fwd = pkt.src == self.forward
        self.packets.append(replace(pkt, direction=FORWARD if fwd else BACKWARD))
        if pkt.protocol != "TCP":
            return False
        if "RST" in pkt.tcp_flags:
            return True
        if "FIN" in pkt.tcp_flags:
            if fwd:
                self.fin_fwd = True
            else:
                self.fin_bwd = True
        return self.fin_fwd and self.fin_bwd

    def freeze(self, activity_timeout: float) -> FlowBuffer:
        return FlowBuffer(self.key, self.first_ts, tuple(self.packets), self.forward, activity_timeout)


def _reorder(packets: Iterable[PacketSummary], window_us: int):
    """Re-sequence a nearly sorted stream; ties keep arrival order."""
    heap: list = []
    counter = itertools.count()
    newest = None
    for pkt in packets:
        if newest is not None and pkt.timestamp < newest - window_us:
            raise OutOfOrderError(
                f"packet at {pkt.timestamp} us is more than {window_us} us older than {newest} us")
        newest = pkt.timestamp if newest is None else max(newest, pkt.timestamp)
        heapq.heappush(heap, (pkt.timestamp, next(counter), pkt))
        while heap and heap[0][0] < newest - window_us:
            yield heapq.heappop(heap)[2]
    while heap:
        yield heapq.heappop(heap)[2]


def assemble_flows(packets: Iterable[PacketSummary], flow_timeout: float = DEFAULT_FLOW_TIMEOUT,
                   activity_timeout: float = DEFAULT_ACTIVITY_TIMEOUT,
                   reorder_window_us: int = REORDER_WINDOW_US) -> list[FlowBuffer]:
    """Group packets into flows, ordered by first packet time."""
    timeout_us = int(round(flow_timeout * 1_000_000))
    open_flows: dict[FlowKey, _OpenFlow] = {}
    done: list[_OpenFlow] = []
    order = itertools.count()

    for pkt in _reorder(packets, reorder_window_us):
        flow = open_flows.get(pkt.flow_key)
        if flow is not None and pkt.timestamp - flow.first_ts > timeout_us:
            done.append(open_flows.pop(pkt.flow_key))
            flow = None
        if flow is None:
            flow = _OpenFlow(pkt, next(order))
            open_flows[pkt.flow_key] = flow
        if flow.add(pkt):
            done.append(open_flows.pop(pkt.flow_key))

    done.extend(open_flows.values())
    done.sort(key=lambda f: (f.first_ts, f.order))
    return [f.freeze(activity_timeout) for f in done]
