"""Classic libpcap reader producing per-packet summaries for IPv4 TCP/UDP traffic."""

from __future__ import annotations

import ipaddress
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator

logger = logging.getLogger(__name__)

LINKTYPE_ETHERNET = 1

ETH_IPV4 = 0x0800
ETH_VLAN = (0x8100, 0x88A8)
PROTO_TCP = 6
PROTO_UDP = 17

TCP_FLAG_BITS = {
    "FIN": 0x01,
    "SYN": 0x02,
    "RST": 0x04,
    "PSH": 0x08,
    "ACK": 0x10,
    "URG": 0x20,
    "ECE": 0x40,
    "CWR": 0x80,
}

# magic -> (byte order, nanosecond resolution)
_MAGICS = {
    b"\xd4\xc3\xb2\xa1": ("<", False),
    b"\xa1\xb2\xc3\xd4": (">", False),
    b"\x4d\x3c\xb2\xa1": ("<", True),
    b"\xa1\xb2\x3c\x4d": (">", True),
}

FORWARD = "forward"
BACKWARD = "backward"


class PcapError(ValueError):
    """Unrecoverable problem with a capture file."""


@dataclass(frozen=True, order=True)
class FlowKey:
    """Bidirectional 5-tuple; endpoint a is the numerically smaller (addr, port)."""

    addr_a: str
    port_a: int
    addr_b: str
    port_b: int
    protocol: str  # "TCP" | "UDP"

    @classmethod
    def from_endpoints(cls, src: tuple[str, int], dst: tuple[str, int], protocol: str) -> "FlowKey":
        if protocol not in ("TCP", "UDP"):
            raise ValueError(f"unsupported protocol {protocol!r}")
        s = (int(ipaddress.IPv4Address(src[0])), src[1])
        d = (int(ipaddress.IPv4Address(dst[0])), dst[1])
        a, b = (src, dst) if s <= d else (dst, src)
        return cls(a[0], a[1], b[0], b[1], protocol)

    @property
    def endpoint_a(self) -> tuple[str, int]:
        return (self.addr_a, self.port_a)


@dataclass(frozen=True)
class PacketSummary:
    timestamp: int  # microseconds since epoch
    flow_key: FlowKey
    direction: str  # FORWARD | BACKWARD
    ip_total_len: int
    l4_header_len: int
    payload_len: int
    tcp_flags: frozenset = field(default_factory=frozenset)
    tcp_window: int | None = None
    src: tuple[str, int] = ("0.0.0.0", 0)

    @property
    def protocol(self) -> str:
        return self.flow_key.protocol


def parse_global_header(raw: bytes) -> tuple[str, bool, int]:
    """Return (byte order, nanosecond flag, link type) from the 24-byte header."""
    if len(raw) < 24:
        raise PcapError(f"global header truncated: {len(raw)} of 24 bytes")
    magic = raw[:4]
    if magic not in _MAGICS:
        raise PcapError(f"bad pcap magic {magic.hex()}")
    endian, nano = _MAGICS[magic]
    _, _, _, _, _, linktype = struct.unpack(endian + "HHiIII", raw[4:24])
    return endian, nano, linktype


def decode_frame(frame: bytes, ts_us: int) -> PacketSummary | None:
    """Decode one Ethernet frame; None when it is not an IPv4 TCP/UDP packet."""
    if len(frame) < 14:
        return None
    off = 12
    ethertype = struct.unpack_from("!H", frame, off)[0]
    off += 2
    while ethertype in ETH_VLAN:
        if len(frame) < off + 4:
            return None
        ethertype = struct.unpack_from("!H", frame, off + 2)[0]
        off += 4
    if ethertype != ETH_IPV4 or len(frame) < off + 20:
        return None

    ver_ihl, _, total_len, _, frag, _, proto = struct.unpack_from("!BBHHHBB", frame, off)
    if ver_ihl >> 4 != 4:
        return None
    ihl = (ver_ihl & 0x0F) * 4
    if frag & 0x1FFF:
        # non-first fragment carries no transport header
        return None
    if proto not in (PROTO_TCP, PROTO_UDP):
        return None
    src_ip = str(ipaddress.IPv4Address(frame[off + 12:off + 16]))
    dst_ip = str(ipaddress.IPv4Address(frame[off + 16:off + 20]))
    l4 = off + ihl

    if proto == PROTO_TCP:
        if len(frame) < l4 + 20:
            return None
        sport, dport, _, _, offs, flag_byte, window = struct.unpack_from("!HHIIBBH", frame, l4)
        l4_len = (offs >> 4) * 4
        flags = frozenset(name for name, bit in TCP_FLAG_BITS.items() if flag_byte & bit)
        protocol = "TCP"
    else:
        if len(frame) < l4 + 8:
            return None
        sport, dport = struct.unpack_from("!HH", frame, l4)
        l4_len = 8
        flags = frozenset()
        window = None
        protocol = "UDP"

    payload = max(total_len - ihl - l4_len, 0)
    key = FlowKey.from_endpoints((src_ip, sport), (dst_ip, dport), protocol)
    direction = FORWARD if (src_ip, sport) == key.endpoint_a else BACKWARD
    return PacketSummary(
        timestamp=ts_us,
        flow_key=key,
        direction=direction,
        ip_total_len=total_len,
        l4_header_len=l4_len,
        payload_len=payload,
        tcp_flags=flags,
        tcp_window=window,
        src=(src_ip, sport),
    )


class PcapReader:
    """Iterate PacketSummary records of a classic pcap file.

    After iteration ``read`` holds the number of records consumed, ``skipped``
    the frames that were not IPv4 TCP/UDP and ``truncated`` whether the file
    ended inside a record.
    """

    def __init__(self, source: str | Path | BinaryIO):
        if isinstance(source, (str, Path)):
            self._fh: BinaryIO = open(source, "rb")
            self._owned = True
        else:
            self._fh = source
            self._owned = False
        self.endian, self.nanosecond, self.linktype = parse_global_header(self._fh.read(24))
        if self.linktype != LINKTYPE_ETHERNET:
            self.close()
            raise PcapError(f"unsupported link type {self.linktype}")
        self.read = 0
        self.skipped = 0
        self.truncated = False

    def close(self) -> None:
        if self._owned:
            self._fh.close()

    def __enter__(self) -> "PcapReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __iter__(self) -> Iterator[PacketSummary]:
        rec = struct.Struct(self.endian + "IIII")
        try:
            while True:
                head = self._fh.read(16)
                if not head:
                    return
                if len(head) < 16:
                    self._truncate()
                    return
                sec, frac, incl, _ = rec.unpack(head)
                frame = self._fh.read(incl)
                if len(frame) < incl:
                    self._truncate()
                    return
                self.read += 1
                ts = sec * 1_000_000 + (frac // 1000 if self.nanosecond else frac)
                pkt = decode_frame(frame, ts)
                if pkt is None:
                    self.skipped += 1
                    continue
                yield pkt
        finally:
            self.close()

    def _truncate(self) -> None:
        self.truncated = True
        logger.warning("truncated packet record after %d packets", self.read)


def read_pcap(path: str | Path | BinaryIO) -> PcapReader:
    return PcapReader(path)


def write_pcap(path: str | Path, frames: list[tuple[int, bytes]], *, nanosecond: bool = False,
               big_endian: bool = False, linktype: int = LINKTYPE_ETHERNET) -> None:
    """Write (timestamp_us, frame bytes) records as a classic pcap file."""
    endian = ">" if big_endian else "<"
    magic = 0xA1B23C4D if nanosecond else 0xA1B2C3D4
    with open(path, "wb") as fh:
        fh.write(struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype))
        for ts, frame in frames:
            sec, us = divmod(ts, 1_000_000)
            frac = us * 1000 if nanosecond else us
            fh.write(struct.pack(endian + "IIII", sec, frac, len(frame), len(frame)))
            fh.write(frame)
