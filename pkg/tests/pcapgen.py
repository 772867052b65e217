"""Byte-level frame builders and the hand-built capture fixtures."""

import socket
import struct
from pathlib import Path

from flowcam.pcap import write_pcap

FIXTURES = Path(__file__).parent / "fixtures"

MAC_A = bytes.fromhex("020000000001")
MAC_B = bytes.fromhex("020000000002")
T0 = 1_600_000_000_000_000  # microseconds

FLAGS = {"FIN": 0x01, "SYN": 0x02, "RST": 0x04, "PSH": 0x08, "ACK": 0x10, "URG": 0x20, "ECE": 0x40, "CWR": 0x80}


def ipv4(src, dst, proto, l4: bytes) -> bytes:
    total = 20 + len(l4)
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, 0, 0x4000, 64, proto, 0,
                      socket.inet_aton(src), socket.inet_aton(dst))
    return hdr + l4


def ether(payload: bytes, ethertype=0x0800, src=MAC_A, dst=MAC_B) -> bytes:
    return dst + src + struct.pack("!H", ethertype) + payload


def tcp(src, sport, dst, dport, flags=(), window=65535, payload=0, options=b"") -> bytes:
    bits = 0
    for f in flags:
        bits |= FLAGS[f]
    offset = (20 + len(options)) // 4
    seg = struct.pack("!HHIIBBHHH", sport, dport, 0, 0, offset << 4, bits, window, 0, 0) + options
    return ether(ipv4(src, dst, 6, seg + bytes(payload)))


def udp(src, sport, dst, dport, payload=0) -> bytes:
    seg = struct.pack("!HHHH", sport, dport, 8 + payload, 0) + bytes(payload)
    return ether(ipv4(src, dst, 17, seg))


def arp() -> bytes:
    body = struct.pack("!HHBBH", 1, 0x0800, 6, 4, 1) + MAC_A + socket.inet_aton("10.0.0.1") + bytes(6) \
        + socket.inet_aton("10.0.0.2")
    return ether(body, ethertype=0x0806, dst=b"\xff" * 6)


A, B = "10.0.0.1", "10.0.0.2"
PA, PB = 40000, 80


def three_pkt():
    return [
        (T0, tcp(A, PA, B, PB, ["SYN"], window=64240)),
        (T0 + 1_000, tcp(B, PB, A, PA, ["SYN", "ACK"], window=65160)),
        (T0 + 1_500, tcp(A, PA, B, PB, ["ACK"], window=502)),
    ]


def tcp_fin_then_syn():
    return [
        (T0, tcp(A, PA, B, PB, ["SYN"], window=64240)),
        (T0 + 1_000, tcp(B, PB, A, PA, ["SYN", "ACK"], window=65160)),
        (T0 + 2_000, tcp(A, PA, B, PB, ["ACK"], window=502)),
        (T0 + 3_000, tcp(A, PA, B, PB, ["PSH", "ACK"], window=502, payload=100)),
        (T0 + 5_000, tcp(B, PB, A, PA, ["ACK"], window=509)),
        (T0 + 6_000, tcp(A, PA, B, PB, ["FIN", "ACK"], window=502)),
        (T0 + 8_000, tcp(B, PB, A, PA, ["FIN", "ACK"], window=509)),
        (T0 + 20_000, tcp(A, PA, B, PB, ["SYN"], window=64240)),
    ]


def udp_timeout():
    return [
        (T0, udp(A, 5000, B, 6000, payload=10)),
        (T0 + 601_000_000, udp(A, 5000, B, 6000, payload=20)),
    ]


def one_pkt_udp():
    return [(T0, udp(A, 5353, B, 5353, payload=50))]


def tcp_no_backward():
    return [
        (T0, tcp(A, PA, B, PB, ["SYN"], window=64240)),
        (T0 + 1_000_000, tcp(A, PA, B, PB, ["SYN"], window=64240)),
        (T0 + 3_000_000, tcp(A, PA, B, PB, ["SYN"], window=64240)),
    ]


def udp_arp_udp():
    return [
        (T0, udp(A, 5000, B, 6000, payload=10)),
        (T0 + 100, arp()),
        (T0 + 200, udp(B, 6000, A, 5000, payload=30)),
    ]


def tcp_rst_idle():
    """Data in two bursts separated by 7 s of silence, closed by RST."""
    return [
        (T0, tcp(A, PA, B, PB, ["PSH", "ACK"], window=1000, payload=200)),
        (T0 + 500_000, tcp(B, PB, A, PA, ["PSH", "ACK"], window=2000, payload=1000)),
        (T0 + 1_000_000, tcp(A, PA, B, PB, ["ACK"], window=1000)),
        (T0 + 8_000_000, tcp(A, PA, B, PB, ["PSH", "ACK"], window=1000, payload=300)),
        (T0 + 8_250_000, tcp(B, PB, A, PA, ["RST", "ACK"], window=0)),
    ]


CAPTURES = {
    "three_pkt": three_pkt,
    "tcp_fin_then_syn": tcp_fin_then_syn,
    "udp_timeout": udp_timeout,
    "one_pkt_udp": one_pkt_udp,
    "tcp_no_backward": tcp_no_backward,
    "udp_arp_udp": udp_arp_udp,
    "tcp_rst_idle": tcp_rst_idle,
}


def build_all(dest: Path = FIXTURES) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    for name, make in CAPTURES.items():
        write_pcap(dest / f"{name}.pcap", make())
    write_pcap(dest / "three_pkt_ns_be.pcap", three_pkt(), nanosecond=True, big_endian=True)
    write_pcap(dest / "empty.pcap", [])


if __name__ == "__main__":
    build_all()
