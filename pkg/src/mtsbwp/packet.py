"""Packet-level marking against a multi-timescale profile and a FIFO with
drop-largest-DP-from-head AQM.

Token levels are kept in Gbit, packet sizes are bytes.  Drop precedences are
1-based integers as they appear on the wire; ``None`` means red (no DP fits).
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .profile import ProfileConfig, packet_bucket_sizes

GBIT_PER_BYTE = 8e-9


@dataclass
class Packet:
    size: int  # bytes
    arrival: float  # s
    dp: int | None = None

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ValueError(f"packet size must be positive, got {self.size}")


class Marker:
    """Token-bucket marker holding one bucket per (DP, timescale).

    Buckets start full and refill continuously at ``R[dp, ts]`` up to
    ``caps[dp, ts]``.  ``caps`` defaults to the profile's bucket sizes raised
    to the packet-level minimum for ``mtu``/``rtt``.
    """

    def __init__(
        self,
        profile: ProfileConfig,
        caps: np.ndarray | None = None,
        mtu: int = 1500,
        rtt: float = 0.0,
        start: float = 0.0,
    ):
        self.profile = profile
        if caps is None:
            caps = packet_bucket_sizes(profile.bs, profile.r, mtu, rtt)
        self.caps = np.array(caps, dtype=float)
        self.tokens = self.caps.copy()
        self.last = start

    def refill(self, now: float) -> None:
        if now < self.last:
            raise ValueError(f"time went backwards: {now} < {self.last}")
        dt = now - self.last
        if dt > 0:
            np.minimum(self.caps, self.tokens + self.profile.r * dt, out=self.tokens)
        self.last = now

    def mark(self, size: int, now: float) -> int | None:
        """Return the lowest DP whose buckets all hold ``size`` bytes, and charge them."""
        self.refill(now)
        need = size * GBIT_PER_BYTE
        fits = np.all(self.tokens >= need, axis=1)
        if not fits.any():
            return None
        dp = int(np.argmax(fits))
        self.tokens[dp] -= need
        return dp + 1


@dataclass
class DpFifo:
    """Byte-limited FIFO; on overflow drops the head-most packet of the largest DP."""

    capacity: int  # bytes
    packets: deque[Packet] = field(default_factory=deque)
    occupancy: int = 0

    def enqueue(self, p: Packet) -> list[Packet]:
        if p.dp is None:
            raise ValueError("red packets must be dropped before the queue")
        if p.size > self.capacity:
            return [p]
        dropped: list[Packet] = []
        while self.occupancy + p.size > self.capacity:
            worst = max(q.dp for q in self.packets)
            # ties go against the arriving packet
            if p.dp >= worst:
                dropped.append(p)
                return dropped
            for i, q in enumerate(self.packets):
                if q.dp == worst:
                    del self.packets[i]
                    self.occupancy -= q.size
                    dropped.append(q)
                    break
        self.packets.append(p)
        self.occupancy += p.size
        return dropped

    def dequeue(self) -> Packet | None:
        if not self.packets:
            return None
        p = self.packets.popleft()
        self.occupancy -= p.size
        return p

    def __len__(self) -> int:
        return len(self.packets)


def mark_trace(marker: Marker, packets: Iterable[Packet]) -> Iterator[Packet]:
    """Mark packets in arrival order, yielding them with ``dp`` filled in."""
    for p in packets:
        p.dp = marker.mark(p.size, p.arrival)
        yield p


def read_packet_trace(path: str | Path) -> list[Packet]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            dp = row.get("dp") or None
            if dp is not None:
                dp = None if dp == "red" else int(dp)
            out.append(Packet(int(row["size_bytes"]), float(row["arrival_time_s"]), dp))
    return out


def write_packet_trace(path: str | Path, packets: Iterable[Packet], marked: bool = True) -> None:
    """Write ``arrival_time_s,size_bytes[,dp]``; unmarked traces omit the dp column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arrival_time_s", "size_bytes", "dp"][: 3 if marked else 2])
        for p in packets:
            row = [repr(p.arrival), p.size]
            if marked:
                row.append("red" if p.dp is None else p.dp)
            w.writerow(row)
