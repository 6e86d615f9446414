"""Multi-timescale bandwidth profiles: dimensioning, validation and JSON I/O.

Units used throughout the package: rates in Gbps, data in Gbit, time in
seconds.  File sizes given in GByte at the JSON boundary are multiplied by 8.
Matrices are indexed ``[dp, ts]`` with zero-based indices, so the conventional
"DP 1" is row 0 here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

GBYTE = 8.0  # Gbit per GByte
BITS_PER_BYTE = 8.0

# absolute tolerance for rate/size comparisons during validation
TOL = 1e-9


class ProfileError(ValueError):
    """Requirements or matrices that cannot form a usable profile."""


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Requirements:
    """Service requirements a profile is dimensioned against.

    ``guaranteed`` has one entry per timescale, ``speeds`` and ``file_sizes``
    one entry per predefined file size (one fewer than timescales).
    """

    capacity: float
    nodes: int
    guaranteed: tuple[float, ...]
    speeds: tuple[float, ...]
    file_sizes: tuple[float, ...]  # Gbit
    ts_last: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "guaranteed", tuple(float(g) for g in self.guaranteed))
        object.__setattr__(self, "speeds", tuple(float(b) for b in self.speeds))
        object.__setattr__(self, "file_sizes", tuple(float(s) for s in self.file_sizes))

    @property
    def nominal_speed(self) -> float:
        return self.capacity / self.nodes

    @property
    def effective_file_sizes(self) -> tuple[float, ...]:
        """File sizes with the last one recomputed from ``ts_last`` if given."""
        if self.ts_last is None:
            return self.file_sizes
        return self.file_sizes[:-1] + (self.ts_last * self.speeds[-1],)

    def check(self) -> None:
        g, bw, fs = self.guaranteed, self.speeds, self.file_sizes
        if self.nodes < 2:
            raise ProfileError(f"need at least 2 nodes, got {self.nodes}")
        if self.capacity <= 0:
            raise ProfileError("capacity must be positive")
        if len(bw) != len(fs) or len(bw) == 0:
            raise ProfileError("speeds and file_sizes must be non-empty and equally long")
        if len(g) != len(bw) + 1:
            raise ProfileError(
                f"need {len(bw) + 1} guaranteed speeds for {len(bw)} file sizes, got {len(g)}"
            )
        if any(b - a > TOL for a, b in zip(g, g[1:])):
            raise ProfileError(f"guaranteed speeds must be non-increasing: {g}")
        if any(b >= a for a, b in zip(bw, bw[1:])):
            raise ProfileError(f"download speeds must be strictly decreasing: {bw}")
        if any(b <= a for a, b in zip(fs, fs[1:])):
            raise ProfileError(f"file sizes must be strictly increasing: {fs}")
        if g[0] > self.nominal_speed + TOL:
            raise ProfileError(
                f"first guaranteed speed {g[0]} exceeds nominal speed {self.nominal_speed}"
            )
        if bw[-1] <= self.nominal_speed:
            raise ProfileError(
                f"slowest download speed {bw[-1]} must exceed nominal speed {self.nominal_speed}"
            )

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Requirements":
        if "file_sizes_gbyte" in d:
            sizes = [s * GBYTE for s in d["file_sizes_gbyte"]]
        else:
            sizes = list(d["file_sizes_gbit"])
        return cls(
            capacity=float(d["capacity_gbps"]),
            nodes=int(d["nodes"]),
            guaranteed=tuple(d["guaranteed_gbps"]),
            speeds=tuple(d["speeds_gbps"]),
            file_sizes=tuple(sizes),
            ts_last=d.get("ts_last_s"),
        )


def example1_requirements() -> Requirements:
    """The worked 5-node, 10 Gbps example with a 30 s longest timescale."""
    return Requirements(
        capacity=10.0,
        nodes=5,
        guaranteed=(2.0, 2.0, 2.0, 0.75),
        speeds=(6.0, 4.0, 3.0),
        file_sizes=(0.1 * GBYTE, 1.0 * GBYTE, 11.25 * GBYTE),
        ts_last=30.0,
    )


@dataclass(frozen=True)
class ProfileConfig:
    """Rate matrix ``r``, bucket sizes ``bs`` (both n_dp x n_ts) and timescales ``ts``."""

    r: np.ndarray
    bs: np.ndarray
    ts: np.ndarray = field(default_factory=lambda: _frozen([0.0]))

    def __post_init__(self) -> None:
        r = _frozen(self.r)
        bs = _frozen(self.bs)
        ts = _frozen(self.ts)
        if r.ndim != 2 or r.shape != bs.shape:
            raise ProfileError(f"r {r.shape} and bs {bs.shape} must be equal-shaped matrices")
        if ts.shape != (r.shape[1],):
            raise ProfileError(f"ts has {ts.size} entries for {r.shape[1]} timescales")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "bs", bs)
        object.__setattr__(self, "ts", ts)

    @property
    def n_dp(self) -> int:
        return self.r.shape[0]

    @property
    def n_ts(self) -> int:
        return self.r.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_dp": self.n_dp,
            "n_ts": self.n_ts,
            "r": self.r.tolist(),
            "bs": self.bs.tolist(),
            "ts": self.ts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProfileConfig":
        p = cls(r=d["r"], bs=d["bs"], ts=d.get("ts", [0.0] * len(d["r"][0])))
        if "n_dp" in d and d["n_dp"] != p.n_dp or "n_ts" in d and d["n_ts"] != p.n_ts:
            raise ProfileError("n_dp/n_ts do not match the matrix shapes")
        return p

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ProfileConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def dimension_rates(req: Requirements, free_fill: str = "hold") -> np.ndarray:
    """Build the 4-row rate matrix from service requirements.

    Row 0 carries the guaranteed speeds, row 1 tops them up to the download
    speeds, row 2 closes the return rule in the last column and row 3 is the
    work-conserving capacity row.  The unconstrained row-2 entries are set by
    ``free_fill``:

    ``"hold"``
        capacity everywhere except the last file-size column, which repeats
        the long-term rate.  This reproduces the worked example matrix.
    ``"capacity"``
        capacity everywhere; the return-rule entry is never above it, so the
        row stays non-increasing.
    """
    req.check()
    c, n, sn = req.capacity, req.nodes, req.nominal_speed
    g = np.array(req.guaranteed)
    bw = np.array(req.speeds)
    n_ts = g.size
    shared = (c - bw[0]) / (n - 1)

    r = np.empty((4, n_ts))
    r[0] = g
    r[1, :-1] = bw - g[:-1]
    r[1, -1] = shared - g[-1]
    r[2, -1] = sn - shared
    r[2, :-1] = c
    if free_fill == "hold":
        r[2, -2] = r[2, -1]
    elif free_fill != "capacity":
        raise ValueError(f"unknown free_fill {free_fill!r}")
    r[3] = c

    neg = np.argwhere(r < -TOL)
    if neg.size:
        dp, ts = neg[0]
        raise ProfileError(
            f"rate at DP {dp + 1}, TS {ts + 1} is negative ({r[dp, ts]:.6g}); "
            "requirements are infeasible"
        )
    bad = np.argwhere(np.diff(r, axis=1) > TOL)
    if bad.size:
        dp, ts = bad[0]
        raise ProfileError(
            f"row DP {dp + 1} increases between TS {ts + 1} and TS {ts + 2}; "
            "requirements are infeasible"
        )
    return r


def dimension_timescales(req: Requirements) -> np.ndarray:
    fs = np.array(req.effective_file_sizes)
    ts = np.concatenate([[0.0], fs / np.array(req.speeds)])
    if np.any(np.diff(ts) <= 0):
        raise ProfileError(f"timescales must be strictly increasing, got {ts.tolist()}")
    return ts


def dimension_bucket_sizes(r: Any, ts: Any) -> np.ndarray:
    """Bucket sizes such that a fresh node running at its own per-DP limit
    empties bucket ``(dp, ts)`` after ``ts[ts]`` seconds."""
    r = np.asarray(r, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if ts[0] != 0 or np.any(np.diff(ts) <= 0):
        raise ProfileError("timescales must start at 0 and strictly increase")
    n_dp, n_ts = r.shape
    dt = np.diff(ts)  # dt[k-1] = ts[k] - ts[k-1]
    bs = np.zeros((n_dp, n_ts))
    for j in range(1, n_ts):
        # sum over k=1..j of (ts[k]-ts[k-1]) * (r[:, k-1] - r[:, j])
        bs[:, j] = ((r[:, :j] - r[:, [j]]) * dt[:j]).sum(axis=1)
    if np.any(bs < -TOL):
        dp, j = np.argwhere(bs < -TOL)[0]
        raise ProfileError(f"negative bucket size at DP {dp + 1}, TS {j + 1}; rates not monotone")
    return np.maximum(bs, 0.0)


def dimension(req: Requirements, free_fill: str = "hold") -> ProfileConfig:
    r = dimension_rates(req, free_fill)
    ts = dimension_timescales(req)
    return ProfileConfig(r=r, bs=dimension_bucket_sizes(r, ts), ts=ts)


def adjusted_flow_speed(bw1: float, bw2: float, ts2: float, ts3: float) -> float:
    """Average speed of a second-size file that starts on the peak rate."""
    if not ts3 > ts2 > 0:
        raise ValueError("need ts3 > ts2 > 0")
    return (ts2 * bw1 + (ts3 - ts2) * bw2) / ts3


def solve_target_flow_speed(target: float, bw1: float, ts2: float, ts3: float) -> float:
    """Inverse of :func:`adjusted_flow_speed` in ``bw2``."""
    if not ts3 > ts2 > 0:
        raise ValueError("need ts3 > ts2 > 0")
    if target <= ts2 * bw1 / ts3:
        raise ValueError(
            f"target {target} unreachable: the peak phase alone gives {ts2 * bw1 / ts3:.6g}"
        )
    return (target * ts3 - ts2 * bw1) / (ts3 - ts2)


def packet_bucket_sizes(bs: Any, r: Any, mtu: float, rtt: float) -> np.ndarray:
    """Bucket sizes usable by a packet marker: at least one MTU (bytes) and one RTT of rate."""
    if mtu <= 0 or rtt < 0:
        raise ValueError("need mtu > 0 and rtt >= 0")
    mtu_gbit = mtu * BITS_PER_BYTE / 1e9
    bs = np.asarray(bs, dtype=float)
    return np.maximum(np.maximum(bs, mtu_gbit), np.asarray(r, dtype=float) * rtt)


def trtcm_profile(cir: float, eir: float, cbs: float = 0.0, ebs: float = 0.0) -> ProfileConfig:
    """Single-priority trTCM without token sharing as a 2-DP x 1-TS profile.

    Green maps to DP 1 and yellow to DP 2.
    """
    if cir < 0 or eir < 0:
        raise ProfileError("CIR and EIR must be non-negative")
    return ProfileConfig(r=[[cir], [eir]], bs=[[cbs], [ebs]], ts=[0.0])


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    rule: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def add(self, severity: str, rule: str, message: str) -> None:
        self.findings.append(Finding(severity, rule, message))

    def __str__(self) -> str:
        if not self.findings:
            return "profile OK"
        return "\n".join(f"{f.severity.upper():7} {f.rule}: {f.message}" for f in self.findings)


def validate(p: ProfileConfig, capacity: float, nodes: int) -> ValidationReport:
    """Check a profile for structural soundness on a link shared by ``nodes`` nodes.

    Rule ids: ``monotone``, ``negative-rate``, ``return-rule``,
    ``work-conserving``, ``guarantee``, ``timescales``, ``negative-bucket``
    (errors) and ``bucket-consistency``, ``fluid-first-bucket`` (warnings).
    """
    rep = ValidationReport()
    r, bs, ts = p.r, p.bs, p.ts
    sn = capacity / nodes

    for dp, ts_i in np.argwhere(np.diff(r, axis=1) > TOL):
        rep.add(
            "error",
            "monotone",
            f"R[{dp + 1},{ts_i + 2}]={r[dp, ts_i + 1]:g} exceeds R[{dp + 1},{ts_i + 1}]={r[dp, ts_i]:g}",
        )
    for dp, ts_i in np.argwhere(r < 0):
        rep.add("error", "negative-rate", f"R[{dp + 1},{ts_i + 1}]={r[dp, ts_i]:g} is negative")

    cum = np.cumsum(r[:, -1])
    if not np.any(np.abs(cum - sn) <= TOL):
        rep.add(
            "error",
            "return-rule",
            f"no prefix of the last column sums to the nominal speed {sn:g} (prefix sums {np.round(cum, 9).tolist()})",
        )

    # a lone active node with every bucket empty is limited to the column minima
    floor = r.min(axis=1).sum()
    if floor < capacity - TOL:
        rep.add(
            "error",
            "work-conserving",
            f"a single node with empty buckets can only reach {floor:g} < capacity {capacity:g}",
        )

    if r[0, 0] > sn + TOL:
        rep.add("error", "guarantee", f"R[1,1]={r[0, 0]:g} exceeds the nominal speed {sn:g}")

    if ts[0] != 0 or np.any(np.diff(ts) <= 0):
        rep.add("error", "timescales", f"timescales must start at 0 and increase: {ts.tolist()}")
    if np.any(bs < 0):
        rep.add("error", "negative-bucket", "bucket sizes must be non-negative")

    if np.any(bs[:, 0] != 0):
        rep.add("warning", "fluid-first-bucket", "first-timescale buckets are non-zero; the fluid model needs 0")
    if p.n_ts > 1 and not rep.errors:
        expected = dimension_bucket_sizes(r, ts)
        off = np.argwhere(np.abs(expected - bs) > 1e-6 * np.maximum(1.0, expected))
        if off.size:
            dp, ts_i = off[0]
            rep.add(
                "warning",
                "bucket-consistency",
                f"{len(off)} bucket size(s) differ from the timescale formula, "
                f"first at [{dp + 1},{ts_i + 1}]: {bs[dp, ts_i]:g} vs {expected[dp, ts_i]:g}",
            )
    return rep


def example1_profile() -> ProfileConfig:
    return dimension(example1_requirements())
