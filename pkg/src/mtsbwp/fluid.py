"""Discrete-event fluid simulation of nodes sharing a bottleneck under a profile.

Between events the allocation is constant, so token levels and flow
remainders move linearly.  Events are flow arrivals, flow completions and
buckets running empty.  Flows inside a node share its throughput equally.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .alloc import AllocationResult, allocate, bounds
from .profile import ProfileConfig
from .traffic import Arrival

SNAP = 1e-12  # Gbit; bucket levels below this count as empty
FINISH_TOL = 1e-9  # Gbit
EVENT_ORDER = ("arrival", "finish", "bucket_empty")


class SimulationError(RuntimeError):
    pass


@dataclass
class FlowRecord:
    id: int
    node: int
    arrival: float
    size: float  # Gbit; inf for pinned background flows
    remaining: float
    finish: float | None = None

    @property
    def bandwidth(self) -> float:
        return self.size / (self.finish - self.arrival)


@dataclass
class TraceRecord:
    time: float
    kind: str
    th: np.ndarray  # per node
    th_dp: np.ndarray  # n_dp x n_nodes
    flows: np.ndarray  # flow count per node
    dp_c: int


@dataclass
class SimTrace:
    n_nodes: int
    n_dp: int
    capacity: float
    start: float = 0.0
    end: float = 0.0
    records: list[TraceRecord] = field(default_factory=list)
    completed: list[FlowRecord] = field(default_factory=list)
    discarded: list[FlowRecord] = field(default_factory=list)

    def intervals(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(t0, t1, th, flows)`` for each piecewise-constant interval."""
        if not self.records:
            z = np.zeros(0)
            return z, z, np.zeros((0, self.n_nodes)), np.zeros((0, self.n_nodes), dtype=int)
        t0 = np.array([r.time for r in self.records])
        t1 = np.append(t0[1:], self.end)
        th = np.array([r.th for r in self.records])
        fl = np.array([r.flows for r in self.records])
        return t0, t1, th, fl

    def write_csv(self, path: str | Path) -> None:
        """Long format: one row per (record, node, dp); dp ``all`` holds the node total."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "event", "node", "dp", "th_gbps", "flow_count", "dp_c"])
            for rec in self.records:
                for n in range(self.n_nodes):
                    f = int(rec.flows[n])
                    w.writerow([repr(rec.time), rec.kind, n, "all", repr(float(rec.th[n])), f, rec.dp_c])
                    for dp in range(self.n_dp):
                        w.writerow(
                            [repr(rec.time), rec.kind, n, dp + 1, repr(float(rec.th_dp[dp, n])), f, rec.dp_c]
                        )

    def summary(self) -> dict[str, Any]:
        t0, t1, th, fl = self.intervals()
        dt = t1 - t0
        return {
            "start_s": self.start,
            "end_s": self.end,
            "events": len(self.records),
            "completed_flows": len(self.completed),
            "discarded_flows": len(self.discarded),
            "served_gbit": (th * dt[:, None]).sum(axis=0).tolist(),
            "active_time_s": ((fl > 0) * dt[:, None]).sum(axis=0).tolist(),
        }


@dataclass
class SimState:
    """Everything needed to resume a run: time, token levels, active flows."""

    time: float
    tokens: np.ndarray
    flows: list[FlowRecord]
    pinned: list[int]


def bad_history_tokens(profile: ProfileConfig, n_nodes: int, nodes: Iterable[int]) -> np.ndarray:
    """Full buckets, except the longest-timescale buckets of every DP but the
    last are empty on the given nodes."""
    tokens = np.broadcast_to(profile.bs, (n_nodes, profile.n_dp, profile.n_ts)).copy()
    for n in nodes:
        tokens[n, :-1, -1] = 0.0
    return tokens


class FluidSim:
    """Event-driven engine; call :meth:`run_until` one or more times."""

    def __init__(
        self,
        profile: ProfileConfig,
        capacity: float,
        n_nodes: int,
        arrivals: Sequence[Arrival] = (),
        f_max: int = 20,
        tokens: np.ndarray | None = None,
        pinned: Sequence[int] | None = None,
        flows: Sequence[FlowRecord] = (),
        start: float = 0.0,
        check: bool = True,
    ):
        if np.any(profile.bs[:, 0] != 0):
            raise ValueError("fluid simulation needs zero-size first-timescale buckets")
        self.profile = profile
        self.r = profile.r
        self.bs = profile.bs
        self.capacity = capacity
        self.n = n_nodes
        self.f_max = f_max
        self.check = check
        if tokens is None:
            tokens = np.broadcast_to(profile.bs, (n_nodes, profile.n_dp, profile.n_ts))
        self.tokens = np.array(tokens, dtype=float)
        if self.tokens.shape != (n_nodes, profile.n_dp, profile.n_ts):
            raise ValueError(f"token state has shape {self.tokens.shape}")
        if np.any(self.tokens < 0) or np.any(self.tokens > self.bs + SNAP):
            raise ValueError("token levels must lie within [0, bucket size]")
        self.pinned = list(pinned) if pinned is not None else [0] * n_nodes
        self.t = start

        self.arrivals = sorted(arrivals, key=lambda a: (a.time, a.node))
        if self.arrivals and self.arrivals[0].time < start:
            raise ValueError("arrival before the simulation start")
        self._next_arrival = 0
        self._next_id = max((f.id for f in flows), default=-1) + 1

        # per-flow service counter per node; a flow is done when the counter
        # reaches its target
        self.served = [0.0] * n_nodes
        self.heaps: list[list[tuple[float, int, FlowRecord]]] = [[] for _ in range(n_nodes)]
        for fr in flows:
            heapq.heappush(self.heaps[fr.node], (fr.remaining, fr.id, fr))

        self.trace = SimTrace(n_nodes, profile.n_dp, capacity, start=start, end=start)
        self.alloc = self._allocate()
        if self.flow_counts().any():
            self._record("start")

    def flow_counts(self) -> np.ndarray:
        return np.array([len(h) + p for h, p in zip(self.heaps, self.pinned)])

    def _allocate(self) -> AllocationResult:
        f = self.flow_counts()
        b = bounds(self.r, self.tokens, f)
        res = allocate(b, f, self.capacity)
        if self.check:
            self._check(res, b.bd)
        return res

    def _check(self, res: AllocationResult, bd: np.ndarray) -> None:
        if not np.all(np.isfinite(res.th)):
            raise SimulationError(f"non-finite allocation at t={self.t}")
        if np.any(res.th_dp > bd + 1e-9):
            raise SimulationError(f"throughput above its bound at t={self.t}")
        # an empty bucket must either bind exactly or refill
        empty = self.tokens <= 0
        over = res.th_dp.T[:, :, None] - self.r[None] > 1e-9
        if np.any(empty & over):
            raise SimulationError(f"empty bucket drained further at t={self.t}")

    def _record(self, kind: str) -> None:
        a = self.alloc
        self.trace.records.append(TraceRecord(self.t, kind, a.th, a.th_dp, self.flow_counts(), a.dp_c))

    def _per_flow_rates(self) -> list[float]:
        f = self.flow_counts()
        return [float(self.alloc.th[i]) / f[i] if f[i] else 0.0 for i in range(self.n)]

    def _bucket_times(self) -> np.ndarray:
        drain = self.alloc.th_dp.T[:, :, None] - self.r[None]
        with np.errstate(divide="ignore", invalid="ignore"):
            tte = np.where((self.tokens > 0) & (drain > 0), self.tokens / drain, np.inf)
        return tte

    def _finish_times(self, rates: list[float]) -> list[float]:
        out = []
        for i in range(self.n):
            h = self.heaps[i]
            if h and rates[i] > 0:
                out.append(max(h[0][0] - self.served[i], 0.0) / rates[i])
            else:
                out.append(math.inf)
        return out

    def next_event(self) -> tuple[float, str]:
        """Time and kind of the next event (``horizon`` when nothing is pending)."""
        rates = self._per_flow_rates()
        cands = [
            (self.arrivals[self._next_arrival].time if self._next_arrival < len(self.arrivals) else math.inf, 0),
            (self.t + min(self._finish_times(rates), default=math.inf), 1),
            (self.t + float(self._bucket_times().min(initial=math.inf)), 2),
        ]
        t, k = min(cands)
        return t, ("horizon" if math.isinf(t) else EVENT_ORDER[k])

    def advance(self, dt: float, rates: list[float] | None = None) -> None:
        if dt < 0:
            raise SimulationError(f"negative time step {dt}")
        if dt == 0:
            return
        if rates is None:
            rates = self._per_flow_rates()
        self.tokens += (self.r[None] - self.alloc.th_dp.T[:, :, None]) * dt
        np.clip(self.tokens, 0.0, self.bs[None], out=self.tokens)
        self.tokens[self.tokens < SNAP] = 0.0
        for i in range(self.n):
            self.served[i] += rates[i] * dt
        self.t += dt

    def run_until(self, horizon: float) -> SimTrace:
        while True:
            rates = self._per_flow_rates()
            fin = self._finish_times(rates)
            tte = self._bucket_times()
            t_arr = self.arrivals[self._next_arrival].time if self._next_arrival < len(self.arrivals) else math.inf
            dt = min(min(fin, default=math.inf), float(tte.min(initial=math.inf)))
            t_next = self.t + dt
            if t_arr <= t_next:
                # land exactly on the arrival time
                t_next = t_arr
                dt = t_arr - self.t
            if t_next > horizon:
                self.advance(horizon - self.t, rates)
                self.t = float(horizon)
                break
            self.advance(dt, rates)
            self.t = float(t_next)
            kinds = []
            if self._arrive():
                kinds.append("arrival")
            if self._finish(fin, dt):
                kinds.append("finish")
            hit = tte <= dt * (1 + 1e-12)
            if hit.any():
                self.tokens[hit] = 0.0
                kinds.append("bucket_empty")
            if not kinds:
                raise SimulationError(f"no event processed at t={self.t}")
            self.alloc = self._allocate()
            self._record("+".join(kinds))
        self.trace.end = self.t
        return self.trace

    def _arrive(self) -> bool:
        seen = False
        while self._next_arrival < len(self.arrivals) and self.arrivals[self._next_arrival].time <= self.t:
            a = self.arrivals[self._next_arrival]
            self._next_arrival += 1
            seen = True
            fr = FlowRecord(self._next_id, a.node, a.time, a.size, a.size)
            self._next_id += 1
            if len(self.heaps[a.node]) + self.pinned[a.node] >= self.f_max:
                self.trace.discarded.append(fr)
            else:
                heapq.heappush(self.heaps[a.node], (self.served[a.node] + a.size, fr.id, fr))
        return seen

    def _finish(self, fin: list[float], dt: float) -> bool:
        seen = False
        for i in range(self.n):
            h = self.heaps[i]
            force = fin[i] <= dt * (1 + 1e-12)
            while h and (force or h[0][0] - self.served[i] <= FINISH_TOL):
                target, _, fr = heapq.heappop(h)
                if target - self.served[i] > 1e-6 * max(1.0, fr.size):
                    raise SimulationError(f"flow {fr.id} missed its finish event at t={self.t}")
                fr.remaining = 0.0
                fr.finish = self.t
                self.trace.completed.append(fr)
                force = False
                seen = True
        return seen

    def state(self) -> SimState:
        flows = []
        for i, h in enumerate(self.heaps):
            for target, _, fr in sorted(h):
                fr.remaining = max(target - self.served[i], 0.0)
                flows.append(fr)
        return SimState(self.t, self.tokens.copy(), flows, list(self.pinned))

    def pending_arrivals(self) -> list[Arrival]:
        return self.arrivals[self._next_arrival:]


def run(
    profile: ProfileConfig,
    capacity: float,
    n_nodes: int,
    arrivals: Sequence[Arrival],
    horizon: float,
    f_max: int = 20,
    tokens: np.ndarray | None = None,
    pinned: Sequence[int] | None = None,
) -> SimTrace:
    sim = FluidSim(profile, capacity, n_nodes, arrivals, f_max=f_max, tokens=tokens, pinned=pinned)
    return sim.run_until(horizon)


@dataclass
class Scenario:
    """A scripted run: explicit initial buckets, pinned background flows, arrivals."""

    profile: ProfileConfig
    capacity: float
    n_nodes: int
    horizon: float
    arrivals: list[Arrival]
    f_max: int = 20
    tokens: np.ndarray | None = None
    pinned: list[int] | None = None

    def run(self) -> SimTrace:
        return run(
            self.profile, self.capacity, self.n_nodes, self.arrivals, self.horizon,
            f_max=self.f_max, tokens=self.tokens, pinned=self.pinned,
        )

    @classmethod
    def from_dict(cls, d: dict[str, Any], profile: ProfileConfig) -> "Scenario":
        """Build from JSON.  ``initial_tokens`` maps node index (as a string)
        to ``"full"``, ``"bad_history"`` or an explicit n_dp x n_ts matrix."""
        n = int(d["nodes"])
        tokens = np.broadcast_to(profile.bs, (n, profile.n_dp, profile.n_ts)).copy()
        for key, spec in d.get("initial_tokens", {}).items():
            node = int(key)
            if spec == "full":
                continue
            if spec == "bad_history":
                tokens[node] = bad_history_tokens(profile, n, [node])[node]
            else:
                tokens[node] = np.array(spec, dtype=float)
        pinned = [0] * n
        for key, count in d.get("pinned_flows", {}).items():
            pinned[int(key)] = int(count)
        arrivals = [Arrival(float(a["time_s"]), int(a["node"]), float(a["size_gbit"])) for a in d.get("arrivals", [])]
        return cls(
            profile=profile,
            capacity=float(d.get("capacity_gbps", 10.0)),
            n_nodes=n,
            horizon=float(d["horizon_s"]),
            arrivals=arrivals,
            f_max=int(d.get("f_max", 20)),
            tokens=tokens,
            pinned=pinned,
        )

    @classmethod
    def load(cls, path: str | Path, profile: ProfileConfig) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()), profile)


def bad_history_scenario(profile: ProfileConfig, horizon: float = 40.0) -> Scenario:
    """Node 0 starts one long flow while nodes 1-4 sit in bad history with 20
    never-ending flows each."""
    n = 5
    return Scenario(
        profile=profile,
        capacity=10.0,
        n_nodes=n,
        horizon=horizon,
        arrivals=[Arrival(0.0, 0, 90.0)],
        tokens=bad_history_tokens(profile, n, range(1, n)),
        pinned=[0, 20, 20, 20, 20],
    )
