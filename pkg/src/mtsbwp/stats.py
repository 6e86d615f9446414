"""Node and flow bandwidth statistics over simulation traces.

Node bandwidth is time-weighted over the periods a node has at least one
flow; flow bandwidth is size over download time, one weight per flow.  Bands
report the mean and the worst/best tails, either as the 10th/90th weighted
percentiles (default) or as the means of the worst/best 10 % of the weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fluid import SimTrace

DEFAULT_WARMUP = 300.0


@dataclass(frozen=True)
class StatBand:
    mean: float
    worst: float
    best: float
    weight: str  # "time" or "flows"
    total: float  # summed weight: seconds or number of flows


def _tail_mean(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Mean over the first ``q`` share of the weight mass, in the given order."""
    mass = q * weights.sum()
    cum = np.cumsum(weights)
    prev = cum - weights
    take = np.clip(mass - prev, 0.0, weights)
    return float((values * take).sum() / mass)


def weighted_band(
    values: Sequence[float], weights: Sequence[float], weight: str, mode: str = "percentile", q: float = 0.1
) -> StatBand | None:
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    keep = w > 0
    v, w = v[keep], w[keep]
    if v.size == 0:
        return None
    mean = float(np.average(v, weights=w))
    if mode == "percentile":
        lo, hi = np.quantile(v, [q, 1 - q], weights=w, method="inverted_cdf")
    elif mode == "decile_mean":
        order = np.argsort(v, kind="stable")
        lo = _tail_mean(v[order], w[order], q)
        hi = _tail_mean(v[order][::-1], w[order][::-1], q)
    else:
        raise ValueError(f"unknown band mode {mode!r}")
    return StatBand(mean, float(lo), float(hi), weight, float(w.sum()))


def _as_list(x):
    if isinstance(x, (list, tuple)):
        return list(x)
    return [x]


def node_samples(
    traces: SimTrace | Sequence[SimTrace], nodes: int | Sequence[int], warmup: float = DEFAULT_WARMUP
) -> tuple[np.ndarray, np.ndarray]:
    """Throughput values and their durations over active periods after ``warmup``."""
    nodes = _as_list(nodes)
    vals, wts = [], []
    for tr in _as_list(traces):
        t0, t1, th, fl = tr.intervals()
        if t0.size == 0:
            continue
        dt = np.minimum(t1, tr.end) - np.maximum(t0, warmup)
        for n in nodes:
            m = (dt > 0) & (fl[:, n] > 0)
            vals.append(th[m, n])
            wts.append(dt[m])
    if not vals:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(vals), np.concatenate(wts)


def node_bandwidth(
    traces: SimTrace | Sequence[SimTrace],
    nodes: int | Sequence[int],
    warmup: float = DEFAULT_WARMUP,
    mode: str = "percentile",
) -> StatBand | None:
    """Time-weighted node throughput while the node has flows; ``None`` if never active."""
    v, w = node_samples(traces, nodes, warmup)
    return weighted_band(v, w, "time", mode)


def flow_samples(
    traces: SimTrace | Sequence[SimTrace],
    size: float,
    nodes: int | Sequence[int],
    warmup: float = DEFAULT_WARMUP,
) -> np.ndarray:
    nodes = set(_as_list(nodes))
    out = [
        fr.bandwidth
        for tr in _as_list(traces)
        for fr in tr.completed
        if fr.node in nodes and fr.arrival >= warmup and abs(fr.size - size) <= 1e-9 * size
    ]
    return np.array(out, dtype=float)


def flow_bandwidth(
    traces: SimTrace | Sequence[SimTrace],
    size: float,
    nodes: int | Sequence[int],
    warmup: float = DEFAULT_WARMUP,
    mode: str = "percentile",
) -> StatBand | None:
    """Per-flow size / download time for completed flows of one size class."""
    v = flow_samples(traces, size, nodes, warmup)
    return weighted_band(v, np.ones_like(v), "flows", mode)
