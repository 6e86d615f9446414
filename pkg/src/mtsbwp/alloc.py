"""Instantaneous fluid bandwidth allocation among nodes sharing one bottleneck.

Each node's per-DP throughput is bounded by the smallest rate among its empty
buckets of that DP.  The congestion DP is the first DP at which the bounds of
all nodes add up to the capacity: lower DPs are served in full, higher DPs
not at all, and inside the congestion DP nodes are water-filled in proportion
to their flow counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# absolute tolerance (Gbps) for cap / ratio / capacity comparisons
EPS = 1e-12


@dataclass(frozen=True)
class Bounds:
    """Per-(DP, node) throughput bounds; inactive nodes have a zero column."""

    bd: np.ndarray  # n_dp x n_nodes
    active: np.ndarray  # bool, n_nodes


@dataclass(frozen=True)
class AllocationResult:
    th: np.ndarray  # n_nodes
    th_dp: np.ndarray  # n_dp x n_nodes
    dp_c: int  # 1-based; 0 when nothing is active


def bounds(r: np.ndarray, tokens: np.ndarray, flows: Sequence[int], empty_tol: float = 0.0) -> Bounds:
    """Bounds from token levels ``tokens[n, dp, ts]``.

    A bucket counts as empty when its level is ``<= empty_tol``.  A DP with no
    empty bucket is unbounded (``inf``).
    """
    active = np.asarray(flows) > 0
    empty = tokens <= empty_tol
    bd = np.where(empty, r[None, :, :], np.inf).min(axis=2).T
    bd[:, ~active] = 0.0
    return Bounds(bd=bd, active=active)


def congestion_dp(b: Bounds, capacity: float) -> int:
    """Smallest 1-based DP at which cumulative bounds reach ``capacity``.

    Returns the last DP if even the total stays below capacity, and 0 when no
    node is active.
    """
    if not b.active.any():
        return 0
    cum = 0.0
    n_dp = b.bd.shape[0]
    for i in range(n_dp):
        cum += float(b.bd[i].sum())
        if cum >= capacity - EPS:
            return i + 1
    return n_dp


def allocate(b: Bounds, flows: Sequence[int], capacity: float) -> AllocationResult:
    """Flow-proportional water-filling inside the congestion DP."""
    n_dp, n = b.bd.shape
    dp_c = congestion_dp(b, capacity)
    if dp_c == 0:
        return AllocationResult(np.zeros(n), np.zeros((n_dp, n)), 0)

    f = [int(x) for x in flows]
    act = [bool(a) for a in b.active]
    base = b.bd[: dp_c - 1].sum(axis=0).tolist()
    cap = (b.bd[: dp_c - 1].sum(axis=0) + b.bd[dp_c - 1]).tolist()
    th = [base[i] if act[i] else 0.0 for i in range(n)]
    total = sum(th)
    eligible = [act[i] and th[i] < cap[i] - EPS for i in range(n)]

    steps = 0
    while total < capacity - EPS:
        eligible = [e and th[i] < cap[i] - EPS for i, e in enumerate(eligible)]
        idx = [i for i in range(n) if eligible[i]]
        if not idx:
            break
        steps += 1
        assert steps <= 2 * n, "water-filling did not terminate"
        ratio = {i: th[i] / f[i] for i in idx}
        low = min(ratio.values())
        marked = [i for i in idx if ratio[i] <= low + EPS]
        rest = [ratio[i] for i in idx if ratio[i] > low + EPS]
        f_marked = sum(f[i] for i in marked)

        level = low + (capacity - total) / f_marked
        if rest:
            level = min(level, min(rest))
        capped = []
        for i in marked:
            if cap[i] / f[i] <= level:
                level = cap[i] / f[i]
        for i in marked:
            if cap[i] / f[i] <= level + EPS:
                th[i] = cap[i]
                capped.append(i)
            else:
                th[i] = f[i] * level
        total = sum(th)
        for i in capped:
            eligible[i] = False

    th_arr = np.array(th)
    return AllocationResult(th_arr, split_per_dp(th_arr, b, dp_c), dp_c)


def split_per_dp(th: np.ndarray, b: Bounds, dp_c: int) -> np.ndarray:
    """Greedy fill of each node's throughput into DPs 1, 2, ... up to ``dp_c``."""
    n_dp, n = b.bd.shape
    out = np.zeros((n_dp, n))
    left = np.asarray(th, dtype=float).copy()
    for dp in range(dp_c):
        take = np.minimum(b.bd[dp], left)
        out[dp] = take
        left = left - take
    # rounding residue from the water level lands on the congestion DP
    if dp_c:
        out[dp_c - 1] += np.where(np.abs(left) <= 1e-9, left, 0.0)
    return out
