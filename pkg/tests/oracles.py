"""Reference implementations that share no code with the package under test."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def bucket_sizes_by_hand(r, ts):
    """Piecewise bucket-size formula transcribed literally, in exact fractions."""
    r = [[Fraction(x) for x in row] for row in r]
    ts = [Fraction(x) for x in ts]
    out = []
    for row in r:
        sizes = []
        for j in range(len(ts)):
            if j == 0:
                sizes.append(Fraction(0))
            elif j == 1:
                sizes.append(ts[1] * (row[0] - row[1]))
            else:
                sizes.append(sum((ts[k] - ts[k - 1]) * (row[k - 1] - row[j]) for k in range(1, j + 1)))
        out.append(sizes)
    return out


def _lex_greater(a, b, tol=1e-12):
    for x, y in zip(a, b):
        if x > y + tol:
            return True
        if x < y - tol:
            return False
    return False


def brute_force_allocation(bd, flows, capacity, tol=1e-9):
    """Exhaustive water-level search.

    Every node is either pinned at its floor (DPs below the congestion DP),
    pinned at its ceiling (up to and including it) or free at a common
    per-flow level.  All 3**n assignments are tried; among the feasible
    allocations summing to min(C, sum of ceilings) the one with the
    lexicographically largest sorted per-flow rate vector wins.
    """
    bd = np.asarray(bd, dtype=float)
    n_dp, n = bd.shape
    act = [i for i in range(n) if flows[i] > 0]
    th = np.zeros(n)
    if not act:
        return th, 0
    dp_c = n_dp
    run = 0.0
    for i in range(n_dp):
        run += sum(bd[i, j] for j in act)
        if run >= capacity - 1e-12:
            dp_c = i + 1
            break
    lo = {j: sum(bd[i, j] for i in range(dp_c - 1)) for j in act}
    hi = {j: lo[j] + bd[dp_c - 1, j] for j in act}
    target = min(capacity, sum(hi.values()))

    best, best_key = None, None
    for states in itertools.product("lhf", repeat=len(act)):
        cand = {}
        free = [j for j, s in zip(act, states) if s == "f"]
        fixed = 0.0
        for j, s in zip(act, states):
            if s == "l":
                cand[j] = lo[j]
            elif s == "h":
                cand[j] = hi[j]
            if s != "f":
                fixed += cand[j]
        if free:
            level = (target - fixed) / sum(flows[j] for j in free)
            for j in free:
                cand[j] = flows[j] * level
        if any(cand[j] < lo[j] - tol or cand[j] > hi[j] + tol for j in act):
            continue
        if abs(sum(cand.values()) - target) > tol:
            continue
        key = sorted(cand[j] / flows[j] for j in act)
        if best_key is None or _lex_greater(key, best_key):
            best, best_key = cand, key
    assert best is not None, "no feasible allocation found"
    for j in act:
        th[j] = best[j]
    return th, dp_c


def trtcm_direct(flows, cir, eir, capacity):
    """Two-colour fluid allocation solved by bisection on the per-flow level."""
    act = [i for i, f in enumerate(flows) if f > 0]
    th = np.zeros(len(flows))
    if not act:
        return th
    if len(act) * cir >= capacity:
        lo = {i: 0.0 for i in act}
        hi = {i: cir for i in act}
    else:
        lo = {i: cir for i in act}
        hi = {i: cir + eir for i in act}
    target = min(capacity, sum(hi.values()))

    def total(level):
        return sum(min(max(flows[i] * level, lo[i]), hi[i]) for i in act)

    a, b = 0.0, capacity + cir + eir
    for _ in range(200):
        m = (a + b) / 2
        if total(m) < target:
            a = m
        else:
            b = m
    for i in act:
        th[i] = min(max(flows[i] * b, lo[i]), hi[i])
    return th


def window_violations(times, sizes_gbit, rate, cap, rel=1e-9):
    """Pairs of packets (i, j) whose window [t_i, t_j] carries more than
    ``rate * (t_j - t_i) + cap``."""
    bad = []
    n = len(times)
    pref = np.concatenate([[0.0], np.cumsum(sizes_gbit)])
    for i in range(n):
        for j in range(i, n):
            vol = pref[j + 1] - pref[i]
            allowed = rate * (times[j] - times[i]) + cap
            if vol > allowed * (1 + rel) + 1e-15:
                bad.append((i, j))
    return bad


def max_window_excess(times, sizes_gbit, rate):
    """Largest ``volume - rate * width`` over all windows [t_i, t_j], in O(n).

    A marker output conforms to a (rate, cap) bucket iff this is <= cap.
    """
    if len(times) == 0:
        return 0.0
    t = np.asarray(times, dtype=float)
    pref = np.concatenate([[0.0], np.cumsum(sizes_gbit)])
    end = pref[1:] - rate * t
    start = np.minimum.accumulate(pref[:-1] - rate * t)
    return float((end - start).max())
