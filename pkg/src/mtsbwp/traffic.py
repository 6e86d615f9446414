"""Compound-Poisson flow arrivals and the load setups used in the experiments."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

# small and large file sizes of the worked example (0.1 and 1 GByte), Gbit
SMALL_FILE = 0.8
LARGE_FILE = 8.0
DEFAULT_SIZES = ((SMALL_FILE, 0.5), (LARGE_FILE, 0.5))

SYSTEM_LOADS = (0.6, 0.7, 0.8, 0.9, 0.95, 1.0, 1.1, 1.2, 1.5, 2.0)
LOW_LOADS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


class Arrival(NamedTuple):
    time: float
    node: int
    size: float  # Gbit


@dataclass(frozen=True)
class TrafficSpec:
    """Arrival process of one node: Poisson rate plus a discrete size mix."""

    rate: float  # flows per second
    sizes: tuple[tuple[float, float], ...] = DEFAULT_SIZES  # (Gbit, probability)
    seed: int = 0
    stream: int = 0  # node index; selects an independent substream of ``seed``

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ValueError("arrival rate must be non-negative")
        if any(s <= 0 for s, _ in self.sizes):
            raise ValueError("file sizes must be positive")
        if abs(sum(p for _, p in self.sizes) - 1.0) > 1e-9:
            raise ValueError("size probabilities must sum to 1")

    @property
    def mean_size(self) -> float:
        return sum(s * p for s, p in self.sizes)


@dataclass(frozen=True)
class SetupSpec:
    name: str
    n_low: int
    n_high: int
    low_load: float
    system_load: float
    capacity: float = 10.0

    @property
    def nodes(self) -> int:
        return self.n_low + self.n_high


# name -> (n_low, n_high, which parameter varies)
SETUPS = {
    "A": (1, 4, "system"),
    "B": (2, 3, "system"),
    "C": (1, 4, "low"),
    "D": (2, 3, "low"),
}
DEFAULT_LOW_LOAD = 0.5
DEFAULT_SYSTEM_LOAD = 1.1


def setup_params(name: str) -> tuple[float, ...]:
    """Parameter list swept for a named setup."""
    if name not in SETUPS:
        raise KeyError(f"unknown setup {name!r}; choose from {sorted(SETUPS)}")
    return SYSTEM_LOADS if SETUPS[name][2] == "system" else LOW_LOADS


def nominal_load_to_rate(load: float, nominal_speed: float, mean_size: float) -> float:
    if mean_size <= 0:
        raise ValueError("mean file size must be positive")
    return load * nominal_speed / mean_size


def high_load_from_system(setup: SetupSpec) -> float:
    """Nominal load of the high-load nodes that makes the mean load equal the system load."""
    if setup.n_high < 1:
        raise ValueError("need at least one high-load node")
    high = (setup.nodes * setup.system_load - setup.n_low * setup.low_load) / setup.n_high
    if high <= 0:
        raise ValueError(f"setup {setup.name}: infeasible loads give high load {high:g}")
    return high


def make_setup(name: str, param: float, capacity: float = 10.0) -> SetupSpec:
    if name not in SETUPS:
        raise KeyError(f"unknown setup {name!r}; choose from {sorted(SETUPS)}")
    n_low, n_high, varies = SETUPS[name]
    if varies == "system":
        return SetupSpec(name, n_low, n_high, DEFAULT_LOW_LOAD, param, capacity)
    return SetupSpec(name, n_low, n_high, param, DEFAULT_SYSTEM_LOAD, capacity)


def build_setup(
    name: str,
    param: float,
    seed: int = 0,
    capacity: float = 10.0,
    sizes: tuple[tuple[float, float], ...] = DEFAULT_SIZES,
) -> list[TrafficSpec]:
    """Per-node traffic for a named setup; low-load nodes come first."""
    setup = make_setup(name, param, capacity)
    high = high_load_from_system(setup)
    sn = capacity / setup.nodes
    mean = sum(s * p for s, p in sizes)
    loads = [setup.low_load] * setup.n_low + [high] * setup.n_high
    return [
        TrafficSpec(nominal_load_to_rate(load, sn, mean), sizes, seed, node)
        for node, load in enumerate(loads)
    ]


def generate(spec: TrafficSpec, horizon: float) -> list[Arrival]:
    """Arrivals of one node on ``[0, horizon)``.

    The random stream depends only on ``(seed, stream)``, so adding nodes
    leaves the existing nodes' arrivals unchanged.
    """
    if spec.rate == 0 or horizon <= 0:
        return []
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(spec.stream,)))
    sizes = np.array([s for s, _ in spec.sizes])
    probs = np.array([p for _, p in spec.sizes])
    # draw in chunks until the horizon is passed
    times: list[np.ndarray] = []
    t = 0.0
    chunk = max(16, int(spec.rate * horizon * 1.2) + 16)
    while t < horizon:
        gaps = rng.exponential(1.0 / spec.rate, chunk)
        ts = t + np.cumsum(gaps)
        times.append(ts)
        t = float(ts[-1])
    all_t = np.concatenate(times)
    all_t = all_t[all_t < horizon]
    picks = rng.choice(sizes, size=all_t.size, p=probs)
    return [Arrival(float(a), spec.stream, float(s)) for a, s in zip(all_t, picks)]


def generate_all(specs: Sequence[TrafficSpec], horizon: float) -> list[Arrival]:
    out = [a for spec in specs for a in generate(spec, horizon)]
    out.sort(key=lambda a: (a.time, a.node))
    return out


def write_arrivals(path: str | Path, arrivals: Iterable[Arrival]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "time_s", "size_gbit"])
        for a in arrivals:
            w.writerow([a.node, repr(a.time), repr(a.size)])


def read_arrivals(path: str | Path) -> list[Arrival]:
    with open(path, newline="") as fh:
        return [
            Arrival(float(row["time_s"]), int(row["node"]), float(row["size_gbit"]))
            for row in csv.DictReader(fh)
        ]
