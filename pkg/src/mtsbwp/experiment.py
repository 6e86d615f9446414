"""Experiment grids: (setup, load parameter, policy) cells over several seeds."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .fluid import SimTrace, run
from .profile import ProfileConfig, Requirements, dimension, example1_profile, trtcm_profile, validate
from .stats import DEFAULT_WARMUP, StatBand, flow_bandwidth, node_bandwidth
from .traffic import LARGE_FILE, SETUPS, SMALL_FILE, build_setup, generate_all, setup_params

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ["setup", "param", "policy", "node_class", "metric", "mean", "p10", "p90", "n"]
METRICS = ("node_bw", "flow_bw_small", "flow_bw_large")


class ConfigError(ValueError):
    pass


def load_profile(spec: Any, base: Path | None = None, free_fill: str = "hold") -> ProfileConfig:
    """Profile from a path, a requirements dict (``{"requirements": ...}``) or explicit matrices."""
    if spec is None:
        return example1_profile()
    if isinstance(spec, str):
        path = Path(spec)
        if base is not None and not path.is_absolute():
            path = base / path
        spec = json.loads(path.read_text())
    if "requirements" in spec:
        return dimension(Requirements.from_dict(spec["requirements"]), free_fill)
    if "capacity_gbps" in spec:
        return dimension(Requirements.from_dict(spec), free_fill)
    return ProfileConfig.from_dict(spec)


@dataclass
class ExperimentConfig:
    profile: ProfileConfig = field(default_factory=example1_profile)
    baseline: ProfileConfig | None = None  # trTCM; defaults to CIR = S_n, EIR = C - S_n
    setups: dict[str, list[float]] = field(default_factory=lambda: {s: list(setup_params(s)) for s in SETUPS})
    policies: tuple[str, ...] = ("mts", "trtcm")
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    horizon: float = 600.0
    warmup: float = DEFAULT_WARMUP
    capacity: float = 10.0
    nodes: int = 5
    f_max: int = 20
    band: str = "percentile"

    def __post_init__(self) -> None:
        if self.baseline is None:
            sn = self.capacity / self.nodes
            self.baseline = trtcm_profile(sn, self.capacity - sn)
        self.check()

    def check(self) -> None:
        unknown = sorted(set(self.setups) - set(SETUPS))
        if unknown:
            raise ConfigError(f"unknown setups {unknown}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.horizon <= self.warmup:
            raise ConfigError(f"horizon {self.horizon} must exceed warmup {self.warmup}")
        for p in self.policies:
            if p not in ("mts", "trtcm"):
                raise ConfigError(f"unknown policy {p!r}")
        for name, prof in (("mts", self.profile), ("trtcm", self.baseline)):
            rep = validate(prof, self.capacity, self.nodes)
            if not rep.ok:
                raise ConfigError(f"{name} profile does not validate:\n{rep}")

    def policy_profile(self, policy: str) -> ProfileConfig:
        return self.profile if policy == "mts" else self.baseline

    def cells(self) -> list["Cell"]:
        return [
            Cell(s, float(p), pol)
            for s in sorted(self.setups)
            for p in self.setups[s]
            for pol in self.policies
        ]

    @classmethod
    def from_dict(cls, d: dict[str, Any], base: Path | None = None) -> "ExperimentConfig":
        kw: dict[str, Any] = {}
        if "capacity_gbps" in d:
            kw["capacity"] = float(d["capacity_gbps"])
        if "nodes" in d:
            kw["nodes"] = int(d["nodes"])
        kw["profile"] = load_profile(d.get("profile"), base, d.get("free_fill", "hold"))
        if "trtcm" in d:
            cir, eir = d["trtcm"]
            kw["baseline"] = trtcm_profile(float(cir), float(eir))
        if "setups" in d:
            s = d["setups"]
            if isinstance(s, list):
                for name in s:
                    if name not in SETUPS:
                        raise ConfigError(f"unknown setup {name!r}")
                s = {name: list(setup_params(name)) for name in s}
            kw["setups"] = {k: [float(x) for x in v] for k, v in s.items()}
        for key, attr, conv in (
            ("seeds", "seeds", lambda v: [int(x) for x in v]),
            ("policies", "policies", tuple),
            ("horizon_s", "horizon", float),
            ("warmup_s", "warmup", float),
            ("f_max", "f_max", int),
            ("band", "band", str),
        ):
            if key in d:
                kw[attr] = conv(d[key])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)


@dataclass(frozen=True)
class Cell:
    setup: str
    param: float
    policy: str

    @property
    def label(self) -> str:
        return f"{self.setup}_{self.param!r}_{self.policy}"


@dataclass
class CellResult:
    cell: Cell
    rows: list[dict[str, Any]]
    max_capacity_gap: float  # worst |sum th - C| over intervals with an active node
    events: int
    traces: list[SimTrace] | None = None
    error: str | None = None


def simulate_cell(cfg: ExperimentConfig, cell: Cell, seed: int) -> SimTrace:
    specs = build_setup(cell.setup, cell.param, seed=seed, capacity=cfg.capacity)
    if len(specs) != cfg.nodes:
        raise ConfigError(f"setup {cell.setup} has {len(specs)} nodes, config says {cfg.nodes}")
    arrivals = generate_all(specs, cfg.horizon)
    return run(cfg.policy_profile(cell.policy), cfg.capacity, cfg.nodes, arrivals, cfg.horizon, f_max=cfg.f_max)


def capacity_gap(trace: SimTrace) -> float:
    t0, t1, th, fl = trace.intervals()
    busy = (fl > 0).any(axis=1)
    if not busy.any():
        return 0.0
    return float(np.abs(th[busy].sum(axis=1) - trace.capacity).max())


def _band_row(cell: Cell, node_class: str, metric: str, band: StatBand | None) -> dict[str, Any]:
    row = {"setup": cell.setup, "param": cell.param, "policy": cell.policy, "node_class": node_class, "metric": metric}
    if band is None:
        row.update(mean=None, p10=None, p90=None, n=0)
    else:
        n = band.total if band.weight == "flows" else round(band.total, 6)
        row.update(mean=band.mean, p10=band.worst, p90=band.best, n=n)
    return row


def cell_rows(cfg: ExperimentConfig, cell: Cell, traces: Sequence[SimTrace]) -> list[dict[str, Any]]:
    n_low = SETUPS[cell.setup][0]
    groups = {"low": list(range(n_low)), "high": list(range(n_low, cfg.nodes))}
    rows = []
    for cls_name, nodes in groups.items():
        rows.append(_band_row(cell, cls_name, "node_bw", node_bandwidth(list(traces), nodes, cfg.warmup, cfg.band)))
        for metric, size in (("flow_bw_small", SMALL_FILE), ("flow_bw_large", LARGE_FILE)):
            band = flow_bandwidth(list(traces), size, nodes, cfg.warmup, cfg.band)
            rows.append(_band_row(cell, cls_name, metric, band))
    return rows


def run_cell(cfg: ExperimentConfig, cell: Cell, keep_traces: bool = False) -> CellResult:
    try:
        traces = [simulate_cell(cfg, cell, s) for s in cfg.seeds]
    except Exception as exc:  # reported per cell; the grid keeps going
        log.exception("cell %s failed", cell.label)
        return CellResult(cell, [], float("nan"), 0, None, f"{type(exc).__name__}: {exc}")
    return CellResult(
        cell,
        cell_rows(cfg, cell, traces),
        max(capacity_gap(t) for t in traces),
        sum(len(t.records) for t in traces),
        traces if keep_traces else None,
    )


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: str | Path, rows: Sequence[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in SUMMARY_FIELDS])


def read_rows(path: str | Path) -> list[dict[str, Any]]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row: dict[str, Any] = dict(r)
            row["param"] = float(r["param"])
            for k in ("mean", "p10", "p90"):
                row[k] = float(r[k]) if r[k] else None
            out.append(row)
    return out


def _cell_worker(args: tuple[ExperimentConfig, Cell, bool]) -> CellResult:
    cfg, cell, keep = args
    return run_cell(cfg, cell, keep)


def run_grid(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    jobs: int | None = None,
    save_traces: bool = False,
    keep_traces: bool = False,
) -> list[CellResult]:
    """Run every cell, optionally writing per-cell CSVs and a combined summary.

    Cells run in worker processes when ``jobs`` > 1; files are written only
    after all cells finish, in cell order, so output does not depend on
    scheduling.
    """
    cells = cfg.cells()
    jobs = jobs or os.cpu_count() or 1
    keep = keep_traces or save_traces
    args = [(cfg, c, keep) for c in cells]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_cell_worker, args))
    else:
        results = [_cell_worker(a) for a in args]

    if out_dir is not None:
        write_grid(cfg, results, Path(out_dir), save_traces)
    return results


def write_grid(cfg: ExperimentConfig, results: Sequence[CellResult], out: Path, save_traces: bool) -> None:
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    all_rows = []
    cells_meta = []
    for res in results:
        write_rows(cell_dir / f"{res.cell.label}.csv", res.rows)
        all_rows.extend(res.rows)
        if save_traces and res.traces:
            for seed, tr in zip(cfg.seeds, res.traces):
                tr.write_csv(cell_dir / f"{res.cell.label}_seed{seed}_trace.csv")
        cells_meta.append(
            {
                "setup": res.cell.setup,
                "param": res.cell.param,
                "policy": res.cell.policy,
                "events": res.events,
                "max_capacity_gap": res.max_capacity_gap,
                "error": res.error,
            }
        )
    write_rows(out / "summary.csv", all_rows)
    meta = {
        "seeds": cfg.seeds,
        "horizon_s": cfg.horizon,
        "warmup_s": cfg.warmup,
        "band": cfg.band,
        "profile": cfg.profile.to_dict(),
        "baseline": cfg.baseline.to_dict(),
        "cells": cells_meta,
        "failed": [m for m in cells_meta if m["error"]],
    }
    (out / "summary.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


class CompareError(ValueError):
    pass


def compare(
    a: Sequence[dict[str, Any]],
    b: Sequence[dict[str, Any]],
    policy_a: str | None = None,
    policy_b: str | None = None,
) -> list[dict[str, Any]]:
    """Deltas ``a - b`` joined on (setup, param, node_class, metric)."""

    def index(rows, policy, name):
        out = {}
        for r in rows:
            if policy is not None and r["policy"] != policy:
                continue
            key = (r["setup"], r["param"], r["node_class"], r["metric"])
            if key in out:
                raise CompareError(f"{name} has several policies for {key}; pick one with a policy filter")
            out[key] = r
        return out

    ia, ib = index(a, policy_a, "first summary"), index(b, policy_b, "second summary")
    missing = sorted(set(ia) ^ set(ib))
    if missing:
        lines = [f"  {'first' if k in ia else 'second'} only: {k}" for k in missing]
        raise CompareError("summaries cover different cells:\n" + "\n".join(lines))
    out = []
    for key in sorted(ia):
        ra, rb = ia[key], ib[key]
        row = dict(zip(("setup", "param", "node_class", "metric"), key))
        for k in ("mean", "p10", "p90"):
            row[f"{k}_a"] = ra[k]
            row[f"{k}_b"] = rb[k]
            row[f"delta_{k}"] = None if ra[k] is None or rb[k] is None else ra[k] - rb[k]
        out.append(row)
    return out


COMPARE_FIELDS = [
    "setup", "param", "node_class", "metric",
    "mean_a", "mean_b", "delta_mean", "p10_a", "p10_b", "delta_p10", "p90_a", "p90_b", "delta_p90",
]


def write_compare(path: str | Path, rows: Sequence[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in COMPARE_FIELDS])
