"""Command line entry point: ``mtsbwp dimension | run | compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .fluid import Scenario
from .profile import ProfileError, Requirements, dimension, trtcm_profile, validate

EXIT_INVALID = 2


def _parse_seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def cmd_dimension(args: argparse.Namespace) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.requirements is None and args.trtcm is None:
        print("dimension: give --requirements and/or --trtcm", file=sys.stderr)
        return EXIT_INVALID
    capacity, nodes = args.capacity, args.nodes
    status = 0
    reports = []
    if args.requirements is not None:
        req = Requirements.from_dict(json.loads(Path(args.requirements).read_text()))
        capacity, nodes = req.capacity, req.nodes
        try:
            prof = dimension(req, args.free_fill)
        except ProfileError as exc:
            msg = f"ERROR   dimension: {exc}"
            print(msg, file=sys.stderr)
            (out / "report.txt").write_text(msg + "\n")
            return EXIT_INVALID
        rep = validate(prof, capacity, nodes)
        prof.save(out / "profile.json")
        reports.append(f"[profile.json]\n{rep}")
        if not rep.ok:
            status = EXIT_INVALID
    if args.trtcm is not None:
        cir, eir = args.trtcm
        prof = trtcm_profile(cir, eir)
        rep = validate(prof, capacity, nodes)
        prof.save(out / "trtcm_profile.json")
        reports.append(f"[trtcm_profile.json]\n{rep}")
        if not rep.ok:
            status = EXIT_INVALID
    text = "\n".join(reports)
    (out / "report.txt").write_text(text + "\n")
    print(text)
    return status


def _run_scenario(args: argparse.Namespace, out: Path) -> int:
    data = json.loads(Path(args.scenario).read_text())
    base = Path(args.scenario).parent
    profile_spec = data.get("profile")
    if profile_spec is None and args.config is not None:
        profile_spec = json.loads(Path(args.config).read_text()).get("profile")
        base = Path(args.config).parent
    profile = ex.load_profile(profile_spec, base)
    if args.horizon is not None:
        data["horizon_s"] = args.horizon
    sc = Scenario.from_dict(data, profile)
    rep = validate(profile, sc.capacity, sc.n_nodes)
    if not rep.ok:
        print(rep, file=sys.stderr)
        return EXIT_INVALID
    trace = sc.run()
    trace.write_csv(out / "trace.csv")
    summary = trace.summary()
    summary["max_capacity_gap"] = ex.capacity_gap(trace)
    summary["flows"] = [
        {"id": f.id, "node": f.node, "arrival_s": f.arrival, "size_gbit": f.size, "finish_s": f.finish}
        for f in trace.completed
    ]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"scenario: {len(trace.records)} events, {len(trace.completed)} flows completed -> {out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario is not None:
        return _run_scenario(args, out)
    if args.config is None:
        print("run: give --config and/or --scenario", file=sys.stderr)
        return EXIT_INVALID
    raw = json.loads(Path(args.config).read_text())
    if args.seeds is not None:
        raw["seeds"] = _parse_seeds(args.seeds)
    if args.horizon is not None:
        raw["horizon_s"] = args.horizon
    if args.warmup is not None:
        raw["warmup_s"] = args.warmup
    try:
        cfg = ex.ExperimentConfig.from_dict(raw, Path(args.config).parent)
    except (ex.ConfigError, ProfileError, KeyError) as exc:
        print(f"run: {exc}", file=sys.stderr)
        return EXIT_INVALID
    results = ex.run_grid(cfg, out, jobs=args.jobs, save_traces=args.save_traces)
    failed = [r for r in results if r.error]
    for r in failed:
        print(f"cell {r.cell.label} failed: {r.error}", file=sys.stderr)
    print(f"run: {len(results) - len(failed)}/{len(results)} cells ok -> {out / 'summary.csv'}")
    return 1 if failed else 0


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        rows = ex.compare(
            ex.read_rows(args.a), ex.read_rows(args.b), args.policy_a, args.policy_b
        )
    except ex.CompareError as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return EXIT_INVALID
    ex.write_compare(args.output, rows)
    print(f"compare: {len(rows)} rows -> {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtsbwp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dimension", help="dimension and validate a profile")
    d.add_argument("--requirements", help="requirements JSON")
    d.add_argument("--trtcm", nargs=2, type=float, metavar=("CIR", "EIR"), help="also write a trTCM baseline profile")
    d.add_argument("--free-fill", choices=["hold", "capacity"], default="hold")
    d.add_argument("--capacity", type=float, default=10.0, help="link capacity for --trtcm validation without requirements")
    d.add_argument("--nodes", type=int, default=5)
    d.add_argument("-o", "--output", required=True, help="output directory")
    d.set_defaults(func=cmd_dimension)

    r = sub.add_parser("run", help="run an experiment grid or a single scenario")
    r.add_argument("--config", help="experiment config JSON")
    r.add_argument("--scenario", help="scenario JSON; runs just this scenario")
    r.add_argument("--seeds", help="comma separated seeds, e.g. 1,2,3")
    r.add_argument("--horizon", type=float, help="simulated seconds per run")
    r.add_argument("--warmup", type=float, help="seconds excluded from statistics")
    r.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    r.add_argument("--save-traces", action="store_true", help="also write per-seed trace CSVs")
    r.add_argument("-o", "--output", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="delta report between two summary CSVs (A - B)")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--policy-a", help="use only rows of this policy from A")
    c.add_argument("--policy-b", help="use only rows of this policy from B")
    c.add_argument("-o", "--output", required=True, help="output CSV")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
