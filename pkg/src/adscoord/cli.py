"""Command-line entry point: ``adscoord <command> ...``.

Exit codes: 0 clean, 1 validation findings, 2 usage or I/O error,
3 contract or rule violation, 4 deadlock window.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

from . import mapgraph
from .dynamics import KinematicParams, min_free_space
from .mapgraph import MapError, MapGraph
from .runtime import Allocation, CapacityPreconditionError, capacity, critical_paths
from .sim import (
    LoadError,
    Scenario,
    Snapshot,
    TraceError,
    check_trace,
    load_scenario,
    read_trace,
    run,
)

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_VIOLATION, EXIT_DEADLOCK = 0, 1, 2, 3, 4
RUN_EXIT = {"budget": EXIT_OK, "all-arrived": EXIT_OK, "violation": EXIT_VIOLATION, "deadlock-window": EXIT_DEADLOCK}


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _load_map(path: str) -> MapGraph:
    try:
        return mapgraph.parse_map(_read(path))
    except MapError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load(map_path: str, scenario_path: str, rules_path: str | None) -> Scenario:
    rules = _read(rules_path) if rules_path else None
    try:
        return load_scenario(_read(map_path), _read(scenario_path), rules)
    except LoadError as exc:
        raise UsageError("scenario rejected:\n  " + "\n  ".join(exc.report)) from None


# --- validate / junctions / capacity --------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    m = _load_map(args.map)
    findings = mapgraph.validate_2d(m).lines()
    declared = sorted(tuple(sorted(j)) for j in m.declared_junctions)
    if declared:
        inferred = mapgraph.infer_junctions(m)
        for cell in inferred:
            if not any(set(cell) <= set(d) for d in declared):
                findings.append(f"edges {', '.join(cell)} cross but are not declared as one junction")
    findings += mapgraph.check_speed_limit_compatibility(m, {f"b_max={args.bmax:g}": args.bmax})
    if findings:
        print(f"{args.map}: {len(findings)} finding(s)")
        for line in findings:
            print(f"  {line}")
        return EXIT_FINDINGS
    print(f"{args.map}: ok ({len(m.vertices)} vertices, {len(m.edges)} edges, {len(m.junctions)} junctions)")
    return EXIT_OK


def cmd_junctions(args: argparse.Namespace) -> int:
    m = _load_map(args.map)
    source = "declared" if m.declared_junctions else "inferred"
    if not m.junctions:
        print("no junctions")
    for i, cell in enumerate(m.junctions):
        print(f"junction {i} ({source}): {' '.join(cell)}")
    for v in m.mergers():
        print(f"merger {v}: priority {' > '.join(m.priority.get(v, []))}")
    for a, b in sorted(m.entry_pairs):
        print(f"entry order {a} < {b}")
    return EXIT_OK


def cmd_capacity(args: argparse.Namespace) -> int:
    if not args.fmin > 0:
        raise UsageError("--fmin must be positive")
    m = _load_map(args.map)
    paths, truncated = critical_paths(m)
    if not paths:
        print("no critical paths")
        return EXIT_OK
    bad = 0
    for p in paths:
        slack = [f"{e}:{math.floor(m.edges[e].length / args.fmin)}" for e in p.edges if e not in m.junction_of]
        head = f"{p.kind} [{p.text()}] junctions={p.junctions} slack={' '.join(slack) or '-'}"
        try:
            print(f"{head} capacity={capacity(p, args.fmin, m, args.bmax)}")
        except CapacityPreconditionError as exc:
            bad += 1
            print(f"{head} assumption violated")
            for part in str(exc).split("; "):
                print(f"  {part}")
    if truncated:
        print("note: search stopped at the path length bound; longer paths were not enumerated")
    return EXIT_FINDINGS if bad else EXIT_OK


# --- run / check / render -------------------------------------------------

def _glyphs(snap: Snapshot) -> list:
    from .plotting import VehicleGlyph

    return [VehicleGlyph(vid, v.odo, snap.alloc.limits.get(vid), v.route) for vid, v in sorted(snap.moved.items()) if not v.arrived]


def _greedy(alloc: Allocation, snap: Snapshot) -> Allocation:
    """Test hook: hand every vehicle its whole remaining itinerary."""
    return Allocation({vid: v.route.total for vid, v in snap.vehicles.items()}, alloc.cycle)


def cmd_run(args: argparse.Namespace) -> int:
    sc = _load(args.map, args.scenario, args.rules)
    on_record: Callable | None = None
    if args.frames:
        from .plotting import draw_frame

        frames = Path(args.frames)
        frames.mkdir(parents=True, exist_ok=True)
        every = args.every

        def on_record(snap: Snapshot, _verdicts) -> None:
            if snap.cycle % every == 0:
                draw_frame(sc.map, _glyphs(snap), frames / f"cycle_{snap.cycle:05d}.svg", f"cycle {snap.cycle}")

    forge = _greedy if args.forge else None
    try:
        out = open(args.out, "w", encoding="utf-8") if args.out else None
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from None
    try:
        result = run(sc, out, args.cycles, monitors=not args.no_monitors, forge=forge, on_record=on_record)
    finally:
        if out is not None:
            out.close()
    failed = {k: n for k, n in result.violations.items() if n}
    print(f"{result.reason}: {result.records} records" + (f", failures {failed}" if failed else ""))
    if result.first_failure:
        print(f"first failure: {result.first_failure}")
    if result.error:
        print(f"error: {result.error}")
    return RUN_EXIT[result.reason]


def _trace_lines(path: str) -> list[str]:
    return _read(path).splitlines()


def cmd_check(args: argparse.Namespace) -> int:
    lines = _trace_lines(args.trace)
    try:
        problems = check_trace(lines)
        _, records, summary = read_trace(lines)
    except (TraceError, LoadError) as exc:
        raise UsageError(f"{args.trace}: {exc}") from None
    if problems:
        print(f"{args.trace}: {len(problems)} problem(s) in {len(records)} records")
        for p in problems[: args.limit]:
            print(f"  {p}")
        if len(problems) > args.limit:
            print(f"  ... {len(problems) - args.limit} more")
        return EXIT_VIOLATION
    print(f"{args.trace}: {len(records)} records, every verdict passes and matches ({summary['reason']})")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    lines = _trace_lines(args.trace)
    if not any(line.strip() for line in lines):
        print("empty trace: nothing to render")
        return EXIT_OK
    try:
        head, records, _ = read_trace(lines)
    except TraceError as exc:
        raise UsageError(f"{args.trace}: {exc}") from None
    map_text = _read(args.map)
    texts = head.get("texts", {})
    if map_text != texts.get("map"):
        raise UsageError(f"{args.map} is not the map the trace was recorded on")
    try:
        sc = load_scenario(map_text, texts.get("scenario", ""), texts.get("rules"))
    except LoadError as exc:
        raise UsageError(f"{args.trace}: embedded scenario rejected: {exc}") from None
    from .plotting import VehicleGlyph, draw_frame

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wanted = set(args.cycle) if args.cycle else None
    written = 0
    for rec in records:
        i = rec["cycle"]
        if (wanted is None and i % args.every) or (wanted is not None and i not in wanted):
            continue
        glyphs = [
            VehicleGlyph(vid, r["odo"], r["limit"], sc.vehicles[vid].route)
            for vid, r in sorted(rec["vehicles"].items())
            if not r["arrived"]
        ]
        draw_frame(sc.map, glyphs, out / f"cycle_{i:05d}.svg", f"cycle {i}")
        written += 1
    print(f"wrote {written} frame(s) to {out}")
    return EXIT_OK


# --- regions --------------------------------------------------------------

def cmd_regions(args: argparse.Namespace) -> int:
    from .plotting import draw_regions, region_grid

    try:
        p = KinematicParams(args.amax, args.bmax, args.dt)
        data = region_grid(p, args.vmax, args.fmax, args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = json.dumps(data, separators=(",", ":"))
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.svg:
        draw_regions(data, Path(args.svg))
    print(f"f_min={min_free_space(p):.6f}", file=sys.stderr)
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adscoord", description="Free-space coordination of vehicles on a road map.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a map's embedding, junctions and speed limits")
    p.add_argument("map")
    p.add_argument("--bmax", type=float, default=3.4, help="deceleration used for the speed-limit check")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("junctions", help="list junction cells, mergers and entry order")
    p.add_argument("map")
    p.set_defaults(func=cmd_junctions)

    p = sub.add_parser("capacity", help="critical paths and their vehicle capacity")
    p.add_argument("map")
    p.add_argument("--fmin", type=float, required=True)
    p.add_argument("--bmax", type=float, default=None, help="also check that edge speeds allow f_min spacing")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("run", help="simulate a scenario and write a trace")
    p.add_argument("map")
    p.add_argument("scenario")
    p.add_argument("rules", nargs="?")
    p.add_argument("--out", help="trace file (JSON lines)")
    p.add_argument("--cycles", type=int, help="override the scenario's cycle budget")
    p.add_argument("--frames", help="directory for SVG frames")
    p.add_argument("--every", type=int, default=10, help="frame interval in cycles")
    p.add_argument("--seedless", action="store_true", help="accepted for compatibility; runs are always deterministic")
    p.add_argument("--no-monitors", action="store_true", help="skip monitor evaluation")
    p.add_argument("--forge", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="re-evaluate every monitor on a recorded trace")
    p.add_argument("trace")
    p.add_argument("--limit", type=int, default=20, help="problems to print")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("render", help="draw SVG frames from a trace")
    p.add_argument("trace")
    p.add_argument("map")
    p.add_argument("--out", required=True)
    p.add_argument("--every", type=int, default=10)
    p.add_argument("--cycle", type=int, action="append", help="render only these cycles")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("regions", help="speed-policy region grid as JSON, optionally as SVG")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--amax", type=float, default=2.5)
    p.add_argument("--bmax", type=float, default=3.4)
    p.add_argument("--vmax", type=float, default=20.0)
    p.add_argument("--fmax", type=float, default=80.0)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--out", help="JSON file (default: stdout)")
    p.add_argument("--svg", help="also draw the plot here")
    p.set_defaults(func=cmd_regions)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "every", 1) < 1:
        print("adscoord: --every must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"adscoord: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
