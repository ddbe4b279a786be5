"""Command-line entry point: run, sweep, render and compare subcommands."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .config import MODES, ScenarioError, load_scenario
from .harness import TrialPlan, run_trials

log = logging.getLogger("exploretrack")

DEFAULT_SCENARIO = "six_room.yaml"


def _d_f(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("d_f must be nonnegative")
    return value


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default=DEFAULT_SCENARIO,
                   help="scenario YAML (path, or name of a bundled scenario)")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    seeds.add_argument("--seed-list", type=_seed_list, help="comma-separated seeds")
    p.add_argument("--steps", type=int, help="override mission length (steps)")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--snapshot-every", type=int, default=0,
                   help="write a PNG snapshot every N steps (0: never)")
    p.add_argument("--record", action="store_true",
                   help="write the per-step state log used by 'render'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exploretrack",
                                     description="Multi-robot exploration and PHD tracking simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _add_common(p)
    p.add_argument("--mode", choices=MODES, help="baseline mode override")
    p.add_argument("--d-f", type=_d_f, help="frontier-distance threshold in metres, or 'inf'")

    p = sub.add_parser("sweep", help="run a trial plan over modes, d_f values and seeds")
    _add_common(p)
    p.add_argument("--mode", choices=MODES, action="append",
                   help="mode to include (repeatable; default: all)")
    p.add_argument("--d-f", type=_d_f, action="append",
                   help="d_f value to sweep (repeatable; default: the scenario's)")
    p.add_argument("--reuse", action="store_true",
                   help="keep per-run CSVs whose config hash matches the manifest")

    p = sub.add_parser("render", help="render snapshots from a recorded run")
    p.add_argument("record", help="recorded-run .jsonl file")
    p.add_argument("--out", default="snapshots")
    p.add_argument("--snapshot-every", type=int, default=100)
    p.add_argument("--step", type=int, action="append", help="render only these steps")

    p = sub.add_parser("compare", help="print the comparison summary of one or more sweeps")
    p.add_argument("dirs", nargs="+", help="sweep output directories")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    return parser


def _seeds(args, default: int) -> list[int]:
    if args.seed_list:
        return args.seed_list
    if args.seeds is None:
        return [default]
    if args.seeds < 1:
        raise ValueError("--seeds must be >= 1")
    return list(range(args.seeds))


def _print_report(report: dict, out) -> None:
    for label, v in sorted(report["variants"].items()):
        m = v["seed_mean"]
        ttt = m["time_to_threshold"]
        t99 = m["time_to_explored_99"]
        print(f"{label:28s} seeds={len(v['seeds'])} "
              f"final_ospa={m['final_window_ospa']:.3f} first_ospa={m['first_window_ospa']:.3f} "
              f"ttt={'-' if ttt is None else f'{ttt:.1f}'} "
              f"t99={'-' if t99 is None else f'{t99:.0f}'}", file=out)
    for f in report.get("failed", []):
        print(f"FAILED {f['variant']} seed {f['seed']}: {f['error']}", file=out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("run", "sweep"):
            cfg = load_scenario(args.scenario)
            seeds = _seeds(args, cfg.seed)
            if args.command == "run":
                cfg = cfg.with_overrides(mode=args.mode, d_f=args.d_f)
                modes, dfs, reuse = [cfg.mode], None, False
            else:
                modes = args.mode or list(MODES)
                dfs, reuse = args.d_f, args.reuse
            plan = TrialPlan(cfg, seeds, modes, args.out, dfs, args.steps,
                             args.snapshot_every, args.record)
            report = run_trials(plan, reuse=reuse)
            _print_report(report, sys.stdout)
            return 1 if report["failed"] else 0
        if args.command == "render":
            from .render import replay
            paths = replay(args.record, args.out, args.snapshot_every, args.step)
            print(f"wrote {len(paths)} snapshot(s) to {args.out}")
            return 0
        if args.command == "compare":
            merged = {}
            for d in args.dirs:
                summary = json.loads((Path(d) / "summary.json").read_text())
                merged[d] = summary
            if args.json:
                print(json.dumps({d: s["panels"] for d, s in merged.items()}, indent=2))
            else:
                for d, s in merged.items():
                    print(f"== {d}")
                    _print_report(s, sys.stdout)
            return 0
    except (ScenarioError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
