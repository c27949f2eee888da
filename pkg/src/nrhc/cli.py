"""Command line entry point: ``nrhc run | validate | presets``.

Exit codes: 0 on success, 1 for an invalid scenario or arguments, 2 when the
closed loop diverges (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .scenarios import ScenarioError, dumps, load_scenario, preset, preset_names, write_outputs
from .simulator import Simulator
from .tpbvp import DivergenceError

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nrhc", description="Distributed real-time receding horizon consensus")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a preset or scenario file")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=preset_names())
    src.add_argument("--scenario", help="path to a scenario JSON file")
    run.add_argument("--duration", type=float)
    run.add_argument("--dt", type=float)
    run.add_argument("--dtau", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--integrator", choices=("rk4", "euler"), help="real-time costate integrator")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.add_argument("-v", "--verbose", action="store_true")

    val = sub.add_parser("validate", help="check a scenario file and report every problem")
    val.add_argument("--scenario", required=True)

    pre = sub.add_parser("presets", help="list or print the built-in scenarios")
    pre_sub = pre.add_subparsers(dest="action", required=True)
    pre_sub.add_parser("list")
    show = pre_sub.add_parser("show")
    show.add_argument("name", choices=preset_names())
    return ap


def _cmd_run(args) -> int:
    try:
        scenario = preset(args.preset) if args.preset else load_scenario(args.scenario)
        overrides = {
            k: v
            for k, v in (("duration", args.duration), ("dt", args.dt), ("dtau_target", args.dtau),
                         ("seed", args.seed), ("costate_integrator", args.integrator))
            if v is not None
        }
        if overrides:
            scenario = scenario.with_simulation(**overrides)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"invalid run settings: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        log = Simulator(scenario).run(progress=args.verbose)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        if getattr(exc, "log", None) is not None:
            write_outputs(exc.log, args.out, scenario)
        return EXIT_DIVERGED
    paths = write_outputs(log, args.out, scenario)
    print(f"{scenario.name}: t={log.t[-1]:g} max pairwise {log.max_pairwise[0]:.4g} -> {log.max_pairwise[-1]:.4g}")
    for p in paths.values():
        print(f"  wrote {p}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        s = load_scenario(args.scenario)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {s.name} ({s.model.name}, {s.n_agents} agents{', leader' if s.leader_initial is not None else ''})")
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name in preset_names():
            print(f"{name:15s} {preset(name).description}")
    else:
        sys.stdout.write(dumps(preset(args.name)))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    handler = {"run": _cmd_run, "validate": _cmd_validate, "presets": _cmd_presets}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
