"""Command-line entry point: run scenarios, emit contact plans, list and export built-ins."""

import argparse
import sys
from pathlib import Path

from . import scenario as sc
from .contactplan import export_plan
from .units import parse_duration

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _duration(text):
    try:
        value = parse_duration(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not value > 0:
        raise argparse.ArgumentTypeError("duration must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipnsim", description="Interplanetary DTN simulator")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def source(p):
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--scenario", help="built-in scenario name")
        group.add_argument("--config", help="scenario file (YAML)")

    run = sub.add_parser("run", help="simulate a scenario and write metrics")
    source(run)
    run.add_argument("--until", "--horizon", dest="until", type=_duration,
                     help="simulation horizon, e.g. 90d (default: the scenario's)")
    run.add_argument("--seed", type=int, help="random seed (default: the scenario's)")
    run.add_argument("--out", help="metrics file (.jsonl); a .csv summary and .plan.txt go alongside")
    run.add_argument("--trace", help="write the executed event trace to this file")

    plan = sub.add_parser("plan", help="compute and write the contact plan only")
    source(plan)
    plan.add_argument("--horizon", "--until", dest="until", type=_duration,
                      help="plan horizon, e.g. 780d (default: the scenario's)")
    plan.add_argument("--out", help="output file (default: stdout)")

    sub.add_parser("scenarios", help="list built-in scenarios")

    export = sub.add_parser("export-scenario", help="write a built-in scenario file")
    export.add_argument("name", nargs="?", help="built-in scenario name")
    export.add_argument("--scenario", dest="name_flag", help="built-in scenario name")
    export.add_argument("--out", help="output file (default: stdout)")
    return parser


def _load(args):
    if args.scenario is not None:
        if args.scenario not in sc.BUILTINS:
            raise UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(sc.BUILTINS)}")
        return sc.builtin(args.scenario)
    return sc.load_scenario(args.config)


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    config = _load(args)
    trace_lines = []
    trace = None
    if args.trace:
        def trace(event):
            trace_lines.append(f"{event.time!r}\t{event.sequence}\t{event.kind}\t{event.target or ''}\n")
    result = sc.run_scenario(config, until=args.until, seed=args.seed, trace=trace)
    metrics = result.metrics
    if args.out:
        out = Path(args.out)
        metrics.write(out)
        metrics.write_csv(out.with_suffix(".csv"))
        _write(out.with_name(out.stem + ".plan.txt"), export_plan(result.plan))
    if args.trace:
        _write(args.trace, "".join(trace_lines))
    s = metrics.summary
    print(f"{config.name}: created {s['created']}, delivered {s['delivered']}, resident {s['resident']}, "
          f"expired {s['expired']}, failed {s['failed']}, in-flight {s['in-flight']}; "
          f"{s['contacts']} contacts, {s['events_executed']} events")
    return EXIT_OK


def cmd_plan(args) -> int:
    config = _load(args)
    _write(args.out, export_plan(config.contact_plan(args.until)))
    return EXIT_OK


def cmd_scenarios(_args) -> int:
    for name in sc.BUILTINS:
        print(f"{name:15s} {sc.builtin(name).description}")
    return EXIT_OK


def cmd_export(args) -> int:
    name = args.name or args.name_flag
    if not name:
        raise UsageError("export-scenario needs a scenario name")
    if name not in sc.BUILTINS:
        raise UsageError(f"unknown scenario {name!r}; choose from {', '.join(sc.BUILTINS)}")
    _write(args.out, sc.builtin_text(name))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "plan": cmd_plan, "scenarios": cmd_scenarios, "export-scenario": cmd_export}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ipnsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"ipnsim: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
