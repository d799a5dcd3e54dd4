"""Command line entry point: ``gfk run | list | schema``."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .calculus import LadderError
from .scenarios import (EXIT_NUMERICAL, EXIT_SCHEMA, ScenarioError, builtin_names, load_builtin,
                        load_config, load_schema, run_scenario)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfk",
        description="Check claims about generalized functions on manifolds against numerical evidence.")
    parser.add_argument("--version", action="version", version=f"gfk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a scenario file or built-in scenario")
    run.add_argument("config", help="path to a scenario JSON file, or the name of a built-in scenario")
    run.add_argument("--seed", type=int, default=0, help="seed for sampled test points (default 0)")
    run.add_argument("--ladder", metavar="EPS0,RATIO,LEN",
                     help="replace every epsilon ladder of the scenario, e.g. 0.25,0.5,12")
    run.add_argument("--out", metavar="DIR", default=".",
                     help="directory for the report, traces and timing files (default: current)")
    run.add_argument("--quiet", action="store_true", help="print only the summary line")
    run.set_defaults(handler=_cmd_run)

    lst = sub.add_parser("list", help="list the built-in scenarios")
    lst.set_defaults(handler=_cmd_list)

    schema = sub.add_parser("schema", help="print the scenario JSON schema")
    schema.set_defaults(handler=_cmd_schema)
    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        result = run_scenario(config, seed=args.seed, ladder=args.ladder)
    except ScenarioError as exc:
        print(f"gfk: schema violation at {exc.pointer}: {exc.message}", file=sys.stderr)
        return EXIT_SCHEMA
    except LadderError as exc:
        print(f"gfk: invalid ladder: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    paths = result.write(args.out)
    if not args.quiet:
        for row in result.report["claims"]:
            status = "PASS" if row["pass"] else "FAIL"
            note = "" if row["expect"] == "pass" else " (expected to fail)"
            print(f"{status}  {row['id']}{note}: {row['statement']}")
            if "error" in row:
                print(f"      numerical error: {row['error']}")
    n_pass = sum(r["pass"] for r in result.report["claims"])
    print(f"{result.name}: {n_pass}/{len(result.report['claims'])} claims passed; report {paths['report']}")
    if result.exit_code == EXIT_NUMERICAL:
        print(f"gfk: {result.error}", file=sys.stderr)
    return result.exit_code


def _cmd_list(args) -> int:
    for name in builtin_names():
        config = load_builtin(name)
        count = len(config["claims"])
        label = f"{count:2d} claim" + ("" if count == 1 else "s")
        print(f"{name:28s} {config['manifold']['manifold']:9s} {label:9s} {config.get('description', '')}")
    return 0


def _cmd_schema(args) -> int:
    print(json.dumps(load_schema(), indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
