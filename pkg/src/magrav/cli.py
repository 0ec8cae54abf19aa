"""Command-line interface.

Subcommands select the experiment; ``--grid`` and ``--seed`` override the
corresponding scenario fields and are recorded in the run manifest. Failures
write ``failure_manifest.json`` into the output directory and exit nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import MagravError
from .experiments import run_experiment
from .scenario import load_scenario

_SUBCOMMANDS = ("minimize", "gamma-sweep", "sticky", "heatwave", "check-invariants")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magrav",
        description="Discrete Monge-Ampere gravitation laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        cmd = sub.add_parser(name, help=f"run a {name} experiment")
        cmd.add_argument("--scenario", required=True, help="scenario file (JSON)")
        cmd.add_argument("--out-dir", required=True, help="artifact output directory")
        cmd.add_argument("--grid", type=int, default=None, help="override the grid size M")
        cmd.add_argument("--seed", type=int, default=None, help="override the seed (u64)")
        cmd.add_argument("--quiet", action="store_true", help="suppress the summary line")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = Path(args.out_dir)
    try:
        scenario = load_scenario(args.scenario)
        overrides: dict = {}
        if scenario.experiment != args.command:
            overrides["experiment"] = args.command
            scenario = dataclasses.replace(scenario, experiment=args.command)
        if args.grid is not None:
            overrides["grid_m"] = args.grid
            scenario = dataclasses.replace(scenario, grid_m=args.grid)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise MagravError("--seed must fit in 64 bits")
            overrides["seed"] = args.seed
            scenario = dataclasses.replace(scenario, seed=args.seed)
        bundle = run_experiment(scenario, out_dir, overrides)
    except MagravError as err:
        out_dir.mkdir(parents=True, exist_ok=True)
        failure = {"error": str(err), "type": type(err).__name__}
        (out_dir / "failure_manifest.json").write_text(
            json.dumps(failure, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
        )
        print(f"error: {err}", file=sys.stderr)
        return 1
    if not args.quiet:
        names = ", ".join(sorted(bundle.files) + ["manifest.json"])
        print(f"{scenario.name}: wrote {names} to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
