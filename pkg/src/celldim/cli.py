"""Command line entry: a scenario file in, result tables out.

Exit codes: 0 on success, 1 on an invalid scenario or runtime failure,
2 when --strict is set and any output row failed to converge.
"""

import argparse
import sys

from .experiments import emit_outputs, run_kind
from .scenario import ConfigError, load_scenario

_FORMATS = {"csv": ("csv",), "json": ("json",), "both": ("csv", "json")}

_COMMANDS = (
    ("sweep", "mean-cell performance versus offered traffic"),
    ("dimension", "minimal bandwidth meeting a mean-throughput target"),
    ("scale-check", "network dilation invariance report"),
    ("composite", "per-zone curves on a shared per-cell traffic axis"),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="celldim",
        description="Cellular network dimensioning: Poisson deployments, "
                    "coupled cell loads, mean-cell curves, bandwidth sizing.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in _COMMANDS:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--scenario", required=True, metavar="FILE",
                         help="TOML scenario file")
        cmd.add_argument("--out", default=".", metavar="DIR",
                         help="output directory (default: current directory)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the scenario seed")
        cmd.add_argument("--workers", type=int, default=1,
                         help="solver threads; results do not depend on this")
        cmd.add_argument("--format", choices=sorted(_FORMATS), default="both",
                         help="output format (default: both)")
        cmd.add_argument("--strict", action="store_true",
                         help="exit 2 if any row failed to converge")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        scenario = load_scenario(args.scenario)
        if scenario.kind is not None and scenario.kind != args.command:
            raise ConfigError(
                f"scenario declares kind {scenario.kind!r} but the "
                f"{args.command!r} command was invoked")
        if args.seed is not None:
            scenario.seed = args.seed
        records, meta = run_kind(args.command, scenario, workers=args.workers)
        meta = dict(meta)
        meta["scenario_path"] = args.scenario
        written = emit_outputs(records, args.command, args.out,
                               basename=scenario.basename,
                               formats=_FORMATS[args.format], meta=meta)
    except (ConfigError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    for fmt in sorted(written):
        print(f"wrote {written[fmt]}")
    unconverged = sum(1 for rec in records if rec.get("converged") is False)
    if unconverged:
        print(f"note: {unconverged} row(s) did not converge within the "
              "iteration budget", file=sys.stderr)
        if args.strict:
            return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
