"""Command line front end.

Subcommands:

    run <scenario.ini> [--out DIR]         execute one scenario file
    sweep <scenario.ini> --axis PATH --values V1,V2,...
                                           one run per swept value
    validate                               execute every acceptance check
    presets list | show NAME               built-in scenario files

Exit codes: 0 success, 2 configuration error, 3 physics audit failure
(truncation, positivity, invalid reduction), 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import sys

from .scenarios import (
    ConfigError,
    PRESETS,
    load_scenario,
    preset_text,
    run,
    sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_ACCEPTANCE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpiston",
        description="simulate a two-bath heat machine with a quantized oscillator piston",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario file")
    run_p.add_argument("scenario", help="scenario INI file")
    run_p.add_argument("--out", default=".", help="output directory (default: current)")

    sweep_p = sub.add_parser("sweep", help="run a scenario once per swept value")
    sweep_p.add_argument("scenario", help="scenario INI file")
    sweep_p.add_argument(
        "--axis", required=True, help="dotted parameter path, e.g. config.g or t_max"
    )
    sweep_p.add_argument(
        "--values", required=True, help="comma separated numbers, e.g. 0.02,0.04,0.08"
    )
    sweep_p.add_argument("--out", default=".", help="output directory (default: current)")
    sweep_p.add_argument("--workers", type=int, default=1, help="parallel runs (default 1)")

    sub.add_parser("validate", help="execute every acceptance check")

    presets_p = sub.add_parser("presets", help="built-in scenarios")
    presets_p.add_argument("action", choices=("list", "show"))
    presets_p.add_argument("name", nargs="?", help="preset name (for show)")
    return parser


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run(scenario, args.out)
    for kind in ("thermo_csv", "distribution_csv", "report"):
        if kind in result.paths:
            print(f"wrote {result.paths[kind]}")
    print(result.report, end="")
    return EXIT_OK


def _parse_values(raw: str) -> list[float]:
    values = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(float(part))
        except ValueError:
            raise ConfigError(f"sweep value {part!r} is not a number") from None
    if not values:
        raise ConfigError("sweep needs at least one value")
    return values


def _cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    entries = sweep(
        scenario, args.axis, _parse_values(args.values), args.out, workers=args.workers
    )
    failures = 0
    for entry in entries:
        line = f"{args.axis} = {entry['value']}: {entry['status']}"
        if entry["status"] != "ok":
            failures += 1
            line += f" ({entry['error']})"
        print(line)
    print(f"index: {args.out}/sweep_index.csv")
    return EXIT_PHYSICS if failures else EXIT_OK


def _cmd_validate() -> int:
    from . import acceptance

    results = acceptance.run_all()
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        failed += 0 if result.passed else 1
        print(f"{status} {result.name}: {result.detail}")
    print(f"{len(results) - failed} of {len(results)} acceptance checks passed")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name, (_, description) in PRESETS.items():
            print(f"{name}: {description}")
        return EXIT_OK
    if not args.name:
        raise ConfigError("presets show needs a preset name")
    print(preset_text(args.name), end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "validate":
            return _cmd_validate()
        return _cmd_presets(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError) as exc:
        print(f"physics audit failure: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
