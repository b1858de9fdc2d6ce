"""Command-line front end: classify, verify, decompose, list.

Exit codes: classify returns 0 for strong/weak, 2 for partial_only, 3 for
none; verify and decompose return 0 when every executed check passes and 4
otherwise; any error returns 1.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .pipeline import RunReport, run_classification, run_decomposition, run_verification
from .scenarios import (ScenarioError, list_scenarios, load_scenario,
                        resolve_scenario, ACTION_KINDS, CHART_KINDS,
                        FIELD_FAMILIES, GROUP_KINDS)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the scenario sampling seed")
    parser.add_argument("--out", type=Path, default=argparse.SUPPRESS,
                        help="directory for JSON reports and CSV trajectories")
    parser.add_argument("--tol", action="append", metavar="NAME=VALUE",
                        default=argparse.SUPPRESS,
                        help="override a named tolerance (repeatable)")
    parser.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="print the JSON report instead of the table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakinv",
        description="Classify, verify, and decompose symmetric dynamical systems.")
    parser.add_argument("--version", action="version", version=f"weakinv {__version__}")
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p_classify = sub.add_parser("classify", help="classify a scenario's field")
    p_classify.add_argument("scenario")
    _add_common(p_classify)

    p_verify = sub.add_parser("verify", help="run the full property battery")
    p_verify.add_argument("scenario")
    _add_common(p_verify)

    p_decompose = sub.add_parser("decompose",
                                 help="cascade-decompose and cross-integrate")
    p_decompose.add_argument("scenario")
    p_decompose.add_argument("--t", type=float, default=1.0,
                             help="integration horizon (default 1.0)")
    p_decompose.add_argument("--y0", type=str, default=None,
                             help="comma-separated quotient coordinates")
    p_decompose.add_argument("--g0", type=str, default=None,
                             help="comma-separated algebra coordinates, exp applied")
    _add_common(p_decompose)

    sub.add_parser("list", help="list builtin groups, actions, families, scenarios")
    return parser


def _parse_tolerances(entries) -> dict:
    overrides = {}
    for entry in entries or []:
        if "=" not in entry:
            raise ScenarioError(f"--tol '{entry}': expected NAME=VALUE")
        name, _, value = entry.partition("=")
        try:
            overrides[name.strip()] = float(value)
        except ValueError as err:
            raise ScenarioError(f"--tol '{entry}': {err}") from err
    return overrides


def _parse_coords(text):
    if text is None:
        return None
    if text.strip() == "":
        return []
    return [float(v) for v in text.split(",")]


def _load(args) -> "Scenario":
    path = resolve_scenario(args.scenario)
    return load_scenario(path,
                         seed_override=getattr(args, "seed", None),
                         tolerance_overrides=_parse_tolerances(getattr(args, "tol", None)))


def _emit(report: RunReport, args) -> int:
    out_dir = getattr(args, "out", None)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / f"{report.scenario}_{report.command}.json"
        target.write_text(report.to_json())
    if getattr(args, "json", False):
        sys.stdout.write(report.to_json())
    else:
        print(report.table())
    return report.exit_code


def cmd_list() -> int:
    print("groups:")
    for kind in GROUP_KINDS:
        suffix = " (any dimension)" if kind == "translation" else ""
        print(f"  {kind}{suffix}")
    print("actions:")
    for kind in ACTION_KINDS:
        print(f"  {kind}")
    print("field families:")
    for family in FIELD_FAMILIES:
        print(f"  {family}")
    print("chart kinds:")
    for kind in CHART_KINDS:
        print(f"  {kind}")
    print("scenarios:")
    for name, path in sorted(list_scenarios().items()):
        print(f"  {name}  ({path})")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return cmd_list()
        scenario = _load(args)
        if args.command == "classify":
            report = run_classification(scenario)
        elif args.command == "verify":
            report = run_verification(scenario)
        else:
            report = run_decomposition(
                scenario, t=args.t,
                y0_coords=_parse_coords(args.y0),
                g0_coords=_parse_coords(args.g0),
                out_dir=getattr(args, "out", None))
        return _emit(report, args)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
