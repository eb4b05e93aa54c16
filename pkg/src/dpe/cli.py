"""``dpe`` command-line front end.

Exit codes: 0 success, 1 scenario/validation error, 2 a ``--check``
property failed, 3 internal error. Every command accepts ``--json`` and then
prints a single JSON document carrying the same values as the text output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from dpe import __version__
from dpe.egos import EgosDirectory
from dpe.errors import DpeError, InvalidGeometry, ParseError, ScenarioError, ValidationError
from dpe.geometry import PremiseLayout, coverage_fraction, coverage_gaps, hex_layout
from dpe.policy import compile_policy, required_settings
from dpe.protocol import DecodeError, decode, premise_key
from dpe.scenario import COOKBOOK, Scenario, load_cookbook, load_scenario
from dpe.sim import check_properties, run_scenario

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CHECK = 2
EXIT_INTERNAL = 3

DEFAULT_GRID_STEP = 0.5


class _Invalid(Exception):
    """Carries a one-line diagnostic for exit code 1."""


def _emit(args: argparse.Namespace, data: dict[str, Any], lines: list[str]) -> None:
    if args.json:
        print(json.dumps(data, sort_keys=True, indent=2))
    else:
        for line in lines:
            print(line)


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _Invalid(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise _Invalid(f"{path}: not valid JSON: {exc}") from None


def _load_scenario(ref: str) -> Scenario:
    if Path(ref).is_file():
        return load_scenario(ref)
    if ref in COOKBOOK:
        return load_cookbook(ref)
    raise _Invalid(f"{ref}: no such file or cookbook scenario (cookbook: {', '.join(COOKBOOK)})")


def _write(path: str | None, data: bytes | str) -> None:
    if path is None:
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        target.write_bytes(data)
    else:
        target.write_text(data, encoding="utf-8")


# --- commands ---------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    result = run_scenario(scenario)
    report = result.report.to_dict()
    _write(args.out, result.trace)
    _write(args.report, json.dumps(report, sort_keys=True, indent=2) + "\n")
    _write(args.state, json.dumps(result.state_snapshot(), sort_keys=True, indent=2) + "\n")

    data: dict[str, Any] = {"report": report}
    lines = [
        f"scenario {report['name']} seed={report['seed']} events={report['events']}",
        f"trace_hash {report['trace_hash']}",
        "counts " + " ".join(f"{k}={v}" for k, v in sorted(report["counts"].items())),
        f"restores {len(report['restores'])}",
    ]
    latencies = result.report.breach_latencies()
    if latencies:
        lines.append(
            f"breaches {len(latencies)} max_latency_ms={max((l for l in latencies if l is not None), default=None)} "
            f"bound_ms={report['breach_bound_ms']}"
        )
    code = EXIT_OK
    if args.check:
        checks = check_properties(result.report, scenario)
        data["checks"] = checks
        lines += [f"check {name} {'pass' if ok else 'FAIL'}" for name, ok in sorted(checks.items())]
        if not all(checks.values()):
            code = EXIT_CHECK
    _emit(args, data, lines)
    return code


def cmd_policy_check(args: argparse.Namespace) -> int:
    try:
        source = Path(args.policy).read_bytes()
    except OSError as exc:
        raise _Invalid(f"{args.policy}: {exc.strerror}") from None
    policy = compile_policy(source)
    if args.tags is not None:
        tag_sets = [frozenset(t for t in args.tags.split(",") if t)]
    else:
        tag_sets = policy.declared_tag_sets()
    rows = []
    for tags in tag_sets:
        rows.append({"tags": sorted(tags), "required": required_settings(policy, tags).to_dict()})
    data = {"policy_id": policy.policy_id, "premise_id": policy.premise_id,
            "version": policy.version, "effective": rows}
    lines = [f"policy {policy.policy_id} premise={policy.premise_id} version={policy.version}"]
    for row in rows:
        label = ",".join(row["tags"]) or "(untagged)"
        req = " ".join(f"{k}={v}" for k, v in row["required"].items()) or "(nothing)"
        lines.append(f"  {label}: {req}")
    _emit(args, data, lines)
    return EXIT_OK


def cmd_coverage(args: argparse.Namespace) -> int:
    zones = hex_layout(args.width, args.height, args.pitch, args.radius)
    layout = PremiseLayout("coverage", args.width, args.height, tuple(zones))
    fraction = coverage_fraction(layout, args.grid_step)
    gaps = coverage_gaps(layout, args.grid_step)
    data = {
        "width": args.width, "height": args.height, "pitch": args.pitch, "radius": args.radius,
        "grid_step": args.grid_step, "zones": len(zones), "coverage_fraction": fraction, **gaps,
    }
    lines = [
        f"zones {len(zones)}",
        f"coverage_fraction {fraction!r} (grid_step {args.grid_step})",
        f"uncovered {gaps['uncovered']}/{gaps['samples']} max_gap {gaps['max_gap']!r}",
    ]
    if gaps["uncovered"]:
        lines.append(f"worst point ({gaps['worst_x']}, {gaps['worst_y']})")
    _emit(args, data, lines)
    return EXIT_OK


def cmd_frame_inspect(args: argparse.Namespace) -> int:
    if args.key is not None:
        try:
            key = bytes.fromhex(args.key)
        except ValueError:
            raise _Invalid("--key: not a hex string") from None
        if len(key) != 32:
            raise _Invalid(f"--key: expected 32 bytes, got {len(key)}")
    else:
        key = premise_key(args.premise)
    try:
        raw = Path(args.frame).read_bytes()
    except OSError as exc:
        raise _Invalid(f"{args.frame}: {exc.strerror}") from None
    try:
        frame = decode(raw, key)
    except DecodeError as exc:
        _emit(args, {"error": exc.name, "detail": str(exc)}, [f"{exc.name}: {exc}"])
        return EXIT_INVALID
    header = frame.header_dict()
    body = frame.body.to_obj()
    lines = [f"{k} {v}" for k, v in header.items()]
    lines.append("body " + json.dumps(body, sort_keys=True))
    _emit(args, {"header": header, "body": body}, lines)
    return EXIT_OK


def cmd_egos_dump(args: argparse.Namespace) -> int:
    doc = _read_json(args.state)
    raw = doc.get("directories") if isinstance(doc, dict) else None
    if not isinstance(raw, dict):
        raise _Invalid(f"{args.state}: missing 'directories' section")
    try:
        directories = {pid: EgosDirectory.from_dict(d) for pid, d in sorted(raw.items())}
    except (KeyError, TypeError, ValueError) as exc:
        raise _Invalid(f"{args.state}: malformed directory: {exc}") from None
    dumped = {pid: d.to_dict() for pid, d in directories.items()}
    converged = len({json.dumps(d, sort_keys=True) for d in dumped.values()}) <= 1
    lines = []
    for holder, directory in directories.items():
        lines.append(f"directory at {holder}")
        for pid, entry in sorted(directory.entries.items()):
            versions = ",".join(f"{p}@{v}" for p, v in entry.policy_versions) or "-"
            lines.append(
                f"  {pid} stamp=({entry.stamp.counter},{entry.stamp.origin_id}) "
                f"policies={versions} fvus={len(entry.fvu_topology)} "
                f"digest={entry.results_digest.hex()[:16]}"
            )
    lines.append(f"converged {str(converged).lower()}")
    _emit(args, {"directories": dumped, "converged": converged}, lines)
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpe", description="Privacy policy enforcement simulator.")
    parser.add_argument("--version", action="version", version=f"dpe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(p: argparse.ArgumentParser, fn: Callable[[argparse.Namespace], int]) -> None:
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.set_defaults(fn=fn)

    run = sub.add_parser("run", help="run a scenario file or cookbook scenario")
    run.add_argument("scenario", help="scenario file, or one of: " + ", ".join(COOKBOOK))
    run.add_argument("--out", help="write the trace here")
    run.add_argument("--report", help="write the JSON report here")
    run.add_argument("--state", help="write final console and directory state here")
    run.add_argument("--check", action="store_true", help="evaluate the property suite; exit 2 on failure")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    add(run, cmd_run)

    policy = sub.add_parser("policy", help="policy tools").add_subparsers(dest="policy_cmd", required=True)
    check = policy.add_parser("check", help="compile a policy and print effective settings")
    check.add_argument("policy")
    check.add_argument("--tags", help="comma-separated zone tags")
    add(check, cmd_policy_check)

    cov = sub.add_parser("coverage", help="hex layout coverage diagnostics")
    cov.add_argument("--width", type=float, required=True)
    cov.add_argument("--height", type=float, required=True)
    cov.add_argument("--pitch", type=float, required=True)
    cov.add_argument("--radius", type=float, required=True)
    cov.add_argument("--grid-step", type=float, default=DEFAULT_GRID_STEP)
    add(cov, cmd_coverage)

    frame = sub.add_parser("frame", help="wire frame tools").add_subparsers(dest="frame_cmd", required=True)
    inspect = frame.add_parser("inspect", help="decode and print one frame")
    inspect.add_argument("frame")
    keys = inspect.add_mutually_exclusive_group(required=True)
    keys.add_argument("--key", help="32-byte key as hex")
    keys.add_argument("--premise", help="use the premise's derived key")
    add(inspect, cmd_frame_inspect)

    egos = sub.add_parser("egos", help="directory tools").add_subparsers(dest="egos_cmd", required=True)
    dump = egos.add_parser("dump", help="print directories from a --state file")
    dump.add_argument("state")
    add(dump, cmd_egos_dump)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors are input errors; --help/--version exit 0
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        return args.fn(args)
    except _Invalid as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ScenarioError as exc:
        print(f"error: {exc.field}: {exc.message}", file=sys.stderr)
    except (ParseError, ValidationError, InvalidGeometry) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except DpeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
