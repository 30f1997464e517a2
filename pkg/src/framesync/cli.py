"""Command-line front end: run, validate, and sweep scenario configs."""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import BlowUpError, ConfigError, DriftError, FramesyncError
from .scenarios import (
    OUTPUT_ENV,
    SCENARIOS,
    ScenarioReport,
    output_root,
    resolve_config,
    run_scenario,
)

__all__ = ["main"]

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_ABORTED = 3


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def _print_report(report: ScenarioReport) -> None:
    for c in report.checks:
        if c.op == "info":
            print(f"[info] {c.name}: {c.claim}")
            continue
        tag = "PASS" if c.passed else "FAIL"
        print(f"[{tag}] {c.name}: {c.claim} "
              f"(value={c.value:.6g}, threshold={c.threshold:.6g})")
    print(f"{report.scenario}: {'PASSED' if report.passed else 'FAILED'}")


def _cmd_run(args) -> int:
    cfg = resolve_config(_load_config(args.config))
    try:
        report = run_scenario(cfg)
    except (DriftError, BlowUpError) as exc:
        out = output_root(cfg)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "verdict.json", "w") as fh:
            json.dump({"scenario": cfg.scenario, "config": cfg.to_dict(),
                       "passed": False, "aborted": str(exc)}, fh, indent=2)
            fh.write("\n")
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    _print_report(report)
    print(f"artifacts in {output_root(cfg)}")
    return EXIT_PASS if report.passed else EXIT_CHECK_FAILED


def _cmd_validate(args) -> int:
    cfg = resolve_config(_load_config(args.config))
    print(json.dumps(cfg.to_dict(), indent=2))
    return EXIT_PASS


def _expand_members(raw: dict) -> list[dict]:
    """Cross product over list-valued keys (kappa stays a list for the
    built-in sweep scenario, which consumes it whole)."""
    keep_list = {"kappa"} if raw.get("scenario") == "practical_consensus_sweep" else set()
    axes = {k: v for k, v in raw.items()
            if isinstance(v, list) and k not in keep_list}
    if not axes:
        return [dict(raw)]
    keys = sorted(axes)
    members = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        member = dict(raw)
        member.update(dict(zip(keys, combo)))
        members.append(member)
    return members


def _sweep_member(payload: tuple[dict, str]) -> dict:
    raw, out_dir = payload
    member = dict(raw)
    member["output_dir"] = out_dir
    try:
        cfg = resolve_config(member)
        report = run_scenario(cfg)
        return {"config": cfg.to_dict(), "passed": report.passed,
                "exit": EXIT_PASS if report.passed else EXIT_CHECK_FAILED,
                "failed_checks": [c.name for c in report.checks if not c.passed]}
    except ConfigError as exc:
        return {"config": member, "passed": False,
                "exit": EXIT_BAD_CONFIG, "error": str(exc)}
    except (DriftError, BlowUpError) as exc:
        return {"config": member, "passed": False,
                "exit": EXIT_ABORTED, "error": str(exc)}


def _cmd_sweep(args) -> int:
    raw = _load_config(args.config)
    if "scenario" not in raw:
        raise ConfigError("missing required key 'scenario'")
    members = _expand_members(raw)
    base_dir = raw.get("output_dir", f"runs/{raw['scenario']}_sweep")
    payloads = [(member, f"{base_dir}/member_{i:03d}")
                for i, member in enumerate(members)]
    results: list[dict] = []
    if args.jobs > 1 and len(payloads) > 1:
        try:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_member, payloads))
        except OSError:
            results = []
    if not results:
        results = [_sweep_member(p) for p in payloads]

    env_base = os.environ.get(OUTPUT_ENV)
    root = Path(env_base) / base_dir if env_base else Path(base_dir)
    root.mkdir(parents=True, exist_ok=True)
    verdict = {"scenario": raw["scenario"], "members": results,
               "passed": all(r["passed"] for r in results)}
    with open(root / "sweep_verdict.json", "w") as fh:
        json.dump(verdict, fh, indent=2)
        fh.write("\n")
    for i, r in enumerate(results):
        state = "PASSED" if r["passed"] else f"FAILED ({r.get('error', 'checks')})"
        print(f"member {i:03d}: {state}")
    print(f"sweep: {'PASSED' if verdict['passed'] else 'FAILED'} "
          f"({len(results)} members), verdict in {root}")
    if verdict["passed"]:
        return EXIT_PASS
    codes = {r["exit"] for r in results if not r["passed"]}
    return max(codes)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="framesync",
        description="Consensus flows for orthonormal-frame ensembles: run "
                    "canned scenarios, check their guarantees, write reports.",
    )
    parser.add_argument("--output-root", metavar="DIR",
                        help=f"root for all artifacts (overrides ${OUTPUT_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config", help="path to a scenario JSON file")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate",
                           help="validate a config and print its resolved form")
    p_val.add_argument("config", help="path to a scenario JSON file")
    p_val.set_defaults(func=_cmd_validate)

    p_sweep = sub.add_parser(
        "sweep", help="expand list-valued keys into a family of runs")
    p_sweep.add_argument("config", help="path to a scenario JSON file")
    p_sweep.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                         help="parallel workers (1 disables multiprocessing)")
    p_sweep.set_defaults(func=_cmd_sweep)

    # accept --output-root after the verb too; SUPPRESS keeps a value given
    # before the verb from being clobbered by the subparser's default
    for p in (p_run, p_val, p_sweep):
        p.add_argument("--output-root", metavar="DIR",
                       default=argparse.SUPPRESS,
                       help=f"root for all artifacts (overrides ${OUTPUT_ENV})")

    # informational: list the known scenarios
    p_list = sub.add_parser("scenarios", help="list available scenarios")
    p_list.set_defaults(func=lambda args: print("\n".join(SCENARIOS)) or 0)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.output_root:
        os.environ[OUTPUT_ENV] = args.output_root
    try:
        code = args.func(args)
        return EXIT_PASS if code is None else code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FramesyncError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
