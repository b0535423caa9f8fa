"""Command line driver.

    bubbleflow <scenario> [--config PATH] [--jobs N] [--out DIR] [--no-text]
    bubbleflow suite --all | --only a,b [--config PATH] [--jobs N] [--out DIR]

Exit status: 0 every check passed, 2 a numerical check failed, 3 invalid
configuration, 4 internal error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .params import ConfigError
from .report import (EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, SCENARIOS, Report,
                     ScenarioConfig, build_id, emit_index, emit_report, output_root)
from .scenarios import PIPELINES, Artifacts


def run_scenario(config: ScenarioConfig, out_dir, jobs: int = 1, text: bool = True) -> Report:
    """Run one scenario, write its CSV files and report, and return the report.

    Module errors are caught and stored on the report; artifacts written
    before the error are kept.
    """
    rep = Report(config.scenario, config.data, build_id())
    art = Artifacts(Path(out_dir), rep)
    start = time.perf_counter()
    try:
        fn = PIPELINES[config.scenario]
        if config.scenario == "threshold":
            fn(config, rep, art, jobs=jobs)
        else:
            fn(config, rep, art)
    except Exception as exc:  # noqa: BLE001 - every failure goes into the report
        rep.error = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=6)}"
    rep.wall_clock = time.perf_counter() - start
    emit_report(rep, out_dir, text=text)
    return rep


def _suite_worker(args):
    raw, name, out_dir, text = args
    cfg = ScenarioConfig.from_dict(raw, name)
    rep = run_scenario(cfg, out_dir, text=text)
    return {"scenario": name, "report": f"{name}/report.json", "passed": rep.passed,
            "exit_code": rep.exit_code, "wall_clock_s": rep.wall_clock}


def run_suite(raw: dict, names, root: Path, jobs: int = 1, text: bool = True) -> tuple[list, Path]:
    """One report per scenario under root/<name>/ plus root/index.json."""
    for name in names:
        ScenarioConfig.from_dict(raw, name)  # validate everything before any work
    tasks = [(raw, name, root / name, text) for name in names]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_suite_worker, tasks))
    else:
        entries = [_suite_worker(t) for t in tasks]
    return entries, emit_index(entries, root)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bubbleflow", description="Run numerical experiments and write reports.")
    ap.add_argument("scenario", choices=SCENARIOS + ("suite",))
    ap.add_argument("--config", help="JSON configuration file (missing keys take default values)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    ap.add_argument("--out", help="output root (overrides $BUBBLEFLOW_OUT)")
    ap.add_argument("--all", action="store_true", help="with 'suite': run every scenario")
    ap.add_argument("--only", help="with 'suite': comma-separated scenario names (may be empty)")
    ap.add_argument("--no-text", action="store_true", help="skip the plain-text summary")
    return ap


def _load_raw(path) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    return raw


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    text = not args.no_text
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        raw = _load_raw(args.config)
        if args.scenario == "suite":
            if args.all == (args.only is not None):
                raise ConfigError("suite needs exactly one of --all or --only")
            names = list(SCENARIOS) if args.all else [n for n in args.only.split(",") if n]
            for n in names:
                if n not in SCENARIOS:
                    raise ConfigError(f"unknown scenario {n!r}")
            base = ScenarioConfig.from_dict(raw, SCENARIOS[0])
            root = output_root(args.out, base.data["out"])
        else:
            cfg = ScenarioConfig.from_dict(raw, args.scenario)
            root = output_root(args.out, cfg.data["out"])
    except ConfigError as exc:
        print(f"bubbleflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.scenario == "suite":
            entries, index = run_suite(raw, names, root, jobs=args.jobs, text=text)
            for e in entries:
                print(f"{e['scenario']:15s} {'PASS' if e['passed'] else 'FAIL'}  ({e['wall_clock_s']:.1f} s)")
            print(f"index: {index}")
            codes = [e["exit_code"] for e in entries]
            if EXIT_INTERNAL in codes:
                return EXIT_INTERNAL
            return EXIT_CHECK_FAILED if EXIT_CHECK_FAILED in codes else EXIT_OK
        rep = run_scenario(cfg, root / cfg.scenario, jobs=args.jobs, text=text)
    except OSError as exc:
        print(f"bubbleflow: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if text:
        print((root / cfg.scenario / "summary.txt").read_text(), end="")
    else:
        print(f"{rep.scenario}: {'PASS' if rep.passed else 'FAIL'}")
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
