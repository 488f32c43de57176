"""Command-line interface: run, sweep, validate.

This is the only I/O boundary.  A run directory contains metrics.csv (one
row per epoch), events.jsonl (one event per line) and manifest.json whose
content digests make the run auditable.  Files are written atomically so a
failed run never leaves a partial metrics.csv behind.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import datetime
import hashlib
import io
import itertools
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import Scenario, ScenarioError, parse_scenario, scenario_from_dict
from .metrics import METRIC_COLUMNS, trajectory_slope
from .simulation import RunResult, run


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv_text(result: RunResult) -> str:
    lines = [",".join(METRIC_COLUMNS)]
    for row in result.metrics:
        d = row.to_dict()
        lines.append(",".join(_fmt(d[c]) for c in METRIC_COLUMNS))
    return "\n".join(lines) + "\n"


def events_jsonl_text(result: RunResult) -> str:
    return "".join(json.dumps(ev, sort_keys=True) + "\n" for ev in result.events)


def _atomic_write(path: Path, text: str) -> str:
    """Write text atomically; returns the sha256 hex digest."""
    data = text.encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return hashlib.sha256(data).hexdigest()


def write_run_outputs(result: RunResult, out_dir: Path, started_at: str) -> dict:
    """Write metrics.csv, events.jsonl and manifest.json into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    digests = {
        "metrics.csv": _atomic_write(out_dir / "metrics.csv", metrics_csv_text(result)),
        "events.jsonl": _atomic_write(out_dir / "events.jsonl", events_jsonl_text(result)),
    }
    manifest = {
        "artifact_version": __version__,
        "seed": result.seed,
        "scenario": result.scenario,
        "started_at": started_at,
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": {name: {"path": name, "sha256": digest} for name, digest in digests.items()},
    }
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def cmd_run(args) -> int:
    try:
        scenario = parse_scenario(args.scenario)
        if args.seed is not None:
            scenario = scenario.with_seed(args.seed)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    started = _now()
    result = run(scenario)
    try:
        write_run_outputs(result, Path(args.out), started)
    except OSError as e:
        print(f"error: cannot write outputs to {args.out}: {e}", file=sys.stderr)
        return 1
    print(f"run complete: {scenario.horizon} epochs -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(scenario.to_dict(), indent=2, sort_keys=True))
    return 0


# -- sweep ------------------------------------------------------------------


def _parse_set(values: list[str]) -> dict[str, list]:
    """--set key=v1,v2 arguments into an override grid."""
    grid: dict[str, list] = {}
    for spec in values:
        if "=" not in spec:
            raise ScenarioError(f"--set expects key=v1,v2,... got: {spec!r}")
        key, _, vals = spec.partition("=")
        parsed = []
        for tok in vals.split(","):
            try:
                parsed.append(json.loads(tok))
            except json.JSONDecodeError:
                parsed.append(tok)
        if not parsed:
            raise ScenarioError(f"--set {key} has no values")
        grid[key] = parsed
    return grid


def _apply_override(d: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ScenarioError(f"invalid sweep key: '{dotted}'")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ScenarioError(f"invalid sweep key: '{dotted}'")
    node[parts[-1]] = value


def _run_to_dir(payload: tuple[dict, str]) -> str:
    """Worker: run one scenario dict and write its output directory."""
    scenario_dict, out_dir = payload
    scenario = scenario_from_dict(scenario_dict)
    started = _now()
    result = run(scenario)
    write_run_outputs(result, Path(out_dir), started)
    return out_dir


def _read_metrics_csv(path: Path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if v == "":
                    row[k] = None
                elif k in ("epoch", "db_size", "active_users", "active_items"):
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


_SUMMARY_METRICS = [c for c in METRIC_COLUMNS if c != "epoch"]


def _aggregate_cell(rep_dirs: list[Path]) -> dict:
    """Per-cell mean/std of final-epoch values and trajectory slopes."""
    import numpy as np

    finals: dict[str, list] = {m: [] for m in _SUMMARY_METRICS}
    slopes: dict[str, list] = {m: [] for m in _SUMMARY_METRICS}
    for rd in rep_dirs:
        rows = _read_metrics_csv(rd / "metrics.csv")
        epochs = [r["epoch"] for r in rows]
        for m in _SUMMARY_METRICS:
            if rows and rows[-1][m] is not None:
                finals[m].append(rows[-1][m])
            s = trajectory_slope(epochs, [r[m] for r in rows])
            if s is not None:
                slopes[m].append(s)
    out = {}
    for m in _SUMMARY_METRICS:
        out[f"final_{m}_mean"] = float(np.mean(finals[m])) if finals[m] else None
        out[f"final_{m}_std"] = float(np.std(finals[m])) if finals[m] else None
        out[f"slope_{m}_mean"] = float(np.mean(slopes[m])) if slopes[m] else None
        out[f"slope_{m}_std"] = float(np.std(slopes[m])) if slopes[m] else None
    return out


def cmd_sweep(args) -> int:
    try:
        base = parse_scenario(args.scenario).to_dict()
        grid = _parse_set(args.set or [])
        # fail on any bad key before a single run starts
        for key, values in grid.items():
            probe = copy.deepcopy(base)
            for v in values:
                _apply_override(probe, key, v)
        keys = sorted(grid)
        cells = list(itertools.product(*(grid[k] for k in keys))) if keys else [()]
        jobs: list[tuple[dict, str]] = []
        out_root = Path(args.out)
        cell_dirs: list[tuple[int, tuple, list[Path]]] = []
        for ci, combo in enumerate(cells):
            cell_dir = out_root / f"cell{ci:03d}"
            rep_dirs = []
            for rep in range(args.reps):
                d = copy.deepcopy(base)
                for k, v in zip(keys, combo):
                    _apply_override(d, k, v)
                d["seed"] = base["seed"] + rep
                scenario_from_dict(d)  # validate overridden values up front
                rep_dir = cell_dir / f"rep{rep:02d}"
                jobs.append((d, str(rep_dir)))
                rep_dirs.append(rep_dir)
            cell_dirs.append((ci, combo, rep_dirs))
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    try:
        n_workers = args.jobs or os.cpu_count() or 1
        if n_workers > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
                list(pool.map(_run_to_dir, jobs))
        else:
            for payload in jobs:
                _run_to_dir(payload)

        buf = io.StringIO()
        header = ["cell", *keys, "reps"]
        for m in _SUMMARY_METRICS:
            header += [f"final_{m}_mean", f"final_{m}_std", f"slope_{m}_mean", f"slope_{m}_std"]
        buf.write(",".join(header) + "\n")
        for ci, combo, rep_dirs in cell_dirs:
            agg = _aggregate_cell(rep_dirs)
            cells_vals = [f"cell{ci:03d}", *[_fmt(v) for v in combo], str(args.reps)]
            cells_vals += [_fmt(agg[c]) for c in header[len(keys) + 2 :]]
            buf.write(",".join(cells_vals) + "\n")
        _atomic_write(out_root / "summary.csv", buf.getvalue())
    except OSError as e:
        print(f"error: cannot write sweep outputs to {args.out}: {e}", file=sys.stderr)
        return 1
    print(f"sweep complete: {len(cells)} cells x {args.reps} replications -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recdyn", description="Longitudinal recommender-dynamics simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of scenario overrides x replications")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--set", action="append", metavar="KEY=V1,V2", help="override grid, repeatable")
    p_sweep.add_argument("--reps", type=int, default=1, help="replications per cell")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--jobs", type=int, default=None, help="worker processes (default: cpu count)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="parse a scenario and print its resolved form")
    p_val.add_argument("--scenario", required=True)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())
