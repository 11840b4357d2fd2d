"""Command-line entry point: single runs, parameter sweeps, correlation reports.

Exit codes: 0 success, 2 bad configuration, 3 runtime abort. The output root
defaults to ./out and can be overridden with --out or the DCPFL_OUT_ROOT
environment variable.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, parse_kv_file
from .discrepancy import DiscrepancyMatrix
from .errors import ConfigError, DcpflError
from .reporting import (
    correlation_report,
    render_sweep_figure,
    write_run_artifacts,
    _atomic_write,
)
from .runtime import run

SWEEP_HEADER = [
    "axis", "value", "seed", "kind", "status", "final_mean_accuracy", "group_kld",
    "rounds_run", "total_bytes_up", "total_comm_time_s", "total_time_s",
]


def _out_root(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("DCPFL_OUT_ROOT", "out"))


def cmd_run(args) -> int:
    try:
        overrides = {"seed": args.seed_override} if args.seed_override is not None else None
        config = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = _out_root(args) / (args.name or Path(args.config).stem)
    try:
        result = run(config)
        write_run_artifacts(result, out_dir, figures=not args.no_figures)
    except DcpflError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 3
    print(f"run complete: {out_dir}")
    print(f"  rounds: {result.summary['rounds_run']}  "
          f"final mean accuracy: {result.summary['final_mean_accuracy']:.4f}")
    return 0


def _parse_sweep_spec(path: Path):
    raw = parse_kv_file(path)
    for key in ("axis", "values"):
        if key not in raw:
            raise ConfigError(f"missing required field: {key}")
    axis = raw.pop("axis")
    values_raw = [v.strip() for v in raw.pop("values").split(",") if v.strip()]
    repeats = int(raw.pop("repeats", "1"))
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    type_names = {"int": int, "float": float, "str": str, "list[int]": "list[int]"}
    field_types = {
        f.name: type_names.get(f.type, f.type) if isinstance(f.type, str) else f.type
        for f in fields(RunConfig)
    }
    if axis not in field_types:
        raise ConfigError(f"axis {axis!r} is not a RunConfig field")
    typ = field_types[axis]
    if typ is int:
        values = [int(v) for v in values_raw]
    elif typ is float:
        values = [float(v) for v in values_raw]
    else:
        values = values_raw
    raw.setdefault("algorithm", "dcpfl")

    base_kwargs = {}
    for key, value in raw.items():
        if key not in field_types:
            raise ConfigError(f"unknown config field: {key}")
        t = field_types[key]
        if t is int:
            base_kwargs[key] = int(value)
        elif t is float:
            base_kwargs[key] = float(value)
        elif t is str:
            base_kwargs[key] = value
        else:  # list[int]
            base_kwargs[key] = [int(v) for v in value.split(",") if v.strip()]
    return axis, values, repeats, base_kwargs


def _run_sweep_point(point_args):
    """Worker for one (value, seed) sweep point; returns a sweep.csv row dict."""
    base_kwargs, axis, value, seed, point_dir, figures = point_args
    summary_path = Path(point_dir) / "summary.json"
    if summary_path.is_file():  # resumable: reuse completed points
        summary = json.loads(summary_path.read_text())
        return _point_row(axis, value, seed, "ok", summary)
    try:
        config = RunConfig(**{**base_kwargs, axis: value, "seed": seed})
        result = run(config)
        write_run_artifacts(result, Path(point_dir), figures=figures)
        return _point_row(axis, value, seed, "ok", result.summary)
    except Exception as exc:  # failed points are recorded, sweep continues
        return {"axis": axis, "value": value, "seed": seed, "kind": "seed",
                "status": f"failed: {exc}", "final_mean_accuracy": None, "group_kld": None,
                "rounds_run": None, "total_bytes_up": None, "total_comm_time_s": None,
                "total_time_s": None}


def _point_row(axis, value, seed, status, summary) -> dict:
    return {
        "axis": axis, "value": value, "seed": seed, "kind": "seed", "status": status,
        "final_mean_accuracy": summary["final_mean_accuracy"],
        "group_kld": summary["group_kld"],
        "rounds_run": summary["rounds_run"],
        "total_bytes_up": summary["total_bytes_up"],
        "total_comm_time_s": summary["total_comm_time_s"],
        "total_time_s": summary["total_time_s"],
    }


def cmd_sweep(args) -> int:
    try:
        axis, values, repeats, base_kwargs = _parse_sweep_spec(Path(args.config))
        if args.seed_override is not None:
            base_kwargs["seed"] = args.seed_override
        RunConfig(**base_kwargs)  # validate the base before launching anything
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sweep_dir = _out_root(args) / (args.name or Path(args.config).stem)
    sweep_dir.mkdir(parents=True, exist_ok=True)
    base_seed = base_kwargs.get("seed", RunConfig().seed)

    points = []
    for value in values:
        for k in range(repeats):
            seed = base_seed + k
            point_dir = sweep_dir / "points" / f"{axis}_{value}_seed{seed}"
            points.append((base_kwargs, axis, value, seed, str(point_dir), not args.no_figures))

    if args.parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.parallel) as pool:
            rows = list(pool.map(_run_sweep_point, points))
    else:
        rows = [_run_sweep_point(p) for p in points]

    # per-point means over seeds
    for value in values:
        seed_rows = [r for r in rows if r["value"] == value and r["status"] == "ok"]
        if not seed_rows:
            continue
        mean_row = {
            "axis": axis, "value": value, "seed": "", "kind": "mean", "status": "ok",
            "final_mean_accuracy": float(np.mean([r["final_mean_accuracy"] for r in seed_rows])),
            "group_kld": float(np.mean([r["group_kld"] for r in seed_rows]))
            if seed_rows[0]["group_kld"] is not None else None,
            "rounds_run": float(np.mean([r["rounds_run"] for r in seed_rows])),
            "total_bytes_up": float(np.mean([r["total_bytes_up"] for r in seed_rows])),
            "total_comm_time_s": float(np.mean([r["total_comm_time_s"] for r in seed_rows])),
            "total_time_s": float(np.mean([r["total_time_s"] for r in seed_rows])),
        }
        rows.append(mean_row)

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_HEADER)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in SWEEP_HEADER})
    _atomic_write(sweep_dir / "sweep.csv", buf.getvalue())
    if not args.no_figures:
        render_sweep_figure(rows, axis, sweep_dir / "sweep.png")
    failed = sum(1 for r in rows if r["kind"] == "seed" and r["status"] != "ok")
    print(f"sweep complete: {sweep_dir} ({len(points)} points, {failed} failed)")
    return 0


def cmd_correlate(args) -> int:
    run_dir = Path(args.run_dir)
    disc_path = run_dir / "discrepancy.csv"
    kld_path = run_dir / "kld.csv"
    if not disc_path.is_file() or not kld_path.is_file():
        print(f"error: {run_dir} is missing discrepancy.csv or kld.csv "
              "(run must capture a discrepancy matrix)", file=sys.stderr)
        return 2
    disc = DiscrepancyMatrix.from_csv(disc_path)
    with open(kld_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        kld = np.array([[float(v) for v in row] for row in reader])
    report = correlation_report(disc.values, kld, run_dir, figures=not args.no_figures)
    if report["degenerate"]:
        print("correlation: degenerate (no variance in one of the matrices)")
    else:
        print(f"pearson correlation over {report['pairs']} pairs: {report['pearson']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcpfl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one simulation from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output root (default: $DCPFL_OUT_ROOT or ./out)")
    p_run.add_argument("--name", default=None, help="run directory name (default: config stem)")
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--no-figures", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep from a sweep spec")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--name", default=None)
    p_sweep.add_argument("--seed-override", type=int, default=None)
    p_sweep.add_argument("--parallel", type=int, default=1, metavar="N")
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_corr = sub.add_parser("correlate", help="discrepancy-vs-KLD correlation for a finished run")
    p_corr.add_argument("run_dir")
    p_corr.add_argument("--out", default=None)
    p_corr.add_argument("--no-figures", action="store_true")
    p_corr.set_defaults(func=cmd_correlate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
