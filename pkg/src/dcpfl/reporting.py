"""Run artifacts: delimited outputs, JSON summaries, and rendered figures.

Every run directory gets rounds.csv, summary.json, events.jsonl, trace.csv,
plus kld.csv / discrepancy.csv / dendrogram.json when captured, and PNG
figures rendered from the same data. Files are written via temp-then-rename
so concurrent sweep points never observe partial artifacts.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .runtime import RunResult

ROUNDS_HEADER = [
    "round", "mean_loss", "mean_accuracy", "gamma_tilde", "n_groups", "structure",
    "bytes_up", "bytes_down", "comp_time_s", "comm_time_s", "is_comm_round",
]


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_rounds_csv(result: RunResult, path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(ROUNDS_HEADER)
    for r in result.records:
        writer.writerow([
            r.round, repr(r.mean_loss), repr(r.mean_accuracy), repr(r.gamma_tilde),
            r.n_groups, r.structure, r.bytes_up, r.bytes_down,
            repr(r.comp_time), repr(r.comm_time), int(r.is_comm_round),
        ])
    _atomic_write(path, buf.getvalue())


def write_events_jsonl(result: RunResult, path: Path) -> None:
    lines = [json.dumps(ev, sort_keys=True) for ev in result.events]
    _atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def write_summary_json(result: RunResult, path: Path) -> None:
    _atomic_write(path, json.dumps(result.summary, indent=2, sort_keys=True) + "\n")


def render_figures(result: RunResult, out_dir: Path) -> list[Path]:
    """Loss/curvature and accuracy figures next to the delimited output."""
    made = []
    rounds = [r.round for r in result.records]

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(rounds, result.trace.raw[: len(rounds)], label="raw loss", alpha=0.5)
    ax1.plot(rounds, result.trace.smoothed[: len(rounds)], label="smoothed loss")
    ax1.set_ylabel("training loss")
    ax1.legend()
    r_vals = [
        (t, v) for t, v in enumerate(result.trace.r[: len(rounds)], start=1) if v is not None
    ]
    if r_vals:
        ax2.plot([t for t, _ in r_vals], [v for _, v in r_vals], ".-", color="tab:red")
    ax2.set_ylabel("radius of curvature")
    ax2.set_xlabel("round")
    fig.tight_layout()
    loss_png = out_dir / "loss_curve.png"
    fig.savefig(loss_png, dpi=120)
    plt.close(fig)
    made.append(loss_png)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(rounds, [r.mean_accuracy for r in result.records], label="mean accuracy")
    ax2 = ax.twinx()
    ax2.step(rounds, [r.n_groups for r in result.records], where="post",
             color="tab:gray", alpha=0.6, label="groups")
    ax.set_xlabel("round")
    ax.set_ylabel("mean test accuracy")
    ax2.set_ylabel("number of groups")
    fig.tight_layout()
    acc_png = out_dir / "accuracy.png"
    fig.savefig(acc_png, dpi=120)
    plt.close(fig)
    made.append(acc_png)
    return made


def write_run_artifacts(result: RunResult, out_dir: Path, figures: bool = True) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "rounds": out_dir / "rounds.csv",
        "summary": out_dir / "summary.json",
        "events": out_dir / "events.jsonl",
        "trace": out_dir / "trace.csv",
    }
    write_rounds_csv(result, paths["rounds"])
    write_summary_json(result, paths["summary"])
    write_events_jsonl(result, paths["events"])
    result.trace.to_csv(paths["trace"])
    if result.kld is not None:
        paths["kld"] = out_dir / "kld.csv"
        _write_matrix_csv(result.kld, paths["kld"])
    if result.disc_matrix is not None:
        paths["discrepancy"] = out_dir / "discrepancy.csv"
        result.disc_matrix.to_csv(paths["discrepancy"])
    if result.graph is not None:
        paths["dendrogram"] = out_dir / "dendrogram.json"
        result.graph.to_json(paths["dendrogram"])
    if figures:
        for p in render_figures(result, out_dir):
            paths[p.stem] = p
    return paths


def _write_matrix_csv(matrix: np.ndarray, path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([f"c{j}" for j in range(matrix.shape[1])])
    for row in matrix:
        writer.writerow([repr(float(v)) for v in row])
    _atomic_write(path, buf.getvalue())


def correlation_report(disc_values: np.ndarray, kld_values: np.ndarray, out_dir: Path,
                       figures: bool = True) -> dict:
    """Scatter CSV + Pearson coefficient for discrepancy vs dataset KLD."""
    n = disc_values.shape[0]
    iu = np.triu_indices(n, k=1)
    d, k = disc_values[iu], kld_values[iu]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["client_i", "client_j", "kld", "discrepancy"])
    for i, j in zip(*iu):
        writer.writerow([i, j, repr(float(kld_values[i, j])), repr(float(disc_values[i, j]))])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "scatter.csv", buf.getvalue())

    if d.std() == 0 or k.std() == 0:
        report = {"pearson": None, "degenerate": True, "pairs": int(d.size)}
    else:
        report = {"pearson": float(np.corrcoef(d, k)[0, 1]), "degenerate": False,
                  "pairs": int(d.size)}
    _atomic_write(out_dir / "correlation.json", json.dumps(report, indent=2) + "\n")

    if figures:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.scatter(k, d, s=14, alpha=0.7)
        ax.set_xlabel("pairwise dataset KLD (nats)")
        ax.set_ylabel("averaged model discrepancy")
        if not report["degenerate"]:
            ax.set_title(f"Pearson r = {report['pearson']:.3f}")
        fig.tight_layout()
        fig.savefig(out_dir / "scatter.png", dpi=120)
        plt.close(fig)
    return report


def render_sweep_figure(rows: list[dict], axis: str, out_path: Path) -> None:
    """Mean final accuracy vs the swept parameter."""
    means = [r for r in rows if r.get("kind") == "mean"]
    if not means:
        return
    xs = [r["value"] for r in means]
    ys = [r["final_mean_accuracy"] for r in means]
    fig, ax = plt.subplots(figsize=(5, 4))
    try:
        xs_f = [float(x) for x in xs]
        ax.plot(xs_f, ys, "o-")
    except (TypeError, ValueError):
        ax.bar(range(len(xs)), ys)
        ax.set_xticks(range(len(xs)), [str(x) for x in xs])
    ax.set_xlabel(axis)
    ax.set_ylabel("final mean accuracy")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
