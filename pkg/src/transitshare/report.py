"""Run outputs: delimited metrics/logs plus rendered figures.

CSV files are the canonical output (stable column order, 6 significant
digits); figures are rendered next to them from the same rows.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

METRICS_COLUMNS = ["config_hash", "WT_mean", "WT_max", "JT_mean", "VTL_mean",
                   "share_R", "share_WTR", "share_RTW", "share_RTR",
                   "sim_wall_seconds"]
EPOCH_COLUMNS = ["epoch", "zone", "lambda", "mu", "cx", "cy", "idle_count"]
RELOCATION_COLUMNS = ["epoch", "policy", "phi", "moved_vehicles", "total_reloc_minutes"]
DECISION_COLUMNS = ["request_id", "option", "vehicle_id", "s1", "s2",
                    "cost_R", "cost_RTR", "cost_RTW", "cost_WTR"]


def fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf"
        return f"{value:.6g}"
    return str(value)


def write_rows(path, columns: Sequence[str], rows: Sequence[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c, "")) for c in columns])
    return path


def write_metrics_csv(path, rows: Sequence[dict]) -> Path:
    return write_rows(path, METRICS_COLUMNS, rows)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return list(reader)


def write_run_outputs(outdir, report, config_hash: str, events: bool = False) -> dict:
    """All delimited outputs of one run into a directory."""
    outdir = Path(outdir)
    written = {
        "metrics": write_metrics_csv(outdir / "metrics.csv",
                                     [report.metrics_row(config_hash)]),
        "epochs": write_rows(outdir / "epochs.csv", EPOCH_COLUMNS, report.epoch_rows),
        "relocation": write_rows(outdir / "relocation.csv", RELOCATION_COLUMNS,
                                 report.relocation_rows),
        "decisions": write_rows(outdir / "decisions.csv", DECISION_COLUMNS,
                                report.decision_rows),
    }
    if events:
        path = outdir / "events.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["time", "kind", "subject", "detail"])
            for t, kind, subject, detail in report.events:
                w.writerow([fmt(float(t)), kind, subject, detail])
        written["events"] = path
    return written


# -- comparison tables ---------------------------------------------------------

_DELTA_COLUMNS = [c for c in METRICS_COLUMNS if c not in ("config_hash", "sim_wall_seconds")]


def compare_metrics(baseline: Sequence[dict], variant: Sequence[dict]) -> list[dict]:
    """Percentage deltas (variant - baseline) / baseline, row by row."""
    if len(baseline) != len(variant):
        raise ValueError(f"row count mismatch: {len(baseline)} vs {len(variant)}")
    for rows, tag in ((baseline, "baseline"), (variant, "variant")):
        for row in rows:
            missing = set(METRICS_COLUMNS) - set(row)
            if missing:
                raise ValueError(f"{tag} is missing columns {sorted(missing)}")
    out = []
    for base, var in zip(baseline, variant):
        entry = {"row": len(out)}
        for col in _DELTA_COLUMNS:
            b, v = float(base[col]), float(var[col])
            if b == 0.0:
                entry[col] = f"{fmt(v)}(n/a)" if v != 0 else f"{fmt(v)}(+0.0%)"
            else:
                pct = 100.0 * (v - b) / b
                entry[col] = f"{fmt(v)}({pct:+.1f}%)"
        out.append(entry)
    return out


def write_compare_csv(path, delta_rows: Sequence[dict]) -> Path:
    return write_rows(path, ["row"] + _DELTA_COLUMNS, delta_rows)


# -- figures --------------------------------------------------------------------


def render_zone_traces(epoch_rows: Sequence[dict], path) -> Optional[Path]:
    """Fleet-average demand rate, service rate and idle count per epoch."""
    if not epoch_rows:
        return None
    epochs = sorted({int(r["epoch"]) for r in epoch_rows})
    lam, mu, idle = [], [], []
    for h in epochs:
        rows = [r for r in epoch_rows if int(r["epoch"]) == h]
        lam.append(sum(float(r["lambda"]) for r in rows) / len(rows))
        mu.append(sum(float(r["mu"]) for r in rows) / len(rows))
        idle.append(sum(float(r["idle_count"]) for r in rows) / len(rows))
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for ax, series, label in zip(axes, (lam, mu, idle),
                                 ("mean zone arrival rate (cust/min)",
                                  "mean zone service rate (cust/min)",
                                  "mean idle vehicles per zone")):
        ax.plot(epochs, series, marker="o", ms=3)
        ax.set_ylabel(label, fontsize=8)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("relocation epoch")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sweep(rows: Sequence[dict], axis: str, path) -> Optional[Path]:
    """WT/JT/VTL against one sweep axis, one line per metric."""
    if not rows:
        return None
    try:
        pts = sorted((float(r[axis]), r) for r in rows)
    except (KeyError, ValueError):
        return None
    xs = [x for x, _ in pts]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for col, style in (("WT_mean", "o-"), ("JT_mean", "s-"), ("VTL_mean", "^-")):
        ax.plot(xs, [float(r[col]) for _, r in pts], style, ms=4, label=col)
    ax.set_xlabel(axis)
    ax.set_ylabel("minutes")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
