"""SVG line plots (mean +/- std bands) from trajectory or aggregate CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import read_aggregate_csv, read_trajectory_csv

# stable ids inside the SVG so reruns diff cleanly
matplotlib.rcParams["svg.hashsalt"] = "antipgd"

_SVG_META = {"Date": None}


def _detect_kind(path) -> str:
    with open(path) as fh:
        first = fh.readline()
    if "aggregate" in first:
        return "aggregate"
    if "trajectory" in first:
        return "trajectory"
    raise ValueError(f"{path}: not an antipgd CSV (missing schema comment)")


def plot_csv(csv_path, y: str, out_path, logy: bool = False, title: str | None = None) -> Path:
    """Plot one metric column against step; one SVG per call.

    Aggregate CSVs get one line per config with a +/- one-std band where the
    std column is populated; raw trajectory CSVs get a single line.
    """
    csv_path = Path(csv_path)
    kind = _detect_kind(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "aggregate":
        rows = read_aggregate_csv(csv_path)
        configs = sorted({r["config"] for r in rows})
        mean_col, std_col = f"{y}_mean", f"{y}_std"
        if rows and mean_col not in rows[0]:
            raise ValueError(f"no column {mean_col!r} in {csv_path}")
        for config in configs:
            sub = [r for r in rows if r["config"] == config]
            steps = np.array([r["step"] for r in sub])
            mean = np.array([r[mean_col] for r in sub])
            std = np.array([r[std_col] for r in sub])
            keep = ~np.isnan(mean)
            ax.plot(steps[keep], mean[keep], label=config)
            band = keep & ~np.isnan(std)
            if band.any():
                ax.fill_between(
                    steps[band], (mean - std)[band], (mean + std)[band], alpha=0.25, linewidth=0
                )
        ax.legend()
    else:
        table = read_trajectory_csv(csv_path)
        if y not in table.metrics:
            raise ValueError(f"no column {y!r} in {csv_path}")
        vals = table.metrics[y]
        keep = ~np.isnan(vals)
        ax.plot(table.step[keep], vals[keep])
    ax.set_xlabel("step")
    ax.set_ylabel(y)
    if logy:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return out_path
