"""CSV schemas for trajectories, aggregates, and oracle tables.

Trajectory files (one per run): a ``# antipgd-trajectory-v1`` comment row,
then the fixed column set

    step,seed,train_loss,test_loss,hessian_trace,u_sqnorm,reg_grad_sqnorm

with blanks where a metric does not apply. Floats print as %.17g so values
round-trip float64 exactly and reruns are byte-identical. Aggregates carry
per-(config, step) means and ddof-1 standard deviations across seeds; rows
are emitted in sorted (config, step) order so files diff cleanly.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .optim import Trajectory

TRAJECTORY_SCHEMA = "antipgd-trajectory-v1"
AGGREGATE_SCHEMA = "antipgd-aggregate-v1"
ORACLE_SCHEMA = "antipgd-oracle-v1"

METRIC_COLUMNS = ("train_loss", "test_loss", "hessian_trace", "u_sqnorm", "reg_grad_sqnorm")
TRAJECTORY_COLUMNS = ("step", "seed") + METRIC_COLUMNS


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _parse(s: str) -> float:
    return np.nan if s == "" else float(s)


def atomic_write_text(path: Path, text: str):
    """Write via a temp file + rename so partial files never appear."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv_text(traj: Trajectory) -> str:
    lines = [f"# {TRAJECTORY_SCHEMA}"]
    if traj.diverged:
        lines.append(f"# diverged_at={traj.diverged_at}")
    lines.append(",".join(TRAJECTORY_COLUMNS))
    for i, step in enumerate(traj.steps):
        row = [str(int(step)), str(int(traj.seed))]
        row += [_fmt(traj.column(m)[i]) for m in METRIC_COLUMNS]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    atomic_write_text(path, trajectory_csv_text(traj))
    return path


@dataclass
class TrajectoryTable:
    """Parsed trajectory CSV: step/seed plus one array per metric."""

    step: np.ndarray
    seed: np.ndarray
    metrics: dict
    diverged_at: int | None


def read_trajectory_csv(path) -> TrajectoryTable:
    diverged_at = None
    rows = []
    with open(path, newline="") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "diverged_at=" in line:
                    diverged_at = int(line.split("=", 1)[1])
                continue
            if header is None:
                header = line.split(",")
                if tuple(header) != TRAJECTORY_COLUMNS:
                    raise ValueError(f"unexpected columns in {path}: {header}")
                continue
            rows.append(line.split(","))
    step = np.array([int(r[0]) for r in rows], dtype=np.int64)
    seed = np.array([int(r[1]) for r in rows], dtype=np.uint64)
    metrics = {
        m: np.array([_parse(r[i + 2]) for r in rows]) for i, m in enumerate(METRIC_COLUMNS)
    }
    return TrajectoryTable(step, seed, metrics, diverged_at)


def aggregate_tables(named_tables) -> list[dict]:
    """Reduce {config_name: [TrajectoryTable, ...]} to per-step mean/std rows.

    Divergent runs contribute up to their truncation point; n_seeds counts
    the runs present at each step. Standard deviations are reported only
    when at least two runs cover the step.
    """
    out = []
    for name in sorted(named_tables):
        tables = named_tables[name]
        steps = sorted({int(s) for t in tables for s in t.step})
        for step in steps:
            row = {"config": name, "step": step}
            present = []
            for t in tables:
                idx = np.nonzero(t.step == step)[0]
                if idx.size:
                    present.append({m: t.metrics[m][idx[0]] for m in METRIC_COLUMNS})
            row["n_seeds"] = len(present)
            for m in METRIC_COLUMNS:
                vals = np.array([p[m] for p in present])
                vals = vals[~np.isnan(vals)]
                if vals.size == 0:
                    row[f"{m}_mean"] = np.nan
                    row[f"{m}_std"] = np.nan
                else:
                    row[f"{m}_mean"] = float(vals.mean())
                    row[f"{m}_std"] = float(vals.std(ddof=1)) if vals.size >= 2 else np.nan
            out.append(row)
    return out


AGGREGATE_COLUMNS = ("config", "step", "n_seeds") + tuple(
    f"{m}_{stat}" for m in METRIC_COLUMNS for stat in ("mean", "std")
)


def aggregate_csv_text(rows: list[dict]) -> str:
    lines = [f"# {AGGREGATE_SCHEMA}", ",".join(AGGREGATE_COLUMNS)]
    for row in rows:
        cells = []
        for col in AGGREGATE_COLUMNS:
            val = row.get(col)
            if col in ("config",):
                cells.append(str(val))
            elif col in ("step", "n_seeds"):
                cells.append(str(int(val)))
            else:
                cells.append(_fmt(val))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def read_aggregate_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        if tuple(header) != AGGREGATE_COLUMNS:
            raise ValueError(f"unexpected columns in {path}: {header}")
        for cells in reader:
            row = {"config": cells[0], "step": int(cells[1]), "n_seeds": int(cells[2])}
            for col, cell in zip(AGGREGATE_COLUMNS[3:], cells[3:]):
                row[col] = _parse(cell)
            rows.append(row)
    return rows


def oracle_csv_text(rows: list[dict], columns) -> str:
    lines = [f"# {ORACLE_SCHEMA}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(str(row[c]) if c == "k" else _fmt(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"
