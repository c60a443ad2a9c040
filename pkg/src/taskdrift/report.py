"""Report rendering: delimited tables plus matplotlib figures.

Every reporter writes a machine-readable file (CSV/JSON/JSONL) and, next to
it, a rendered PNG of the same data. Figures use the Agg backend; nothing
here opens a window.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .domain import DecisionKind
from .emb_io import atomic_write_bytes
from .synth import RecallReport, ScenarioReport

PathLike = Union[str, Path]


def write_matrix_csv(path: PathLike, matrix: np.ndarray, labels: Sequence[int]) -> None:
    """Task-by-task score matrix as CSV with a header row/column of task ids."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["task"] + [str(t) for t in labels])
    for t, row in zip(labels, matrix):
        writer.writerow([str(t)] + [repr(float(v)) for v in row])
    atomic_write_bytes(path, buf.getvalue().encode())


def render_drift_matrix(path: PathLike, matrix: np.ndarray, labels: Sequence[int]) -> None:
    """Heatmap of signed drift scores, diverging colormap centered at zero."""
    n = len(labels)
    vmax = float(np.abs(matrix).max()) or 1.0
    fig, ax = plt.subplots(figsize=(1.1 * n + 2, 1.1 * n + 1.5))
    im = ax.imshow(matrix, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_xticks(range(n), [str(t) for t in labels])
    ax.set_yticks(range(n), [str(t) for t in labels])
    ax.set_xlabel("stored task")
    ax.set_ylabel("arriving task")
    ax.set_title("drift score (negative: same task, positive: drift)")
    for i in range(n):
        for j in range(n):
            ax.text(j, i, f"{matrix[i, j]:+.3f}", ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_recall_csv(path: PathLike, reports: Mapping[int, RecallReport]) -> None:
    """Stage-by-task recall table; one row per (stage, task)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["num_tasks", "task", "recall", "min_required", "sufficient"])
    for stage in sorted(reports):
        rep = reports[stage]
        for task in sorted(rep.per_task_recall):
            r = rep.per_task_recall[task]
            writer.writerow(
                [
                    stage,
                    task,
                    repr(float(r)),
                    repr(rep.min_required),
                    str(task not in rep.insufficient_tasks),
                ]
            )
    atomic_write_bytes(path, buf.getvalue().encode())


def render_recall_bars(path: PathLike, reports: Mapping[int, RecallReport]) -> None:
    """Grouped bars of per-task recall per stage with the 1/T floor lines."""
    stages = sorted(reports)
    tasks = sorted({t for s in stages for t in reports[s].per_task_recall})
    width = 0.8 / max(len(stages), 1)
    fig, ax = plt.subplots(figsize=(1.4 * len(tasks) + 3, 4.5))
    cmap = plt.get_cmap("viridis")
    for si, stage in enumerate(stages):
        rep = reports[stage]
        xs, ys = [], []
        for ti, task in enumerate(tasks):
            if task in rep.per_task_recall and not np.isnan(rep.per_task_recall[task]):
                xs.append(ti + (si - (len(stages) - 1) / 2) * width)
                ys.append(rep.per_task_recall[task])
        ax.bar(xs, ys, width=width * 0.95, color=cmap(si / max(len(stages) - 1, 1)),
               label=f"{stage} tasks")
        for x in xs:
            ax.hlines(rep.min_required, x - width / 2, x + width / 2, colors="black", lw=1.5)
    ax.set_xticks(range(len(tasks)), [f"task {t}" for t in tasks])
    ax.set_ylabel("per-sample recall")
    ax.set_ylim(0, 1.05)
    ax.set_title("task recall per classifier stage (black line: required 1/T)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_scenario_json(path: PathLike, report: ScenarioReport) -> None:
    atomic_write_bytes(path, (json.dumps(report.to_dict(), indent=2) + "\n").encode())


def render_scenario_timeline(path: PathLike, report: ScenarioReport) -> None:
    """Decision timeline: decided task id per step, new tasks marked."""
    steps = report.steps
    xs = [s.step for s in steps]
    ys = [s.decided_task for s in steps]
    labeled = all(s.expected_task is not None for s in steps)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(steps) + 2), 3.8))
    if labeled:
        truth = [s.expected_task for s in steps]
        ax.step(xs, truth, where="mid", color="0.7", lw=4, label="expected task", zorder=1)
    ax.plot(xs, ys, "o-", color="tab:blue", label="decided task", zorder=2)
    new_xs = [s.step for s in steps if s.kind is DecisionKind.NEW_TASK]
    new_ys = [s.decided_task for s in steps if s.kind is DecisionKind.NEW_TASK]
    ax.scatter(new_xs, new_ys, marker="*", s=180, color="tab:red", label="new task", zorder=3)
    warn_xs = [s.step for s in steps if s.warned]
    if warn_xs:
        for x in warn_xs:
            ax.axvline(x, color="orange", ls="--", lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("task id")
    ax.set_yticks(sorted(set(ys)))
    title = "stream decisions"
    if report.task_id_accuracy is not None:
        title = f"scenario decisions (accuracy {report.task_id_accuracy:.2f})"
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
