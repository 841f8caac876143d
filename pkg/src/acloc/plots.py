"""Matplotlib figure rendering for the report path.

Figures are written next to the delimited outputs; byte-stable for equal
inputs (Agg backend, fixed metadata).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import LAYOUTS, EvalReport  # noqa: E402

_SAVE_KW = {"dpi": 120, "metadata": {"Software": "acloc"}}


def save_report_figure(reports, path, layout: str = "charades") -> None:
    """Grouped bar chart of the report's recall columns, one group per metric."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    columns = LAYOUTS[layout]
    labels = [label for label, _ in columns]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    width = 0.8 / max(len(reports), 1)
    for r_idx, report in enumerate(reports):
        xs = [i + r_idx * width for i in range(len(columns))]
        ys = [report.recalls[key] for _, key in columns]
        ax.bar(xs, ys, width=width, label=report.method)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(columns))])
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("recall")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_arf_figure(curves: dict, path, iou_thresh: float = 0.5) -> None:
    """AR-F curves, one line per method; curves maps name -> [(freq, recall)]."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for name, curve in curves.items():
        xs = [f for f, _ in curve]
        ys = [r for _, r in curve]
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xlabel("frequency (windows per second)")
    ax.set_ylabel(f"average recall @ tIoU {iou_thresh}")
    ax.set_ylim(0.0, 1.05)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_loss_figure(log_rows, path) -> None:
    """Training loss curve; rows are (step, *losses), last column is total."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    steps = [row[0] for row in log_rows]
    ax.plot(steps, [row[-1] for row in log_rows], label="total")
    if len(log_rows) and len(log_rows[0]) == 4:
        ax.plot(steps, [row[1] for row in log_rows], label="alignment", alpha=0.7)
        ax.plot(steps, [row[2] for row in log_rows], label="regression", alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
