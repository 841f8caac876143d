"""Metrics and report emission: R@n,IoU=m over ranked predictions and the
average-recall-vs-frequency curve for window rankings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataValidationError
from .temporal import Interval, tiou

DEFAULT_N_VALUES = (1, 5)
DEFAULT_IOU_VALUES = (0.1, 0.3, 0.5, 0.7)

# report layouts: column label -> (n, m)
LAYOUTS = {
    "charades": [("R@1_0.7", (1, 0.7)), ("R@1_0.5", (1, 0.5)),
                 ("R@5_0.7", (5, 0.7)), ("R@5_0.5", (5, 0.5))],
    "tacos": [("R@1_0.5", (1, 0.5)), ("R@1_0.3", (1, 0.3)), ("R@1_0.1", (1, 0.1)),
              ("R@5_0.5", (5, 0.5)), ("R@5_0.3", (5, 0.3)), ("R@5_0.1", (5, 0.1))],
}


def _as_interval(pair) -> Interval:
    if isinstance(pair, Interval):
        return pair
    return Interval(pair[0], pair[1])


def recall_at(preds_by_query: dict, gt_by_query: dict, n: int, m: float) -> float:
    """Fraction of queries whose top-n predictions contain one with
    tIoU >= m against the ground truth; queries without predictions score 0.
    """
    if not gt_by_query:
        return 0.0
    hits = 0
    for qid, gt in gt_by_query.items():
        gt = _as_interval(gt)
        for pred in list(preds_by_query.get(qid, []))[:n]:
            if tiou(_as_interval(pred), gt) >= m:
                hits += 1
                break
    return hits / len(gt_by_query)


@dataclass
class EvalReport:
    method: str
    recalls: dict[tuple[int, float], float]
    num_queries: int


def compute_report(preds_by_query: dict, gt_by_query: dict,
                   method: str = "model",
                   n_values=DEFAULT_N_VALUES,
                   iou_values=DEFAULT_IOU_VALUES) -> EvalReport:
    recalls = {}
    for n in n_values:
        for m in iou_values:
            recalls[(n, m)] = recall_at(preds_by_query, gt_by_query, n, m)
    return EvalReport(method, recalls, len(gt_by_query))


def ar_f(ranked_windows_by_video: dict, gt_by_video: dict,
         durations_sec: dict, frequencies, iou_thresh: float = 0.5):
    """Average recall of ground-truth segments as window frequency grows.

    For each frequency F, each video keeps its top ceil(F * duration)
    windows (in the given ranking); its recall is the fraction of that
    video's segments matched at tIoU >= iou_thresh. The curve averages
    per-video recall over videos that have segments.
    """
    curve = []
    vids = [v for v in gt_by_video if gt_by_video[v]]
    for freq in frequencies:
        if freq < 0:
            raise ConfigError(f"frequency must be non-negative, got {freq}")
        total = 0.0
        for vid in vids:
            keep = int(np.ceil(freq * durations_sec[vid]))
            kept = [_as_interval(w) for w in ranked_windows_by_video.get(vid, [])[:keep]]
            segs = [_as_interval(g) for g in gt_by_video[vid]]
            matched = sum(
                1 for g in segs if any(tiou(w, g) >= iou_thresh for w in kept))
            total += matched / len(segs)
        curve.append((float(freq), total / len(vids) if vids else 0.0))
    return curve


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def emit_report(reports, path, layout: str = "charades") -> None:
    """CSV table, one row per method, columns fixed by the layout."""
    if layout not in LAYOUTS:
        raise ConfigError(f"unknown report layout {layout!r}; "
                          f"available: {sorted(LAYOUTS)}")
    if isinstance(reports, EvalReport):
        reports = [reports]
    columns = LAYOUTS[layout]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("method," + ",".join(label for label, _ in columns) + "\n")
        for report in reports:
            cells = []
            for _, key in columns:
                if key not in report.recalls:
                    raise ConfigError(
                        f"report {report.method!r} lacks R@{key[0]},IoU={key[1]} "
                        f"required by layout {layout!r}"
                    )
                cells.append(repr(float(report.recalls[key])))
            fh.write(report.method + "," + ",".join(cells) + "\n")


def read_report(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for line in reader:
            row = {"method": line["method"]}
            for key, value in line.items():
                if key != "method":
                    row[key] = float(value)
            rows.append(row)
        return rows


def emit_arf(curve, path) -> None:
    """Two-column frequency/recall data file for the AR-F curve."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("frequency,avg_recall\n")
        for freq, rec in curve:
            fh.write(f"{float(freq)!r},{float(rec)!r}\n")


def read_arf(path) -> list[tuple[float, float]]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["frequency", "avg_recall"]:
            raise DataValidationError(f"{path}: unexpected AR-F header")
        for line in reader:
            out.append((float(line["frequency"]), float(line["avg_recall"])))
    return out
