"""Interval arithmetic, sliding-window generation, clip-level pooling,
training-sample collection, and actionness label assignment.

Frames are the internal coordinate; units and seconds convert at the edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DatasetManifest, VideoRecord
from .errors import ConfigError


@dataclass(frozen=True)
class Interval:
    """Half-open temporal span [start, end) in frames."""

    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"interval start {self.start} must precede end {self.end}")

    @classmethod
    def from_seconds(cls, start_sec: float, end_sec: float, fps: float) -> "Interval":
        return cls(start_sec * fps, end_sec * fps)

    def to_seconds(self, fps: float) -> tuple[float, float]:
        return self.start / fps, self.end / fps

    @property
    def length(self) -> float:
        return self.end - self.start


def tiou(a: Interval, b: Interval) -> float:
    """Temporal intersection over union; 0 for disjoint intervals."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union


@dataclass(frozen=True)
class ClipSpec:
    """A candidate window in unit coordinates, plus its context width."""

    video_id: str
    start_unit: int
    num_units: int
    ctx_units: int = 8

    def __post_init__(self):
        if self.start_unit < 0 or self.num_units < 1:
            raise ValueError(
                f"clip needs start_unit >= 0 and num_units >= 1, got "
                f"({self.start_unit}, {self.num_units})"
            )

    @property
    def end_unit(self) -> int:
        return self.start_unit + self.num_units

    def to_interval(self, unit_frames: int) -> Interval:
        return Interval(self.start_unit * unit_frames, self.end_unit * unit_frames)


def sliding_windows(video_id: str, num_units: int, lengths_frames,
                    overlap: float, unit_frames: int,
                    ctx_units: int = 8) -> list[ClipSpec]:
    """Multi-scale sliding windows over a video.

    Per length L: stride = floor(L*(1-overlap)) rounded down to whole units
    with a floor of one unit; windows start at 0; a final window flush with
    the video end is added when the stride grid misses it. A video shorter
    than L yields one clamped window spanning the whole video.
    """
    if not 0.0 <= overlap < 1.0:
        raise ConfigError(f"overlap must be in [0, 1), got {overlap}")
    out: list[ClipSpec] = []
    seen: set[tuple[int, int]] = set()
    for length in lengths_frames:
        if length <= 0 or length % unit_frames != 0:
            raise ConfigError(
                f"window length {length} is not a positive multiple of "
                f"unit_frames={unit_frames}"
            )
        len_u = length // unit_frames
        stride_u = max(1, int(len_u * (1.0 - overlap)))
        if num_units <= len_u:
            starts = [0]
            len_u_eff = num_units
        else:
            starts = list(range(0, num_units - len_u + 1, stride_u))
            if starts[-1] != num_units - len_u:
                starts.append(num_units - len_u)  # flush-right window
            len_u_eff = len_u
        for s in starts:
            key = (s, len_u_eff)
            if key not in seen:
                seen.add(key)
                out.append(ClipSpec(video_id, s, len_u_eff, ctx_units))
    out.sort(key=lambda c: (c.start_unit, c.num_units))
    return out


def _mean_block(units: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Mean of unit rows [lo, hi) clamped into range; zeros when empty."""
    lo = max(lo, 0)
    hi = min(hi, units.shape[0])
    if hi <= lo:
        return np.zeros(units.shape[1], dtype=np.float64)
    return units[lo:hi].mean(axis=0)


def clip_feature(unit_features: np.ndarray, clip: ClipSpec) -> np.ndarray:
    """Pre-context mean, central mean and post-context mean, concatenated.

    Context blocks falling outside the video use only in-range units; fully
    out-of-range blocks contribute zeros, keeping the output at 3x the unit
    feature dim.
    """
    s, e, ctx = clip.start_unit, clip.end_unit, clip.ctx_units
    pre = _mean_block(unit_features, s - ctx, s)
    central = _mean_block(unit_features, s, e)
    post = _mean_block(unit_features, e, e + ctx)
    return np.concatenate([pre, central, post])


def clip_concept(unit_concepts: np.ndarray, clip: ClipSpec) -> np.ndarray:
    """Mean concept vector over central units only (no context)."""
    return _mean_block(unit_concepts, clip.start_unit, clip.end_unit)


def regression_targets(clip: Interval, gt: Interval,
                       unit_frames: int) -> tuple[float, float]:
    """Start/end offsets (in units) that would move clip onto gt."""
    return ((gt.start - clip.start) / unit_frames,
            (gt.end - clip.end) / unit_frames)


def apply_offsets(clip: Interval, o_s: float, o_e: float, unit_frames: int,
                  video_frames: float) -> Interval:
    """Shift boundaries by unit offsets, clamped to the video; if the result
    would be empty or inverted, keep the unrefined clip."""
    start = min(max(clip.start + o_s * unit_frames, 0.0), video_frames)
    end = min(max(clip.end + o_e * unit_frames, 0.0), video_frames)
    if start >= end:
        return clip
    return Interval(start, end)


@dataclass(frozen=True)
class TrainingSample:
    clip: ClipSpec
    query_id: str
    target_s: float
    target_e: float
    tiou: float


def collect_training_samples(manifest: DatasetManifest,
                             scales=(64, 128, 256, 512),
                             overlap: float = 0.75,
                             pos_tiou: float = 0.5,
                             ctx_units: int = 8) -> list[TrainingSample]:
    """All (window, same-video query) pairs with tIoU >= pos_tiou, with
    regression targets toward the query's ground truth."""
    uf = manifest.unit_frames
    queries_by_video: dict[str, list] = {}
    for q in manifest.queries:
        queries_by_video.setdefault(q.video_id, []).append(q)
    samples: list[TrainingSample] = []
    for video in manifest.videos:
        queries = queries_by_video.get(video.id)
        if not queries:
            continue
        windows = sliding_windows(video.id, video.num_units, scales, overlap,
                                  uf, ctx_units)
        for q in queries:
            gt = Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps)
            for w in windows:
                wi = w.to_interval(uf)
                t = tiou(wi, gt)
                if t >= pos_tiou:
                    o_s, o_e = regression_targets(wi, gt, uf)
                    samples.append(TrainingSample(w, q.id, o_s, o_e, t))
    return samples


def actionness_labels(windows, gt_intervals, pos_tiou: float = 0.5,
                      neg_tiou: float = 0.3) -> list[int | None]:
    """Binary non-background/background labels per window Interval.

    1 when max tIoU against any ground-truth segment reaches pos_tiou,
    0 when below neg_tiou, None (excluded) in the ignore band between.
    """
    if not 0.0 <= neg_tiou <= pos_tiou <= 1.0:
        raise ConfigError(
            f"need 0 <= neg_tiou <= pos_tiou <= 1, got ({neg_tiou}, {pos_tiou})"
        )
    labels: list[int | None] = []
    for w in windows:
        best = max((tiou(w, g) for g in gt_intervals), default=0.0)
        if best >= pos_tiou:
            labels.append(1)
        elif best < neg_tiou:
            labels.append(0)
        else:
            labels.append(None)
    return labels


def export_windows_csv(clips, unit_frames: int, path) -> None:
    """Debug dump: video_id,start_frame,end_frame per window."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("video_id,start_frame,end_frame\n")
        for c in clips:
            iv = c.to_interval(unit_frames)
            fh.write(f"{c.video_id},{int(iv.start)},{int(iv.end)}\n")


def video_windows(video: VideoRecord, manifest: DatasetManifest,
                  lengths_frames=(128, 256), overlap: float = 0.75,
                  ctx_units: int = 8) -> list[ClipSpec]:
    return sliding_windows(video.id, video.num_units, lengths_frames, overlap,
                           manifest.unit_frames, ctx_units)
