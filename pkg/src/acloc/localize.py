"""Inference: score candidate windows per query, fuse with actionness,
refine boundaries, rank, and read/write the prediction CSV.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace

import numpy as np

from . import temporal
from .concepts import LabelLexicon, VOPair, best_label_match, resolve_vo, vo_embedding
from .data import (DatasetManifest, EmbeddingTable, VideoRecord,
                   load_video_concepts, load_video_features, sentence_vector)
from .errors import ConfigError, DataValidationError
from .model import (ActionnessParams, LocalizerParams, actionness_scores,
                    forward_cross, sigmoid)


class Mode(enum.Enum):
    SWIN = "swin"
    SWIN_SCORE = "swin-score"
    PROP_SCORE = "prop-score"


@dataclass(frozen=True)
class Prediction:
    query_id: str
    window: temporal.Interval
    refined: temporal.Interval
    delta: float
    eta: float
    xi: float


def _pool_windows(features, concepts, windows):
    V = np.array([temporal.clip_feature(features, w) for w in windows])
    C = np.array([temporal.clip_concept(concepts, w) for w in windows])
    return V, C


def _rank(preds: list[Prediction]) -> list[Prediction]:
    return sorted(preds, key=lambda p: (-p.xi, p.window.start, p.window.end))


def score_query(acl: LocalizerParams, actionness: ActionnessParams | None,
                features: np.ndarray, concepts: np.ndarray,
                video: VideoRecord, query_id: str, sent_vec: np.ndarray,
                vo_vec: np.ndarray, windows: list[temporal.ClipSpec],
                mode: Mode, unit_frames: int,
                prop_keep: float = 0.5) -> list[Prediction]:
    """Rank windows for one query; ties break toward the earlier start.

    swin: xi is the raw pre-alignment score. swin-score: xi = sigmoid(delta)
    * eta. prop-score: windows are pre-filtered to the top share by eta and
    refined once by the regression head before swin-score-style scoring.
    """
    if not windows:
        return []
    if mode in (Mode.SWIN_SCORE, Mode.PROP_SCORE) and actionness is None:
        raise ConfigError(f"mode {mode.value!r} needs an actionness checkpoint")
    video_frames = float(video.frames)

    if mode is Mode.PROP_SCORE:
        V, _ = _pool_windows(features, concepts, windows)
        eta = actionness_scores(actionness, V)
        keep = max(1, int(np.ceil(len(windows) * prop_keep)))
        order = sorted(range(len(windows)),
                       key=lambda i: (-eta[i], windows[i].start_unit))
        kept = [windows[i] for i in order[:keep]]
        Vk = V[[i for i in order[:keep]]]
        delta, off_s, off_e, _ = forward_cross(
            acl, Vk, sent_vec[None, :],
            np.array([temporal.clip_concept(concepts, w) for w in kept]),
            vo_vec[None, :])
        proposals = []
        seen = set()
        for i, w in enumerate(kept):
            refined = temporal.apply_offsets(
                w.to_interval(unit_frames), off_s[i, 0], off_e[i, 0],
                unit_frames, video_frames)
            s_u = int(round(refined.start / unit_frames))
            e_u = int(round(refined.end / unit_frames))
            s_u = min(max(s_u, 0), video.num_units - 1)
            e_u = min(max(e_u, s_u + 1), video.num_units)
            if (s_u, e_u) not in seen:
                seen.add((s_u, e_u))
                proposals.append(temporal.ClipSpec(video.id, s_u, e_u - s_u,
                                                   w.ctx_units))
        windows = proposals
        # refined once: the proposals themselves are the final boundaries
        refine_final = False
    else:
        refine_final = True

    V, C = _pool_windows(features, concepts, windows)
    delta, off_s, off_e, _ = forward_cross(acl, V, sent_vec[None, :], C,
                                           vo_vec[None, :])
    delta = delta[:, 0]
    off_s = off_s[:, 0]
    off_e = off_e[:, 0]
    if actionness is not None:
        eta = actionness_scores(actionness, V)
    else:
        eta = np.ones(len(windows))
    if mode is Mode.SWIN:
        xi = delta
    else:
        xi = sigmoid(delta) * eta
    preds = []
    for i, w in enumerate(windows):
        wi = w.to_interval(unit_frames)
        if refine_final:
            refined = temporal.apply_offsets(wi, off_s[i], off_e[i],
                                             unit_frames, video_frames)
        else:
            refined = wi
        preds.append(Prediction(query_id, wi, refined, float(delta[i]),
                                float(eta[i]), float(xi[i])))
    return _rank(preds)


def score_all(manifest: DatasetManifest, acl: LocalizerParams,
              actionness: ActionnessParams | None, table: EmbeddingTable,
              pos_lexicon: dict[str, str], mode: Mode,
              lengths_frames=(128, 256), overlap: float = 0.75,
              ctx_units: int = 8,
              fusion: "LateFusion | None" = None) -> dict[str, list[Prediction]]:
    """Run inference for every query in the manifest."""
    if "proj_s" in acl.layers:
        sent_dim = acl.layers["proj_s"].in_dim
    elif "proj_s_a" in acl.layers:
        sent_dim = acl.layers["proj_s_a"].in_dim
    else:
        sent_dim = 1  # activity-only: the sentence embedding is unused
    feat_cache: dict[str, np.ndarray] = {}
    conc_cache: dict[str, np.ndarray] = {}
    win_cache: dict[str, list[temporal.ClipSpec]] = {}
    out: dict[str, list[Prediction]] = {}
    for q in manifest.queries:
        video = manifest.video(q.video_id)
        if video.id not in feat_cache:
            feat_cache[video.id] = load_video_features(manifest, video)
            conc_cache[video.id] = load_video_concepts(manifest, video)
            win_cache[video.id] = temporal.sliding_windows(
                video.id, video.num_units, lengths_frames, overlap,
                manifest.unit_frames, ctx_units)
        sent = sentence_vector(q, manifest, table, sent_dim)
        vo = resolve_vo(q, pos_lexicon)
        preds = score_query(acl, actionness, feat_cache[video.id],
                            conc_cache[video.id], video, q.id, sent,
                            vo_embedding(vo, table), win_cache[video.id],
                            mode, manifest.unit_frames)
        if fusion is not None:
            concepts = [temporal.clip_concept(
                conc_cache[video.id],
                _interval_clip(p.window, video, manifest.unit_frames))
                for p in preds]
            preds = late_fusion(preds, concepts, vo, fusion.lexicon,
                                fusion.table, fusion.theta)
        out[q.id] = preds
    return out


def _interval_clip(iv: temporal.Interval, video: VideoRecord,
                   unit_frames: int) -> temporal.ClipSpec:
    s_u = int(round(iv.start / unit_frames))
    e_u = int(round(iv.end / unit_frames))
    s_u = min(max(s_u, 0), video.num_units - 1)
    e_u = min(max(e_u, s_u + 1), video.num_units)
    return temporal.ClipSpec(video.id, s_u, e_u - s_u)


@dataclass(frozen=True)
class LateFusion:
    lexicon: LabelLexicon
    table: EmbeddingTable
    theta: float


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max()
    e = np.exp(z)
    return e / e.sum()


def late_fusion(predictions: list[Prediction], window_concepts,
                vo: VOPair | None, lexicon: LabelLexicon,
                table: EmbeddingTable, theta: float) -> list[Prediction]:
    """Multiply xi by the window's probability for the activity label most
    similar to the VO, gated by similarity threshold theta; re-ranks."""
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"late-fusion theta must be in [0, 1], got {theta}")
    k, sim = best_label_match(vo, lexicon, table)
    if k is None or sim <= theta:
        return list(predictions)
    fused = []
    for pred, concept in zip(predictions, window_concepts):
        p_k = float(_softmax(np.asarray(concept, dtype=np.float64))[k])
        fused.append(replace(pred, xi=pred.xi * p_k))
    return _rank(fused)


# ---------------------------------------------------------------------------
# prediction CSV
# ---------------------------------------------------------------------------

PREDICTION_HEADER = ["query_id", "rank", "start_sec", "end_sec",
                     "delta", "eta", "xi"]


def write_predictions_csv(preds_by_query: dict[str, list[Prediction]],
                          fps: float, path) -> None:
    """Refined boundaries in seconds, one row per ranked prediction."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(PREDICTION_HEADER) + "\n")
        for qid in sorted(preds_by_query):
            for rank, p in enumerate(preds_by_query[qid], 1):
                s, e = p.refined.to_seconds(fps)
                fh.write(f"{qid},{rank},{float(s)!r},{float(e)!r},"
                         f"{float(p.delta)!r},{float(p.eta)!r},{float(p.xi)!r}\n")


def read_predictions_csv(path) -> dict[str, list[tuple[float, float]]]:
    """Ranked (start_sec, end_sec) lists per query."""
    rows: dict[str, list[tuple[int, float, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PREDICTION_HEADER:
            raise DataValidationError(
                f"{path}: unexpected prediction header {reader.fieldnames}"
            )
        for line in reader:
            try:
                rows.setdefault(line["query_id"], []).append(
                    (int(line["rank"]), float(line["start_sec"]),
                     float(line["end_sec"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataValidationError(f"{path}: malformed row {line}") from exc
    out = {}
    for qid, entries in rows.items():
        entries.sort()
        out[qid] = [(s, e) for _, s, e in entries]
    return out
