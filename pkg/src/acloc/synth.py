"""Deterministic synthetic benchmark: cluster-separable unit features,
noisy one-hot concepts, class-consistent queries, plus brute-force oracles
and the random baseline used as acceptance references.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import temporal
from .concepts import save_label_lexicon, save_pos_lexicon
from .data import (DatasetManifest, EmbeddingTable, QueryRecord, VideoRecord,
                   load_manifest, load_video_concepts, save_embedding_table,
                   save_manifest, save_unit_matrix)
from .errors import ConfigError

# per-class (verb lemma, verb surface form, object) vocabulary; the surface
# forms all lemmatize back to the lemma under the default rules
CLASS_WORDS: tuple[tuple[str, str, str], ...] = (
    ("open", "opens", "refrigerator"),
    ("wash", "washes", "dish"),
    ("lift", "lifts", "box"),
    ("read", "reads", "book"),
    ("pour", "pours", "coffee"),
    ("fold", "folds", "towel"),
    ("throw", "throws", "ball"),
    ("cut", "cuts", "bread"),
    ("kick", "kicks", "can"),
    ("push", "pushes", "cart"),
    ("grab", "grabs", "bottle"),
    ("hold", "holds", "plate"),
)

FILLER_WORDS = ("person", "the", "a", "is", "near", "someone")

# per-query scene words keep sentences distinct across videos of one class,
# the way real queries differ beyond their verb-object pair
SCENE_WORDS = (
    "kitchen", "garage", "hallway", "porch", "office", "basement", "attic",
    "garden", "bedroom", "balcony", "driveway", "pantry", "stairway", "closet",
    "workshop", "lobby", "studio", "cellar", "yard", "corridor", "doorway",
    "counter", "window", "table",
)


@dataclass
class SynthConfig:
    seed: int = 7
    num_videos: int = 200
    num_classes: int = 8
    d_v: int = 32
    units_range: tuple[int, int] = (30, 60)
    segment_len_range: tuple[int, int] = (6, 10)
    segments_per_video: int = 1
    sigma_f: float = 0.15
    sigma_c: float | None = None  # concept noise; defaults to sigma_f
    concept_confusion: float = 0.0  # mass leaked to the concept-paired class
    feature_confusion: float = 0.0  # mean mixed toward the feature-paired class
    segment_pairing: str = "free"  # "confusable": segment classes form a
    # concept pair or a feature pair in alternating videos
    vo_coverage: float = 0.8
    background_ratio: float = 0.5
    fps: float = 16.0
    unit_frames: int = 16
    word_dim: int = 300

    @property
    def d_c(self) -> int:
        return self.num_classes

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError("need at least 2 activity classes")
        if self.num_classes > len(CLASS_WORDS):
            raise ConfigError(
                f"at most {len(CLASS_WORDS)} classes supported by the vocabulary"
            )
        if self.d_v < self.num_classes + 1:
            raise ConfigError("d_v must exceed num_classes (orthogonal class means)")
        if self.word_dim < self.num_classes:
            raise ConfigError("word_dim must be >= num_classes")
        lo, hi = self.units_range
        slo, shi = self.segment_len_range
        if not (0 < slo <= shi) or not (0 < lo <= hi):
            raise ConfigError("invalid units/segment ranges")
        if not 0.0 <= self.vo_coverage <= 1.0:
            raise ConfigError("vo_coverage must be in [0, 1]")
        if not 0.0 <= self.concept_confusion <= 0.5:
            raise ConfigError("concept_confusion must be in [0, 0.5]")
        if not 0.0 <= self.feature_confusion <= 0.5:
            raise ConfigError("feature_confusion must be in [0, 0.5]")
        if self.segments_per_video > self.num_classes:
            raise ConfigError("segments_per_video cannot exceed num_classes "
                              "(segment classes within a video are distinct)")
        if self.segment_pairing not in ("free", "confusable"):
            raise ConfigError(f"unknown segment_pairing {self.segment_pairing!r}")
        if self.segment_pairing == "confusable":
            if self.segments_per_video != 2 or self.num_classes % 4 != 0:
                raise ConfigError("confusable pairing needs segments_per_video=2 "
                                  "and num_classes divisible by 4")
        if not 0.0 <= self.background_ratio < 1.0:
            raise ConfigError("background_ratio must be in [0, 1)")
        # worst case packing: every segment at max length plus 1-unit gaps
        need = self.segments_per_video * (shi + 2)
        if need > lo:
            raise ConfigError(
                f"infeasible packing: {self.segments_per_video} segments of up to "
                f"{shi} units do not fit in {lo} units"
            )

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["units_range"] = list(self.units_range)
        out["segment_len_range"] = list(self.segment_len_range)
        return out

    @classmethod
    def from_json(cls, raw: dict) -> "SynthConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        for key in ("units_range", "segment_len_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def _orthonormal_rows(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, n)))
    return q.T[:n]


def concept_partner(c: int, num_classes: int) -> int:
    """Classes 2k and 2k+1 share concept mass under concept_confusion."""
    partner = c + 1 if c % 2 == 0 else c - 1
    return partner if partner < num_classes else c


def feature_partner(c: int, num_classes: int) -> int:
    """Classes (4k, 4k+2) and (4k+1, 4k+3) blend under feature_confusion."""
    partner = c + 2 if c % 4 < 2 else c - 2
    return partner if partner < num_classes else c


def class_of_query(tokens, num_classes: int) -> int | None:
    """Recover the planted class from a query's object word (generator-owned
    knowledge, used only by the oracles)."""
    objects = {CLASS_WORDS[c][2]: c for c in range(num_classes)}
    for t in tokens:
        c = objects.get(t.lower())
        if c is not None:
            return c
    return None


def generate(config: SynthConfig, out_dir) -> DatasetManifest:
    """Write a full synthetic dataset under out_dir and return its manifest.

    Layout: manifest.json, features/*.aclf, concepts/*.aclf, embeddings.txt,
    pos_lexicon.txt, labels.txt, config.json. Byte-identical for equal seeds.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "concepts"), exist_ok=True)

    C = config.num_classes
    # row 0 backs the background cluster, rows 1..C the classes
    basis = _orthonormal_rows(C + 1, config.d_v, rng)
    bg_mean = basis[0]
    cls_means = np.empty_like(basis[1:])
    for c in range(C):
        mixed = (1.0 - config.feature_confusion) * basis[1 + c] + \
            config.feature_confusion * basis[1 + feature_partner(c, C)]
        cls_means[c] = mixed / np.linalg.norm(mixed)
    # concept space: noisy one-hot per class, "confused" uniform background;
    # concept_confusion leaks mass onto the concept-paired class
    bg_concept = np.full(C, 1.0 / C)
    concept_means = np.eye(C) * (1.0 - config.concept_confusion)
    for c in range(C):
        concept_means[c, concept_partner(c, C)] += config.concept_confusion

    # word embeddings: class words cluster around per-class directions
    directions = _orthonormal_rows(C, config.word_dim, rng)
    vectors: dict[str, np.ndarray] = {}
    pos_lexicon: dict[str, str] = {}
    labels = []
    for c in range(C):
        lemma, surface, obj = CLASS_WORDS[c]
        for word in (lemma, surface):
            v = directions[c] + 0.1 * rng.standard_normal(config.word_dim)
            vectors[word] = v / np.linalg.norm(v)
            pos_lexicon[word] = "V"
        v = directions[c] + 0.1 * rng.standard_normal(config.word_dim)
        vectors[obj] = v / np.linalg.norm(v)
        pos_lexicon[obj] = "N"
        labels.append(f"{lemma} {obj}")
    for word in FILLER_WORDS:
        v = rng.standard_normal(config.word_dim)
        vectors[word] = v / np.linalg.norm(v)
        pos_lexicon[word] = "N" if word == "person" else "O"
    for word in SCENE_WORDS:
        v = rng.standard_normal(config.word_dim)
        vectors[word] = v / np.linalg.norm(v)
        pos_lexicon[word] = "O"

    videos: list[VideoRecord] = []
    segment_meta: list[tuple[str, int, int, int]] = []  # video, class, s_u, e_u
    lo_u, hi_u = config.units_range
    slo, shi = config.segment_len_range
    for v_idx in range(config.num_videos):
        vid = f"v{v_idx:04d}"
        num_units = int(rng.integers(lo_u, hi_u + 1))
        # segments: even length so odd starts leave both boundaries off the
        # even-stride window grid (regression targets stay nonzero)
        budget = int((1.0 - config.background_ratio) * num_units)
        placed: list[tuple[int, int, int]] = []
        cursor = 1
        if config.segment_pairing == "confusable":
            # alternate videos whose two segments only concepts (resp. only
            # features) can tell apart
            first = int(rng.integers(0, C))
            if v_idx % 2 == 0:
                pair = (first, concept_partner(first, C))
            else:
                pair = (first, feature_partner(first, C))
            video_classes = np.array(pair)
            rng.shuffle(video_classes)
        else:
            video_classes = rng.choice(C, size=config.segments_per_video,
                                       replace=False)
        for seg_idx in range(config.segments_per_video):
            max_len = min(shi, max(slo, budget // config.segments_per_video))
            seg_len = int(rng.integers(slo, max_len + 1))
            seg_len += seg_len % 2  # snap to even
            # spread the remaining room across the segments still to place
            remaining = config.segments_per_video - seg_idx
            room = num_units - 1 - cursor - remaining * (seg_len + 1)
            if room < 0:
                raise ConfigError(
                    f"infeasible packing in video {vid}: segment of {seg_len} "
                    f"units does not fit"
                )
            start = cursor + int(rng.integers(0, room // (2 * remaining) + 1)) * 2
            if start % 2 == 0:
                start += 1  # odd start keeps boundaries off the window grid
            placed.append((int(video_classes[seg_idx]), start, start + seg_len))
            cursor = start + seg_len + 1
        sigma_c = config.sigma_f if config.sigma_c is None else config.sigma_c
        feats = bg_mean[None, :] + config.sigma_f * rng.standard_normal(
            (num_units, config.d_v))
        concepts = bg_concept[None, :] + sigma_c * rng.standard_normal(
            (num_units, C))
        for cls, s_u, e_u in placed:
            span = e_u - s_u
            feats[s_u:e_u] = cls_means[cls][None, :] + config.sigma_f * \
                rng.standard_normal((span, config.d_v))
            concepts[s_u:e_u] = concept_means[cls][None, :] + sigma_c * \
                rng.standard_normal((span, C))
            segment_meta.append((vid, cls, s_u, e_u))
        feat_rel = f"features/{vid}.aclf"
        conc_rel = f"concepts/{vid}.aclf"
        save_unit_matrix(os.path.join(out_dir, feat_rel), feats)
        save_unit_matrix(os.path.join(out_dir, conc_rel), concepts)
        videos.append(VideoRecord(
            id=vid, frames=num_units * config.unit_frames, fps=config.fps,
            feature_path=feat_rel, concept_path=conc_rel, num_units=num_units))

    # deterministic VO coverage: exactly round(coverage * n) queries keep a verb
    n_q = len(segment_meta)
    with_vo = np.zeros(n_q, dtype=bool)
    with_vo[:int(round(config.vo_coverage * n_q))] = True
    rng.shuffle(with_vo)
    queries: list[QueryRecord] = []
    sec_per_unit = config.unit_frames / config.fps
    for q_idx, (vid, cls, s_u, e_u) in enumerate(segment_meta):
        lemma, surface, obj = CLASS_WORDS[cls]
        scene = SCENE_WORDS[q_idx % len(SCENE_WORDS)]
        if with_vo[q_idx]:
            tokens = ("person", surface, "the", obj, "near", "the", scene)
        else:
            tokens = ("person", "near", "the", obj, "near", "the", scene)
        queries.append(QueryRecord(
            id=f"q{q_idx:04d}", video_id=vid,
            start_sec=s_u * sec_per_unit, end_sec=e_u * sec_per_unit,
            tokens=tokens))

    manifest = DatasetManifest(
        name="synthetic", fps=config.fps, unit_frames=config.unit_frames,
        feature_dim=config.d_v, concept_dim=C,
        videos=tuple(videos), queries=tuple(queries), root=str(out_dir))
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    table = EmbeddingTable(vectors)
    save_embedding_table(table, os.path.join(out_dir, "embeddings.txt"))
    save_pos_lexicon(pos_lexicon, os.path.join(out_dir, "pos_lexicon.txt"))
    save_label_lexicon(labels, os.path.join(out_dir, "labels.txt"))
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return load_manifest(os.path.join(out_dir, "manifest.json"))


# ---------------------------------------------------------------------------
# oracles and the random baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleAnswer:
    query_id: str
    scan_window: temporal.Interval     # argmax by concept-similarity scan
    scan_tiou: float
    ceiling_window: temporal.Interval  # best achievable on the window grid
    ceiling_tiou: float


def oracle_localize(manifest: DatasetManifest, lengths_frames=(128, 256),
                    overlap: float = 0.75) -> dict[str, OracleAnswer]:
    """Exhaustive reference localizer over generated data.

    Scores every grid window by cosine similarity between its mean central
    concept vector and the query's planted class one-hot; also records the
    maximum-tIoU window as the grid ceiling.
    """
    uf = manifest.unit_frames
    answers: dict[str, OracleAnswer] = {}
    conc_cache: dict[str, np.ndarray] = {}
    win_cache: dict[str, list[temporal.ClipSpec]] = {}
    for q in manifest.queries:
        video = manifest.video(q.video_id)
        if video.id not in conc_cache:
            conc_cache[video.id] = load_video_concepts(manifest, video)
            win_cache[video.id] = temporal.sliding_windows(
                video.id, video.num_units, lengths_frames, overlap, uf)
        windows = win_cache[video.id]
        gt = temporal.Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps)
        cls = class_of_query(q.tokens, manifest.concept_dim)
        onehot = np.zeros(manifest.concept_dim)
        if cls is not None:
            onehot[cls] = 1.0
        best_scan, best_score = None, -np.inf
        best_ceil, best_t = None, -1.0
        for w in windows:
            mean_c = temporal.clip_concept(conc_cache[video.id], w)
            norm = np.linalg.norm(mean_c)
            score = float(mean_c @ onehot / norm) if norm > 0 else 0.0
            wi = w.to_interval(uf)
            if score > best_score:
                best_scan, best_score = wi, score
            t = temporal.tiou(wi, gt)
            if t > best_t:
                best_ceil, best_t = wi, t
        answers[q.id] = OracleAnswer(q.id, best_scan,
                                     temporal.tiou(best_scan, gt),
                                     best_ceil, best_t)
    return answers


def oracle_predictions(answers: dict[str, OracleAnswer], fps: float,
                       which: str = "scan") -> dict[str, list[tuple[float, float]]]:
    """Per-query single-window predictions (seconds) from oracle answers."""
    out = {}
    for qid, ans in answers.items():
        iv = ans.scan_window if which == "scan" else ans.ceiling_window
        out[qid] = [iv.to_seconds(fps)]
    return out


def random_baseline(manifest: DatasetManifest, seed: int = 0, trials: int = 1000,
                    lengths_frames=(128, 256), overlap: float = 0.75,
                    n_values=(1, 5), iou_values=(0.1, 0.3, 0.5, 0.7)):
    """Mean R@n,IoU=m over uniformly random window rankings."""
    if trials < 100:
        raise ConfigError("random baseline needs at least 100 trials")
    uf = manifest.unit_frames
    rng = np.random.default_rng(seed)
    win_cache: dict[str, list[temporal.Interval]] = {}
    # per query: sorted tIoU values of its video's windows
    tious_per_query = []
    for q in manifest.queries:
        video = manifest.video(q.video_id)
        if video.id not in win_cache:
            win_cache[video.id] = [
                w.to_interval(uf) for w in temporal.sliding_windows(
                    video.id, video.num_units, lengths_frames, overlap, uf)
            ]
        gt = temporal.Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps)
        tious_per_query.append(np.array([temporal.tiou(w, gt)
                                         for w in win_cache[video.id]]))
    sums = {(n, m): 0.0 for n in n_values for m in iou_values}
    n_q = len(tious_per_query)
    for _ in range(trials):
        for tious in tious_per_query:
            order = rng.permutation(len(tious))
            for n in n_values:
                top = tious[order[:n]]
                best = top.max() if len(top) else 0.0
                for m in iou_values:
                    if best >= m:
                        sums[(n, m)] += 1.0
    return {key: val / (trials * n_q) if n_q else 0.0 for key, val in sums.items()}
