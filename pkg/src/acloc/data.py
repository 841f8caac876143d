"""Dataset model and ingestion: JSON manifests, binary unit-feature files,
word-embedding tables, and the bag-of-embeddings sentence fallback.

Everything loaded here is immutable afterwards; loaders validate eagerly and
raise DataValidationError with the offending record named.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError

UNIT_MATRIX_MAGIC = b"ACLF"
UNIT_MATRIX_HEADER = 16  # magic + num_units + dim + reserved


# ---------------------------------------------------------------------------
# binary unit matrices ("ACLF")
# ---------------------------------------------------------------------------

def save_unit_matrix(path, matrix: np.ndarray) -> None:
    """Write a (num_units, dim) matrix: 16-byte header then float32 LE rows."""
    mat = np.asarray(matrix)
    if mat.ndim != 2:
        raise DataValidationError(f"unit matrix must be 2-D, got shape {mat.shape}")
    with open(path, "wb") as fh:
        fh.write(UNIT_MATRIX_MAGIC)
        fh.write(struct.pack("<III", mat.shape[0], mat.shape[1], 0))
        fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def load_unit_matrix(path, expect_units: int | None = None,
                     expect_dim: int | None = None) -> np.ndarray:
    """Read an ACLF file into a float64 (num_units, dim) matrix."""
    with open(path, "rb") as fh:
        header = fh.read(UNIT_MATRIX_HEADER)
        if len(header) < UNIT_MATRIX_HEADER:
            raise DataValidationError(f"{path}: truncated header")
        if header[:4] != UNIT_MATRIX_MAGIC:
            raise DataValidationError(
                f"{path}: bad magic {header[:4]!r}, expected {UNIT_MATRIX_MAGIC!r}"
            )
        num_units, dim, reserved = struct.unpack("<III", header[4:])
        if reserved != 0:
            raise DataValidationError(f"{path}: reserved header field is {reserved}, not 0")
        payload = fh.read()
    expected_bytes = 4 * num_units * dim
    if len(payload) != expected_bytes:
        raise DataValidationError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected_bytes}"
        )
    if expect_units is not None and num_units != expect_units:
        raise DataValidationError(
            f"{path}: holds {num_units} units, expected {expect_units}"
        )
    if expect_dim is not None and dim != expect_dim:
        raise DataValidationError(f"{path}: dim {dim}, expected {expect_dim}")
    mat = np.frombuffer(payload, dtype="<f4").reshape(num_units, dim)
    return mat.astype(np.float64)


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VideoRecord:
    id: str
    frames: int
    fps: float
    feature_path: str
    concept_path: str
    num_units: int

    @property
    def duration_sec(self) -> float:
        return self.frames / self.fps


@dataclass(frozen=True)
class QueryRecord:
    id: str
    video_id: str
    start_sec: float
    end_sec: float
    tokens: tuple[str, ...]
    sentence_embedding_path: str | None = None
    vo: tuple[str, str] | None = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    fps: float
    unit_frames: int
    feature_dim: int
    concept_dim: int
    videos: tuple[VideoRecord, ...]
    queries: tuple[QueryRecord, ...]
    root: str = "."

    _video_index: dict = field(default=None, compare=False, repr=False)

    def video(self, video_id: str) -> VideoRecord:
        if self._video_index is None:
            object.__setattr__(
                self, "_video_index", {v.id: v for v in self.videos}
            )
        try:
            return self._video_index[video_id]
        except KeyError:
            raise DataValidationError(f"unknown video id {video_id!r}") from None

    def resolve(self, rel_path: str) -> str:
        return os.path.normpath(os.path.join(self.root, rel_path))


def expected_num_units(frames: int, unit_frames: int) -> int:
    return math.ceil(frames / unit_frames)


def unit_index(t_sec: float, fps: float, unit_frames: int) -> int:
    """Seconds to unit index, floor rule."""
    return int(math.floor(t_sec * fps / unit_frames))


# ---------------------------------------------------------------------------
# manifest I/O
# ---------------------------------------------------------------------------

def load_manifest(path, validate_files: bool = True) -> DatasetManifest:
    """Parse and validate a JSON manifest.

    Checks query/video referential integrity, interval sanity against video
    duration, and (by default) that every referenced unit-matrix file exists
    with a header matching the declared dims and ceil(frames / unit_frames).
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataValidationError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"manifest {path} is not valid JSON: {exc}") from exc

    for key in ("name", "fps", "unit_frames", "feature_dim", "concept_dim",
                "videos", "queries"):
        if key not in raw:
            raise DataValidationError(f"manifest {path}: missing key {key!r}")

    fps = float(raw["fps"])
    unit_frames = int(raw["unit_frames"])
    if fps <= 0 or unit_frames <= 0:
        raise DataValidationError(
            f"manifest {path}: fps and unit_frames must be positive"
        )

    videos = []
    seen = set()
    for v in raw["videos"]:
        for key in ("id", "frames", "features", "concepts"):
            if key not in v:
                raise DataValidationError(
                    f"manifest {path}: video entry missing {key!r}: {v}"
                )
        if v["id"] in seen:
            raise DataValidationError(f"manifest {path}: duplicate video id {v['id']!r}")
        seen.add(v["id"])
        videos.append(VideoRecord(
            id=str(v["id"]),
            frames=int(v["frames"]),
            fps=fps,
            feature_path=str(v["features"]),
            concept_path=str(v["concepts"]),
            num_units=expected_num_units(int(v["frames"]), unit_frames),
        ))

    queries = []
    by_id = {v.id: v for v in videos}
    for q in raw["queries"]:
        for key in ("id", "video", "start_sec", "end_sec", "tokens"):
            if key not in q:
                raise DataValidationError(
                    f"manifest {path}: query entry missing {key!r}: {q}"
                )
        qid = str(q["id"])
        vid = str(q["video"])
        if vid not in by_id:
            raise DataValidationError(
                f"manifest {path}: query {qid!r} references unknown video {vid!r}"
            )
        start, end = float(q["start_sec"]), float(q["end_sec"])
        duration = by_id[vid].duration_sec
        if not (0.0 <= start < end <= duration + 1e-9):
            raise DataValidationError(
                f"manifest {path}: query {qid!r} interval [{start}, {end}] invalid "
                f"for video {vid!r} of duration {duration:.3f}s"
            )
        tokens = tuple(str(t) for t in q["tokens"])
        if not tokens:
            raise DataValidationError(f"manifest {path}: query {qid!r} has no tokens")
        vo = None
        if q.get("vo") is not None:
            pair = q["vo"]
            if len(pair) != 2 or not all(pair):
                raise DataValidationError(
                    f"manifest {path}: query {qid!r} has malformed vo {pair!r}"
                )
            vo = (str(pair[0]), str(pair[1]))
        queries.append(QueryRecord(
            id=qid, video_id=vid, start_sec=start, end_sec=end, tokens=tokens,
            sentence_embedding_path=q.get("sentence_embedding_path"),
            vo=vo,
        ))

    manifest = DatasetManifest(
        name=str(raw["name"]),
        fps=fps,
        unit_frames=unit_frames,
        feature_dim=int(raw["feature_dim"]),
        concept_dim=int(raw["concept_dim"]),
        videos=tuple(videos),
        queries=tuple(queries),
        root=str(path.parent),
    )
    if validate_files:
        validate_manifest_files(manifest)
    return manifest


def validate_manifest_files(manifest: DatasetManifest) -> None:
    for v in manifest.videos:
        for rel, dim, what in ((v.feature_path, manifest.feature_dim, "feature"),
                               (v.concept_path, manifest.concept_dim, "concept")):
            full = manifest.resolve(rel)
            if not os.path.exists(full):
                raise DataValidationError(
                    f"video {v.id!r}: missing {what} file {full}"
                )
            try:
                load_unit_matrix(full, expect_units=v.num_units, expect_dim=dim)
            except DataValidationError as exc:
                raise DataValidationError(f"video {v.id!r}: {exc}") from exc


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write a manifest as canonical JSON (sorted keys, stable floats)."""
    raw = {
        "name": manifest.name,
        "fps": manifest.fps,
        "unit_frames": manifest.unit_frames,
        "feature_dim": manifest.feature_dim,
        "concept_dim": manifest.concept_dim,
        "videos": [
            {"id": v.id, "frames": v.frames, "features": v.feature_path,
             "concepts": v.concept_path}
            for v in manifest.videos
        ],
        "queries": [],
    }
    for q in manifest.queries:
        entry = {
            "id": q.id, "video": q.video_id,
            "start_sec": q.start_sec, "end_sec": q.end_sec,
            "tokens": list(q.tokens),
        }
        if q.sentence_embedding_path is not None:
            entry["sentence_embedding_path"] = q.sentence_embedding_path
        if q.vo is not None:
            entry["vo"] = list(q.vo)
        raw["queries"].append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(raw, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_video_features(manifest: DatasetManifest, video: VideoRecord) -> np.ndarray:
    return load_unit_matrix(manifest.resolve(video.feature_path),
                            expect_units=video.num_units,
                            expect_dim=manifest.feature_dim)


def load_video_concepts(manifest: DatasetManifest, video: VideoRecord) -> np.ndarray:
    return load_unit_matrix(manifest.resolve(video.concept_path),
                            expect_units=video.num_units,
                            expect_dim=manifest.concept_dim)


# ---------------------------------------------------------------------------
# word embeddings
# ---------------------------------------------------------------------------

class EmbeddingTable:
    """Word to vector lookup with case folding; absent words return None."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise DataValidationError("embedding table is empty")
        dims = {v.shape for v in vectors.values()}
        if len(dims) != 1:
            raise DataValidationError(f"inconsistent embedding dims: {sorted(dims)}")
        self._vectors = {k.lower(): np.asarray(v, dtype=np.float64)
                         for k, v in vectors.items()}
        self.dim = next(iter(vectors.values())).shape[0]

    def lookup(self, word: str) -> np.ndarray | None:
        return self._vectors.get(word.lower())

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def words(self):
        return self._vectors.keys()


def load_embedding_table(path) -> EmbeddingTable:
    """GloVe text layout: one word then its floats per line."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                raise DataValidationError(f"{path}:{lineno}: malformed embedding line")
            try:
                vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataValidationError(
                    f"{path}:{lineno}: non-numeric embedding value"
                ) from exc
            vectors[parts[0]] = vec
    return EmbeddingTable(vectors)


def save_embedding_table(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(table.words()):
            vec = table.lookup(word)
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def encode_sentence_fallback(tokens, table: EmbeddingTable,
                             target_dim: int) -> tuple[np.ndarray, bool]:
    """Mean of present-word embeddings, tiled then zero-padded to target_dim.

    Returns (vector, found) where found is False when no token was in the
    table (vector is then all zeros).
    """
    hits = [table.lookup(t) for t in tokens]
    hits = [h for h in hits if h is not None]
    out = np.zeros(target_dim, dtype=np.float64)
    if not hits:
        return out, False
    mean = np.mean(hits, axis=0)
    reps = target_dim // table.dim
    for i in range(reps):
        out[i * table.dim:(i + 1) * table.dim] = mean
    rem = target_dim - reps * table.dim
    if rem:
        out[reps * table.dim:] = mean[:rem]
    return out, True


def sentence_vector(query: QueryRecord, manifest: DatasetManifest,
                    table: EmbeddingTable, target_dim: int) -> np.ndarray:
    """Precomputed sentence embedding when present, fallback encoding otherwise."""
    if query.sentence_embedding_path is not None:
        mat = load_unit_matrix(manifest.resolve(query.sentence_embedding_path))
        vec = mat.reshape(-1)
        if vec.shape[0] != target_dim:
            raise DataValidationError(
                f"query {query.id!r}: sentence embedding has dim {vec.shape[0]}, "
                f"configured sentence dim is {target_dim}"
            )
        return vec
    vec, _ = encode_sentence_fallback(query.tokens, table, target_dim)
    return vec
