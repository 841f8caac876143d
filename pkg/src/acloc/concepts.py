"""Verb-object concept mining: POS-lexicon extraction, rule lemmatizer,
VO embeddings with the all-or-nothing zero fallback, and activity-label
similarity for late fusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingTable, QueryRecord
from .errors import DataValidationError


@dataclass(frozen=True)
class VOPair:
    verb: str
    obj: str

    def __post_init__(self):
        if not self.verb or not self.obj:
            raise ValueError("verb and object lemmas must be non-empty")


# ---------------------------------------------------------------------------
# lemmatizer
# ---------------------------------------------------------------------------

# order matters: longest candidate suffixes first
DEFAULT_SUFFIX_RULES: tuple[tuple[str, str], ...] = (
    ("ies", "y"),
    ("es", ""),
    ("s", ""),
    ("ing", ""),
    ("ed", ""),
)

DEFAULT_EXCEPTIONS: dict[str, str] = {
    "ran": "run", "running": "run", "runs": "run",
    "went": "go", "goes": "go", "going": "go",
    "made": "make", "makes": "make", "making": "make",
    "took": "take", "takes": "take", "taking": "take",
    "gave": "give", "gives": "give", "giving": "give",
    "ate": "eat", "eats": "eat", "eating": "eat",
    "rides": "ride", "riding": "ride", "rode": "ride",
    "closes": "close", "closing": "close",
    "wrote": "write", "writes": "write", "writing": "write",
    "ties": "tie", "tying": "tie",
    "children": "child", "men": "man", "women": "woman",
    "feet": "foot", "mice": "mouse", "teeth": "tooth",
}

_MIN_STEM = 3


@dataclass(frozen=True)
class Lemmatizer:
    """Exception dictionary first, then the first matching suffix rule, once."""

    rules: tuple[tuple[str, str], ...] = DEFAULT_SUFFIX_RULES
    exceptions: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_EXCEPTIONS))

    def lemmatize(self, word: str) -> str:
        word = word.lower()
        hit = self.exceptions.get(word)
        if hit is not None:
            return hit
        for suffix, repl in self.rules:
            if not word.endswith(suffix):
                continue
            if suffix == "s" and word.endswith("ss"):
                continue
            stem = word[: len(word) - len(suffix)] + repl
            if len(stem) >= _MIN_STEM:
                return stem
        return word


_DEFAULT_LEMMATIZER = Lemmatizer()


def lemmatize(word: str, lemmatizer: Lemmatizer = _DEFAULT_LEMMATIZER) -> str:
    return lemmatizer.lemmatize(word)


# ---------------------------------------------------------------------------
# POS lexicon and VO extraction
# ---------------------------------------------------------------------------

POS_TAGS = {"V", "N", "O"}


def load_pos_lexicon(path) -> dict[str, str]:
    """Text lines word<TAB>V|N|O."""
    lex: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in POS_TAGS:
                raise DataValidationError(f"{path}:{lineno}: malformed POS line {line!r}")
            lex[parts[0].lower()] = parts[1]
    return lex


def save_pos_lexicon(lexicon: dict[str, str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(lexicon):
            fh.write(f"{word}\t{lexicon[word]}\n")


def extract_vo(tokens, pos_lexicon: dict[str, str],
               lemmatizer: Lemmatizer = _DEFAULT_LEMMATIZER) -> VOPair | None:
    """First verb in token order, paired with the next noun after it.

    Non-noun tokens between them (determiners, adjectives, unknown words)
    are skipped. Returns None when no such pair exists; absence is a value.
    """
    words = [t.lower() for t in tokens]
    verb_at = None
    for i, w in enumerate(words):
        if pos_lexicon.get(w, "O") == "V":
            verb_at = i
            break
    if verb_at is None:
        return None
    for w in words[verb_at + 1:]:
        if pos_lexicon.get(w, "O") == "N":
            return VOPair(lemmatizer.lemmatize(words[verb_at]), lemmatizer.lemmatize(w))
    return None


def resolve_vo(query: QueryRecord, pos_lexicon: dict[str, str],
               lemmatizer: Lemmatizer = _DEFAULT_LEMMATIZER) -> VOPair | None:
    """Pre-parsed VO on the record always wins over the heuristic."""
    if query.vo is not None:
        return VOPair(lemmatizer.lemmatize(query.vo[0]),
                      lemmatizer.lemmatize(query.vo[1]))
    return extract_vo(query.tokens, pos_lexicon, lemmatizer)


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def vo_embedding(vo: VOPair | None, table: EmbeddingTable) -> np.ndarray:
    """Verb and object embeddings concatenated; the fallback is all-or-nothing:
    a missing pair or either missing word yields the full zero vector."""
    out_dim = 2 * table.dim
    if vo is None:
        return np.zeros(out_dim, dtype=np.float64)
    ev = table.lookup(vo.verb)
    eo = table.lookup(vo.obj)
    if ev is None or eo is None:
        return np.zeros(out_dim, dtype=np.float64)
    return np.concatenate([ev, eo])


@dataclass(frozen=True)
class LabelLexicon:
    """Activity label names with embeddings = mean of their words' vectors."""

    labels: tuple[str, ...]
    embeddings: np.ndarray  # (num_labels, emb_dim)

    @classmethod
    def build(cls, labels, table: EmbeddingTable) -> "LabelLexicon":
        rows = []
        for label in labels:
            vecs = [table.lookup(w) for w in label.split()]
            vecs = [v for v in vecs if v is not None]
            if vecs:
                rows.append(np.mean(vecs, axis=0))
            else:
                rows.append(np.zeros(table.dim, dtype=np.float64))
        return cls(tuple(labels), np.array(rows))

    def __len__(self) -> int:
        return len(self.labels)


def load_label_lexicon(path, table: EmbeddingTable) -> LabelLexicon:
    """Text lines index<TAB>label words; indices must be 0..n-1 in order."""
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataValidationError(f"{path}:{lineno}: malformed label line {line!r}")
            if int(parts[0]) != len(labels):
                raise DataValidationError(
                    f"{path}:{lineno}: label index {parts[0]} out of order"
                )
            labels.append(parts[1])
    if not labels:
        raise DataValidationError(f"{path}: empty label lexicon")
    return LabelLexicon.build(labels, table)


def save_label_lexicon(labels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, label in enumerate(labels):
            fh.write(f"{i}\t{label}\n")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def best_label_match(vo: VOPair | None, lexicon: LabelLexicon,
                     table: EmbeddingTable) -> tuple[int | None, float]:
    """Label index with highest cosine similarity to the VO's mean word
    embedding, ties broken by lowest index; (None, 0.0) without a usable VO."""
    if vo is None:
        return None, 0.0
    ev = table.lookup(vo.verb)
    eo = table.lookup(vo.obj)
    if ev is None or eo is None:
        return None, 0.0
    query = (ev + eo) / 2.0
    best_idx, best_sim = None, -np.inf
    for i in range(len(lexicon)):
        sim = cosine(query, lexicon.embeddings[i])
        if sim > best_sim:
            best_idx, best_sim = i, sim
    return best_idx, float(best_sim)
