"""The localizer network and actionness generator.

Clip/query features are projected per modality, combined by multi-modal
processing (elementwise product, sum, and concatenation), and fed to a
two-layer head emitting a pre-alignment score and start/end unit offsets.
Scores for a batch are computed for every clip x query cross pair; the
diagonal holds the matched pairs. All gradients are exact and validated by
finite differences.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import temporal
from .concepts import resolve_vo, vo_embedding
from .data import (DatasetManifest, EmbeddingTable, load_video_concepts,
                   load_video_features, sentence_vector)
from .errors import ConfigError, DataValidationError, NumericError, ShapeError
from .nn import (AdamState, DenseLayer, adam_step, bce_from_logits,
                 load_checkpoint, save_checkpoint, sigmoid, smooth_l1,
                 smooth_l1_grad, softplus)


class Variant(enum.Enum):
    FULL = "full"
    ACTIVITY_ONLY = "activity"
    WO_SAC = "wo-sac"
    WO_VAC = "wo-vac"
    CONCAT = "concat"


_VARIANT_IDS = {v: i for i, v in enumerate(Variant)}
_IDS_VARIANT = {i: v for v, i in _VARIANT_IDS.items()}

# (kind, left layer, right layer); left projects the clip side, right the
# query side. "mpu" blocks are 4d wide, "cat" blocks are dl + dr wide.
_VARIANT_BLOCKS: dict[Variant, tuple[tuple[str, str, str], ...]] = {
    Variant.FULL: (("mpu", "proj_v", "proj_s"), ("mpu", "proj_vc", "proj_sc")),
    Variant.ACTIVITY_ONLY: (("mpu", "proj_vc", "proj_sc"),),
    Variant.WO_SAC: (("mpu", "proj_v", "proj_s"), ("mpu", "proj_vc", "proj_s_a")),
    Variant.WO_VAC: (("mpu", "proj_v", "proj_s"), ("mpu", "proj_v_a", "proj_sc")),
    Variant.CONCAT: (("cat", "proj_v", "proj_s"), ("cat", "proj_vc", "proj_sc")),
}

# which input feeds each projection: clip feature, sentence, concept, vo
_LAYER_INPUT = {
    "proj_v": "V", "proj_v_a": "V",
    "proj_s": "S", "proj_s_a": "S",
    "proj_vc": "C",
    "proj_sc": "Q",
}


def mpu(x: np.ndarray, xp: np.ndarray) -> np.ndarray:
    """(x * x') || (x + x') || x || x'; output is 4x the input length."""
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    if x.shape != xp.shape or x.ndim != 1:
        raise ShapeError(f"mpu wants equal-length vectors, got {x.shape} and {xp.shape}")
    return np.concatenate([x * xp, x + xp, x, xp])


@dataclass
class LocalizerParams:
    """All learnable projections plus the scoring/regression head."""

    variant: Variant
    layers: dict[str, DenseLayer]

    @classmethod
    def create(cls, variant: Variant, feat_dim: int, sent_dim: int,
               concept_dim: int, vo_dim: int, d_t: int, d_a: int,
               hidden: int, rng: np.random.Generator) -> "LocalizerParams":
        in_dims = {"proj_v": feat_dim, "proj_s": sent_dim, "proj_vc": concept_dim,
                   "proj_sc": vo_dim, "proj_s_a": sent_dim, "proj_v_a": feat_dim}
        out_dims = {"proj_v": d_t, "proj_s": d_t, "proj_vc": d_a, "proj_sc": d_a,
                    "proj_s_a": d_a, "proj_v_a": d_a}
        blocks = _VARIANT_BLOCKS[variant]
        names = []
        for _, left, right in blocks:
            names.extend([left, right])
        layers = {}
        for name in names:  # fixed order fixes the rng draw sequence
            layers[name] = DenseLayer.create(in_dims[name], out_dims[name], rng)
        width = 0
        for kind, left, right in blocks:
            if kind == "mpu":
                width += 4 * out_dims[left]
            else:
                width += out_dims[left] + out_dims[right]
        layers["head1"] = DenseLayer.create(width, hidden, rng)
        layers["head2"] = DenseLayer.create(hidden, 3, rng)
        return cls(variant, layers)

    @property
    def head_in_dim(self) -> int:
        return self.layers["head1"].in_dim

    def named(self) -> dict[str, np.ndarray]:
        """Live views of every parameter array, for Adam and checkpoints."""
        out = {}
        for name, layer in self.layers.items():
            out[f"{name}/w"] = layer.weight
            out[f"{name}/b"] = layer.bias
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers.items():
            out[f"{name}/w"] = layer.grad_w
            out[f"{name}/b"] = layer.grad_b
        return out


def save_localizer(params: LocalizerParams, path) -> None:
    tensors = dict(params.named())
    tensors["meta/variant"] = np.array([_VARIANT_IDS[params.variant]], dtype=np.float64)
    save_checkpoint(path, tensors)


def load_localizer(path) -> LocalizerParams:
    tensors = load_checkpoint(path)
    if "meta/variant" not in tensors:
        raise DataValidationError(f"{path}: not a localizer checkpoint (no variant tag)")
    variant = _IDS_VARIANT.get(int(tensors.pop("meta/variant")[0]))
    if variant is None:
        raise DataValidationError(f"{path}: unknown variant tag")
    layers = {}
    names = {n.split("/")[0] for n in tensors}
    for name in names:
        try:
            layers[name] = DenseLayer(tensors[f"{name}/w"], tensors[f"{name}/b"])
        except KeyError as exc:
            raise DataValidationError(f"{path}: incomplete tensor pair for {name!r}") from exc
    expected = {left for _, left, _ in _VARIANT_BLOCKS[variant]}
    expected |= {right for _, _, right in _VARIANT_BLOCKS[variant]}
    expected |= {"head1", "head2"}
    if set(layers) != expected:
        raise DataValidationError(
            f"{path}: checkpoint layers {sorted(layers)} do not match "
            f"variant {variant.value!r} (expected {sorted(expected)})"
        )
    return LocalizerParams(variant, layers)


# ---------------------------------------------------------------------------
# forward / backward over all clip x query cross pairs
# ---------------------------------------------------------------------------

def forward_cross(params: LocalizerParams, V: np.ndarray, S: np.ndarray,
                  C: np.ndarray, Q: np.ndarray):
    """Score every clip row against every query row.

    V: (Nc, 3*d_v) clip features      S: (Nq, sent_dim) sentence embeddings
    C: (Nc, d_c) clip concepts        Q: (Nq, 2*emb_dim) VO embeddings

    Returns (delta, off_s, off_e, cache) where the first three are (Nc, Nq).
    """
    inputs = {"V": np.atleast_2d(V), "S": np.atleast_2d(S),
              "C": np.atleast_2d(C), "Q": np.atleast_2d(Q)}
    blocks = _VARIANT_BLOCKS[params.variant]
    proj = {}
    for _, left, right in blocks:
        for name in (left, right):
            if name not in proj:
                proj[name] = params.layers[name].apply_batch(inputs[_LAYER_INPUT[name]])
    nc = inputs["V"].shape[0]
    nq = inputs["S"].shape[0]
    parts = []
    for kind, left, right in blocks:
        L, R = proj[left], proj[right]
        if kind == "mpu":
            d = L.shape[1]
            block = np.empty((nc, nq, 4 * d))
            block[:, :, :d] = L[:, None, :] * R[None, :, :]
            block[:, :, d:2 * d] = L[:, None, :] + R[None, :, :]
            block[:, :, 2 * d:3 * d] = np.broadcast_to(L[:, None, :], (nc, nq, d))
            block[:, :, 3 * d:] = np.broadcast_to(R[None, :, :], (nc, nq, d))
        else:
            dl, dr = L.shape[1], R.shape[1]
            block = np.empty((nc, nq, dl + dr))
            block[:, :, :dl] = np.broadcast_to(L[:, None, :], (nc, nq, dl))
            block[:, :, dl:] = np.broadcast_to(R[None, :, :], (nc, nq, dr))
        parts.append(block)
    Z = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=2)
    flat = Z.reshape(nc * nq, -1)
    pre_act = params.layers["head1"].apply_batch(flat)
    hidden = np.maximum(0.0, pre_act)
    out = params.layers["head2"].apply_batch(hidden).reshape(nc, nq, 3)
    cache = {"proj": proj, "mask": pre_act > 0, "nc": nc, "nq": nq,
             "widths": [p.shape[2] for p in parts]}
    return out[:, :, 0], out[:, :, 1], out[:, :, 2], cache


def backward_cross(params: LocalizerParams, cache, d_delta: np.ndarray,
                   d_off_s: np.ndarray, d_off_e: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss given its gradients w.r.t. the three
    head outputs; returns a dict matching params.named()."""
    nc, nq = cache["nc"], cache["nq"]
    d_out = np.stack([d_delta, d_off_s, d_off_e], axis=-1).reshape(nc * nq, 3)
    d_hidden = params.layers["head2"].backward_batch(d_out)
    d_pre = d_hidden * cache["mask"]
    d_flat = params.layers["head1"].backward_batch(d_pre)
    dZ = d_flat.reshape(nc, nq, -1)

    proj = cache["proj"]
    d_proj = {name: np.zeros_like(p) for name, p in proj.items()}
    offset = 0
    for (kind, left, right), width in zip(_VARIANT_BLOCKS[params.variant],
                                          cache["widths"]):
        blk = dZ[:, :, offset:offset + width]
        offset += width
        L, R = proj[left], proj[right]
        if kind == "mpu":
            d = L.shape[1]
            d1 = blk[:, :, :d]
            d2 = blk[:, :, d:2 * d]
            d3 = blk[:, :, 2 * d:3 * d]
            d4 = blk[:, :, 3 * d:]
            d_proj[left] += np.einsum("ijd,jd->id", d1, R) + d2.sum(axis=1) + d3.sum(axis=1)
            d_proj[right] += np.einsum("ijd,id->jd", d1, L) + d2.sum(axis=0) + d4.sum(axis=0)
        else:
            dl = L.shape[1]
            d_proj[left] += blk[:, :, :dl].sum(axis=1)
            d_proj[right] += blk[:, :, dl:].sum(axis=0)

    for name, grad in d_proj.items():
        params.layers[name].backward_batch(grad)
    return params.grads()


def acl_forward(params: LocalizerParams, clip_feat: np.ndarray,
                sent_emb: np.ndarray, concept: np.ndarray,
                vo_emb: np.ndarray) -> tuple[float, float, float]:
    """Single pair scoring: (pre-alignment score, start offset, end offset)."""
    delta, off_s, off_e, _ = forward_cross(
        params, clip_feat[None, :], sent_emb[None, :],
        concept[None, :], vo_emb[None, :])
    return float(delta[0, 0]), float(off_s[0, 0]), float(off_e[0, 0])


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def alignment_loss(delta: np.ndarray, gamma: float) -> float:
    """Batch ranking loss over the cross-score matrix: the diagonal is pulled
    up (weight gamma), every off-diagonal entry is pushed down."""
    delta = np.asarray(delta, dtype=np.float64)
    n = delta.shape[0]
    if delta.ndim != 2 or delta.shape[1] != n:
        raise ShapeError(f"score matrix must be square, got {delta.shape}")
    if n < 2:
        raise NumericError("alignment loss needs a batch of at least 2 (no negatives)")
    diag = np.diag(delta)
    off = softplus(delta).sum() - softplus(diag).sum()
    return float((gamma * softplus(-diag).sum() + off) / n)


def alignment_loss_grad(delta: np.ndarray, gamma: float) -> np.ndarray:
    delta = np.asarray(delta, dtype=np.float64)
    n = delta.shape[0]
    grad = sigmoid(delta) / n
    idx = np.arange(n)
    grad[idx, idx] = -gamma * sigmoid(-np.diag(delta)) / n
    return grad


def regression_loss(pred_s, pred_e, target_s, target_e, mask=None) -> float:
    """Mean over aligned samples of smooth-L1 start and end residuals."""
    pred_s = np.asarray(pred_s, dtype=np.float64)
    pred_e = np.asarray(pred_e, dtype=np.float64)
    target_s = np.asarray(target_s, dtype=np.float64)
    target_e = np.asarray(target_e, dtype=np.float64)
    if mask is None:
        mask = np.ones(pred_s.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        warnings.warn("regression loss over zero aligned samples; returning 0")
        return 0.0
    res = (smooth_l1(target_s[mask] - pred_s[mask])
           + smooth_l1(target_e[mask] - pred_e[mask]))
    return float(np.sum(res) / n)


def regression_loss_grad(pred_s, pred_e, target_s, target_e, mask=None):
    pred_s = np.asarray(pred_s, dtype=np.float64)
    pred_e = np.asarray(pred_e, dtype=np.float64)
    if mask is None:
        mask = np.ones(pred_s.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    n = max(int(mask.sum()), 1)
    g_s = np.zeros_like(pred_s)
    g_e = np.zeros_like(pred_e)
    g_s[mask] = -smooth_l1_grad(np.asarray(target_s)[mask] - pred_s[mask]) / n
    g_e[mask] = -smooth_l1_grad(np.asarray(target_e)[mask] - pred_e[mask]) / n
    return g_s, g_e


def total_loss(delta: np.ndarray, pred_s, pred_e, target_s, target_e,
               gamma: float, beta: float) -> tuple[float, float, float]:
    """Multi-task objective: alignment plus beta-weighted regression.

    Returns (total, alignment part, regression part). Regression is taken
    over the diagonal (aligned) pairs only.
    """
    l_aln = alignment_loss(delta, gamma)
    l_rgr = regression_loss(pred_s, pred_e, target_s, target_e)
    return l_aln + beta * l_rgr, l_aln, l_rgr


# ---------------------------------------------------------------------------
# actionness generator
# ---------------------------------------------------------------------------

@dataclass
class ActionnessParams:
    """Two-layer MLP over clip features with a sigmoid confidence output."""

    fc1: DenseLayer
    fc2: DenseLayer

    @classmethod
    def create(cls, feat_dim: int, hidden: int,
               rng: np.random.Generator) -> "ActionnessParams":
        return cls(DenseLayer.create(feat_dim, hidden, rng),
                   DenseLayer.create(hidden, 1, rng))

    def named(self) -> dict[str, np.ndarray]:
        return {"fc1/w": self.fc1.weight, "fc1/b": self.fc1.bias,
                "fc2/w": self.fc2.weight, "fc2/b": self.fc2.bias}

    def grads(self) -> dict[str, np.ndarray]:
        return {"fc1/w": self.fc1.grad_w, "fc1/b": self.fc1.grad_b,
                "fc2/w": self.fc2.grad_w, "fc2/b": self.fc2.grad_b}


def save_actionness(params: ActionnessParams, path) -> None:
    save_checkpoint(path, params.named())


def load_actionness(path) -> ActionnessParams:
    tensors = load_checkpoint(path)
    expected = {"fc1/w", "fc1/b", "fc2/w", "fc2/b"}
    if set(tensors) != expected:
        raise DataValidationError(
            f"{path}: not an actionness checkpoint (tensors {sorted(tensors)})"
        )
    return ActionnessParams(DenseLayer(tensors["fc1/w"], tensors["fc1/b"]),
                            DenseLayer(tensors["fc2/w"], tensors["fc2/b"]))


def actionness_logits(params: ActionnessParams, X: np.ndarray):
    X = np.atleast_2d(X)
    pre = params.fc1.apply_batch(X)
    hidden = np.maximum(0.0, pre)
    logits = params.fc2.apply_batch(hidden)[:, 0]
    return logits, pre > 0


def actionness_backward(params: ActionnessParams, mask: np.ndarray,
                        d_logits: np.ndarray) -> dict[str, np.ndarray]:
    d_hidden = params.fc2.backward_batch(d_logits[:, None])
    params.fc1.backward_batch(d_hidden * mask)
    return params.grads()


def actionness_scores(params: ActionnessParams, X: np.ndarray) -> np.ndarray:
    logits, _ = actionness_logits(params, X)
    return sigmoid(logits)


def actionness_forward(params: ActionnessParams, clip_feat: np.ndarray) -> float:
    """Confidence in (0, 1) that a single window contains any activity."""
    return float(actionness_scores(params, clip_feat[None, :])[0])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 28
    beta: float = 0.01
    gamma: float = 1.0
    lr: float = 0.005
    epochs: int = 10
    seed: int = 0
    d_t: int = 1024
    d_a: int = 256
    hidden: int = 1000
    sentence_dim: int = 4800
    pos_tiou: float = 0.5
    neg_tiou: float = 0.3
    scales: tuple[int, ...] = (64, 128, 256, 512)
    overlap: float = 0.75
    ctx_units: int = 8

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2: the alignment loss "
                              "needs in-batch negatives")
        if not 0.0 <= self.neg_tiou <= self.pos_tiou <= 1.0:
            raise ConfigError(
                f"need 0 <= neg_tiou <= pos_tiou <= 1, got "
                f"({self.neg_tiou}, {self.pos_tiou})"
            )
        for name in ("lr", "epochs", "d_t", "d_a", "hidden", "sentence_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class SampleArrays:
    """Dense per-sample arrays for one training set (matched pairs by row)."""

    V: np.ndarray
    S: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    target_s: np.ndarray
    target_e: np.ndarray
    query_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.V.shape[0]


def build_sample_arrays(manifest: DatasetManifest, table: EmbeddingTable,
                        pos_lexicon: dict[str, str],
                        config: TrainConfig) -> SampleArrays:
    samples = temporal.collect_training_samples(
        manifest, config.scales, config.overlap, config.pos_tiou, config.ctx_units)
    if not samples:
        raise DataValidationError("no aligned training samples were collected; "
                                  "check scales/overlap/pos_tiou against the data")
    queries = {q.id: q for q in manifest.queries}
    feat_cache: dict[str, np.ndarray] = {}
    conc_cache: dict[str, np.ndarray] = {}
    sent_cache: dict[str, np.ndarray] = {}
    vo_cache: dict[str, np.ndarray] = {}
    rows_v, rows_s, rows_c, rows_q = [], [], [], []
    t_s, t_e, qids = [], [], []
    for s in samples:
        vid = s.clip.video_id
        if vid not in feat_cache:
            video = manifest.video(vid)
            feat_cache[vid] = load_video_features(manifest, video)
            conc_cache[vid] = load_video_concepts(manifest, video)
        q = queries[s.query_id]
        if q.id not in sent_cache:
            sent_cache[q.id] = sentence_vector(q, manifest, table, config.sentence_dim)
            vo_cache[q.id] = vo_embedding(resolve_vo(q, pos_lexicon), table)
        rows_v.append(temporal.clip_feature(feat_cache[vid], s.clip))
        rows_c.append(temporal.clip_concept(conc_cache[vid], s.clip))
        rows_s.append(sent_cache[q.id])
        rows_q.append(vo_cache[q.id])
        t_s.append(s.target_s)
        t_e.append(s.target_e)
        qids.append(s.query_id)
    return SampleArrays(np.array(rows_v), np.array(rows_s), np.array(rows_c),
                        np.array(rows_q), np.array(t_s), np.array(t_e), qids)


def train_acl(manifest: DatasetManifest, table: EmbeddingTable,
              pos_lexicon: dict[str, str], config: TrainConfig,
              variant: Variant = Variant.FULL):
    """Train the localizer; returns (params, log rows).

    Log rows are (step, alignment loss, regression loss, total loss).
    Deterministic given (seed, config, data).
    """
    config.validate()
    arrays = build_sample_arrays(manifest, table, pos_lexicon, config)
    n = config.batch_size
    if len(arrays) < n:
        raise DataValidationError(
            f"{len(arrays)} aligned samples but batch_size={n}; "
            "generate more data or lower the batch size"
        )
    rng = np.random.default_rng(config.seed)
    params = LocalizerParams.create(
        variant, arrays.V.shape[1], arrays.S.shape[1], arrays.C.shape[1],
        arrays.Q.shape[1], config.d_t, config.d_a, config.hidden, rng)
    named = params.named()
    adam = AdamState(named, lr=config.lr)
    log: list[tuple[int, float, float, float]] = []
    step = 0
    diag = np.arange(n)
    for _ in range(config.epochs):
        perm = rng.permutation(len(arrays))
        for lo in range(0, len(arrays) - n + 1, n):
            idx = perm[lo:lo + n]
            delta, off_s, off_e, cache = forward_cross(
                params, arrays.V[idx], arrays.S[idx], arrays.C[idx], arrays.Q[idx])
            p_s = off_s[diag, diag]
            p_e = off_e[diag, diag]
            t_s = arrays.target_s[idx]
            t_e = arrays.target_e[idx]
            l_aln = alignment_loss(delta, config.gamma)
            l_rgr = regression_loss(p_s, p_e, t_s, t_e)
            loss = l_aln + config.beta * l_rgr
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at step {step}: aln={l_aln}, rgr={l_rgr}"
                )
            d_delta = alignment_loss_grad(delta, config.gamma)
            g_s, g_e = regression_loss_grad(p_s, p_e, t_s, t_e)
            d_off_s = np.zeros_like(off_s)
            d_off_e = np.zeros_like(off_e)
            d_off_s[diag, diag] = config.beta * g_s
            d_off_e[diag, diag] = config.beta * g_e
            grads = backward_cross(params, cache, d_delta, d_off_s, d_off_e)
            adam_step(named, grads, adam)
            step += 1
            log.append((step, l_aln, l_rgr, loss))
    return params, log


def collect_actionness_set(manifest: DatasetManifest, config: TrainConfig):
    """Window features and binary labels over the training scales."""
    uf = manifest.unit_frames
    gts_by_video: dict[str, list[temporal.Interval]] = {}
    for q in manifest.queries:
        gts_by_video.setdefault(q.video_id, []).append(
            temporal.Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps))
    rows, labels = [], []
    for video in manifest.videos:
        windows = temporal.sliding_windows(
            video.id, video.num_units, config.scales, config.overlap, uf,
            config.ctx_units)
        gts = gts_by_video.get(video.id, [])
        marks = temporal.actionness_labels(
            [w.to_interval(uf) for w in windows], gts,
            config.pos_tiou, config.neg_tiou)
        feats = None
        for w, mark in zip(windows, marks):
            if mark is None:
                continue
            if feats is None:
                feats = load_video_features(manifest, video)
            rows.append(temporal.clip_feature(feats, w))
            labels.append(mark)
    if not rows:
        raise DataValidationError("no labelled windows for actionness training")
    return np.array(rows), np.array(labels)


def train_actionness(manifest: DatasetManifest, config: TrainConfig):
    """Train the actionness generator on class-balanced resampled batches."""
    config.validate()
    X, y = collect_actionness_set(manifest, config)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DataValidationError(
            f"actionness training needs both classes; got {n_pos} positives "
            f"of {len(y)} windows"
        )
    rng = np.random.default_rng(config.seed)
    params = ActionnessParams.create(X.shape[1], config.hidden, rng)
    named = params.named()
    adam = AdamState(named, lr=config.lr)
    pos_idx = np.flatnonzero(y == 1)
    neg_idx = np.flatnonzero(y == 0)
    log: list[tuple[int, float]] = []
    step = 0
    for _ in range(config.epochs):
        # resample the minority class up to the majority count
        if len(pos_idx) < len(neg_idx):
            boosted = rng.choice(pos_idx, size=len(neg_idx), replace=True)
            epoch_idx = np.concatenate([boosted, neg_idx])
        else:
            boosted = rng.choice(neg_idx, size=len(pos_idx), replace=True)
            epoch_idx = np.concatenate([pos_idx, boosted])
        rng.shuffle(epoch_idx)
        for lo in range(0, len(epoch_idx), config.batch_size):
            idx = epoch_idx[lo:lo + config.batch_size]
            logits, mask = actionness_logits(params, X[idx])
            loss, d_logits = bce_from_logits(logits, y[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite actionness loss at step {step}")
            grads = actionness_backward(params, mask, d_logits)
            adam_step(named, grads, adam)
            step += 1
            log.append((step, loss))
    return params, log
