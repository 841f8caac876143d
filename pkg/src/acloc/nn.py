"""Dense numeric core: fully-connected layers with exact gradients,
activations, loss primitives, Adam, finite-difference gradient checking,
and the binary checkpoint format.

All math runs in float64; checkpoints store float32 (exactly representable
values round-trip bit-exactly).
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable

import numpy as np

from .errors import DataValidationError, NumericError, ShapeError

CHECKPOINT_MAGIC = b"ACLW"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# activations and scalar loss primitives
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # evaluate on the side that cannot overflow
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), overflow-safe."""
    return np.logaddexp(0.0, x)


def smooth_l1(x):
    """0.5 x^2 inside |x| < 1, |x| - 0.5 outside; C1 at the knee."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    out = np.where(a < 1.0, 0.5 * x * x, a - 0.5)
    return out if out.ndim else float(out)


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) < 1.0, x, np.sign(x))
    return out if out.ndim else float(out)


def bce_loss(eta: float, label: int, clamp: float = 1e-7) -> float:
    """Binary cross-entropy on a probability, clamped away from {0, 1}."""
    if label not in (0, 1):
        raise NumericError(f"binary label expected, got {label!r}")
    p = min(max(float(eta), clamp), 1.0 - clamp)
    return -(label * np.log(p) + (1 - label) * np.log(1.0 - p))


def bce_from_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy computed in logit space.

    Returns (loss, dloss/dz). Equals bce_loss(sigmoid(z), y) away from the
    clamp region but stays exact for gradient checking.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    loss = float(np.mean(softplus(z) - y * z))
    grad = (sigmoid(z) - y) / z.size
    return loss, grad


# ---------------------------------------------------------------------------
# dense layer
# ---------------------------------------------------------------------------

class DenseLayer:
    """y = W x + b with cached input for the backward pass.

    Supports single vectors (apply/backward) and row batches
    (apply_batch/backward_batch). Gradients land in grad_w / grad_b.
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.ndim != 1 or weight.shape[0] != bias.shape[0]:
            raise ShapeError(
                f"dense layer wants (out,in) weight and (out,) bias, got "
                f"{weight.shape} and {bias.shape}"
            )
        self.weight = weight
        self.bias = bias
        self.grad_w = np.zeros_like(weight)
        self.grad_b = np.zeros_like(bias)
        self._cache: np.ndarray | None = None

    @classmethod
    def create(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "DenseLayer":
        # uniform(-a, a), a = sqrt(6 / (in + out)); zero bias
        a = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-a, a, size=(out_dim, in_dim))
        return cls(w, np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.in_dim,):
            raise ShapeError(
                f"dense input shape {x.shape} does not match weight {self.weight.shape}"
            )
        self._cache = x
        return self.weight @ x + self.bias

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise NumericError("backward called before apply")
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != (self.out_dim,):
            raise ShapeError(
                f"grad shape {g.shape} does not match output dim ({self.out_dim},)"
            )
        self.grad_w = np.outer(g, self._cache)
        self.grad_b = g.copy()
        return self.weight.T @ g

    def apply_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"batch input shape {x.shape} does not match weight {self.weight.shape}"
            )
        self._cache = x
        return x @ self.weight.T + self.bias

    def backward_batch(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise NumericError("backward_batch called before apply_batch")
        g = np.asarray(grad_out, dtype=np.float64)
        x = self._cache
        if g.shape != (x.shape[0], self.out_dim):
            raise ShapeError(
                f"grad shape {g.shape} does not match ({x.shape[0]}, {self.out_dim})"
            )
        self.grad_w = g.T @ x
        self.grad_b = g.sum(axis=0)
        return g @ self.weight

    def zero_grad(self) -> None:
        self.grad_w = np.zeros_like(self.weight)
        self.grad_b = np.zeros_like(self.bias)


def dense_apply(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """Functional form of DenseLayer.apply."""
    return layer.apply(x)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> dict[str, np.ndarray]:
    """One in-place Adam update with bias correction; increments state.t."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(
                f"adam: grad shape {g.shape} != param shape {p.shape} for {name!r}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# finite-difference gradient check
# ---------------------------------------------------------------------------

def grad_check(loss_and_grads: Callable[[], tuple[float, dict[str, np.ndarray]]],
               params: dict[str, np.ndarray],
               eps: float = 1e-5,
               max_coords_per_tensor: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic gradients and central differences.

    loss_and_grads() must be deterministic and read the arrays in `params`
    by reference (they are perturbed in place). Coordinates are checked
    exhaustively unless max_coords_per_tensor caps them, in which case a
    deterministic sample per tensor is used.

    rel err = |analytic - fd| / max(|analytic|, |fd|, 1e-8)
    """
    loss0, grads = loss_and_grads()
    if not np.isfinite(loss0):
        raise NumericError(f"non-finite loss in gradient check: {loss0}")
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name in sorted(params):
        arr = params[name]
        flat = arr.reshape(-1)
        g = grads[name].reshape(-1)
        n = flat.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            idx = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            idx = np.arange(n)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = loss_and_grads()
            flat[i] = orig - eps
            lm, _ = loss_and_grads()
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            fd = (lp - lm) / (2.0 * eps)
            rel = abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-8)
            if rel > worst:
                worst = rel
    return worst


# ---------------------------------------------------------------------------
# checkpoint container ("ACLW")
# ---------------------------------------------------------------------------

def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors: magic, version, count, then per tensor
    name (u16 length + UTF-8), rank (u8), dims (u32 each), float32 LE data.

    Tensors are written in sorted-name order so output bytes do not depend
    on dict insertion order.
    """
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        enc = name.encode("utf-8")
        blob += struct.pack("<H", len(enc))
        blob += enc
        blob += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<I", d)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read an ACLW file back into float64 arrays (exact upcast)."""
    with open(path, "rb") as fh:
        data = fh.read()

    def need(n: int, off: int, what: str) -> int:
        if off + n > len(data):
            raise DataValidationError(f"checkpoint {path}: truncated reading {what}")
        return off + n

    if data[:4] != CHECKPOINT_MAGIC:
        raise DataValidationError(
            f"checkpoint {path}: bad magic {data[:4]!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    off = need(8, 4, "header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise DataValidationError(f"checkpoint {path}: unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        off2 = need(2, off, "name length")
        (name_len,) = struct.unpack_from("<H", data, off)
        off = need(name_len, off2, "name")
        name = data[off2:off].decode("utf-8")
        off2 = need(1, off, "rank")
        rank = data[off]
        off = off2
        dims = []
        for _ in range(rank):
            off2 = need(4, off, f"dims of {name}")
            dims.append(struct.unpack_from("<I", data, off)[0])
            off = off2
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        off2 = need(4 * size, off, f"data of {name}")
        arr = np.frombuffer(data[off:off2], dtype="<f4").reshape(dims)
        off = off2
        tensors[name] = arr.astype(np.float64)
    if off != len(data):
        raise DataValidationError(
            f"checkpoint {path}: {len(data) - off} trailing bytes after last tensor"
        )
    return tensors


def assert_all_finite(arrays: Iterable[np.ndarray], context: str) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values detected in {context}")
