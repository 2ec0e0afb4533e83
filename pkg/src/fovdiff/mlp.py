"""Small MLP noise predictor with hand-derived backprop and Adam training.

The network maps a flattened grid concatenated with a sinusoidal step
embedding to a noise prediction of the grid's size. Hidden layers use the
sigmoid-weighted linear activation, which is smooth enough for clean
finite-difference gradient checks.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .schedule import DiffusionSchedule, forward_diffuse

__all__ = [
    "MlpParams",
    "MlpGrads",
    "TrainConfig",
    "time_embedding",
    "init_mlp",
    "mlp_eps",
    "batch_loss_and_grad",
    "loss_and_grad",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"RPDM"
CHECKPOINT_VERSION = 1


def time_embedding(t: int, T: int, embed_dim: int) -> np.ndarray:
    """Sinusoidal embedding of step t as interleaved (sin, cos) pairs.

    Frequencies are geometrically spaced from 1/T to 1, so the lowest pair
    sweeps less than one radian over the whole schedule and the embedding
    stays injective on 0..T.
    """
    if embed_dim < 2 or embed_dim % 2 != 0:
        raise ValueError(f"embed_dim must be even and >= 2, got {embed_dim}")
    if not 0 <= t <= T:
        raise ValueError(f"step t={t} outside 0..{T}")
    freqs = np.geomspace(1.0 / T, 1.0, embed_dim // 2)
    out = np.empty(embed_dim)
    out[0::2] = np.sin(t * freqs)
    out[1::2] = np.cos(t * freqs)
    return out


def _embed_batch(t: np.ndarray, T: int, embed_dim: int) -> np.ndarray:
    freqs = np.geomspace(1.0 / T, 1.0, embed_dim // 2)
    phase = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    out = np.empty((phase.shape[0], embed_dim))
    out[:, 0::2] = np.sin(phase)
    out[:, 1::2] = np.cos(phase)
    return out


@dataclass(frozen=True)
class MlpParams:
    """Layer weights and biases plus the embedding geometry they expect.

    ``weights[i]`` has shape (out, in); the first input dimension equals
    grid size + embed_dim and the last output equals the grid size. The
    schedule length T is carried so the step embedding is reproducible
    from the parameters alone.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    T: int
    embed_dim: int

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if len(ws) == 0 or len(ws) != len(bs):
            raise ValueError("need matching non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: bias shape {b.shape} vs weight {w.shape}")
            if i > 0 and w.shape[1] != ws[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
        if ws[0].shape[1] != ws[-1].shape[0] + self.embed_dim:
            raise ValueError(
                "first input dim must equal grid size + embed_dim, got "
                f"{ws[0].shape[1]} vs {ws[-1].shape[0]} + {self.embed_dim}"
            )
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        for a in (*ws, *bs):
            a.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def dim(self) -> int:
        """Flattened grid size the network denoises."""
        return self.weights[-1].shape[0]

    def eps(
        self, x_t: np.ndarray, t: int, schedule: DiffusionSchedule
    ) -> np.ndarray:
        if schedule.T != self.T:
            raise ValueError(
                f"schedule T={schedule.T} does not match model T={self.T}"
            )
        return mlp_eps(self, x_t, t)


@dataclass
class MlpGrads:
    """Gradient tree with the same layer structure as MlpParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    iterations: int = 5000
    seed: int = 0
    embed_dim: int = 16
    hidden: tuple[int, ...] = (256, 256)

    def __post_init__(self):
        # learning_rate 0 is allowed as an explicit null update.
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.iterations < 1:
            raise ValueError("batch_size and iterations must be >= 1")
        if self.embed_dim < 2 or self.embed_dim % 2 != 0:
            raise ValueError("embed_dim must be even and >= 2")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")


def init_mlp(
    dim: int,
    T: int,
    embed_dim: int = 16,
    hidden: tuple[int, ...] = (256, 256),
    rng: np.random.Generator | None = None,
) -> MlpParams:
    """Glorot-uniform weights, zero biases, for a grid of flattened size dim."""
    rng = np.random.default_rng() if rng is None else rng
    sizes = [dim + embed_dim, *hidden, dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(
        weights=tuple(weights), biases=tuple(biases), T=T, embed_dim=embed_dim
    )


def _silu(z: np.ndarray) -> np.ndarray:
    return z * expit(z)


def _silu_grad(z: np.ndarray) -> np.ndarray:
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


def _forward(params: MlpParams, h: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Run the batch (B, in) through all layers; returns preactivations."""
    preacts = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w.T + b
        preacts.append(a)
        h = _silu(a) if i < len(params.weights) - 1 else a
    return preacts, h


def mlp_eps(params: MlpParams, x_t: np.ndarray, t: int) -> np.ndarray:
    """Noise prediction for a single grid at step t; pure and deterministic."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.size != params.dim:
        raise ValueError(
            f"grid size {x_t.size} does not match model size {params.dim}"
        )
    h = np.concatenate(
        [x_t.reshape(-1), time_embedding(t, params.T, params.embed_dim)]
    )
    _, out = _forward(params, h[None, :])
    return out[0].reshape(x_t.shape)


def batch_loss_and_grad(
    params: MlpParams,
    x0: np.ndarray,
    t: np.ndarray,
    eps: np.ndarray,
    schedule: DiffusionSchedule,
) -> tuple[float, MlpGrads]:
    """Loss and exact parameter gradient for a fixed (x0, t, eps) batch.

    The loss is the batch mean of the squared noise-prediction residual,
    summed over grid elements. Deterministic: all randomness (step and
    noise draws) lives in the caller, which keeps finite-difference checks
    and permutation-invariance arguments exact.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    t = np.asarray(t)
    B = x0.shape[0]
    if B == 0:
        raise ValueError("batch must be non-empty")

    ab = schedule.alpha_bars[t]
    x_t = np.sqrt(ab)[:, None] * x0 + np.sqrt(1.0 - ab)[:, None] * eps
    h0 = np.concatenate(
        [x_t, _embed_batch(t, params.T, params.embed_dim)], axis=1
    )

    # Forward, keeping layer inputs for the backward pass.
    inputs = [h0]
    preacts = []
    h = h0
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w.T + b
        preacts.append(a)
        h = _silu(a) if i < n_layers - 1 else a
        if i < n_layers - 1:
            inputs.append(h)
    out = h

    resid = out - eps
    loss = float(np.sum(resid**2) / B)

    # Reverse pass: d(loss)/d(out) = 2 resid / B, then chain through layers.
    grads_w = [np.empty(0)] * n_layers
    grads_b = [np.empty(0)] * n_layers
    da = 2.0 * resid / B
    for i in range(n_layers - 1, -1, -1):
        grads_w[i] = da.T @ inputs[i]
        grads_b[i] = da.sum(axis=0)
        if i > 0:
            dh = da @ params.weights[i]
            da = dh * _silu_grad(preacts[i - 1])
    return loss, MlpGrads(weights=grads_w, biases=grads_b)


def _as_matrix(x0_batch) -> np.ndarray:
    """Stack a list of grids (or a 2-D array) into a (B, d) matrix."""
    if isinstance(x0_batch, np.ndarray) and x0_batch.ndim == 2:
        return np.asarray(x0_batch, dtype=np.float64)
    rows = [np.asarray(g, dtype=np.float64).reshape(-1) for g in x0_batch]
    if not rows:
        raise ValueError("batch must be non-empty")
    return np.stack(rows)


def loss_and_grad(
    params: MlpParams,
    x0_batch,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
) -> tuple[float, MlpGrads]:
    """Noise-prediction objective on a batch of clean grids.

    Draws a uniform step in 1..T and a fresh unit normal per element, forms
    the diffused batch, and returns the loss with its exact gradient.
    """
    x0 = _as_matrix(x0_batch)
    t = rng.integers(1, schedule.T + 1, size=x0.shape[0])
    eps = rng.standard_normal(x0.shape)
    return batch_loss_and_grad(params, x0, t, eps, schedule)


def train(
    data,
    config: TrainConfig,
    schedule: DiffusionSchedule,
) -> MlpParams:
    """Adam-train an MLP noise predictor on a dataset of clean grids.

    Fully reproducible from config.seed: initialization, batch selection,
    and noise draws all come from one generator in a fixed order. Aborts
    with a diagnostic if the loss stops being finite.
    """
    data = _as_matrix(data)
    n, dim = data.shape
    rng = np.random.default_rng(config.seed)
    params = init_mlp(dim, schedule.T, config.embed_dim, tuple(config.hidden), rng)

    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    m_w = [np.zeros_like(w) for w in params.weights]
    v_w = [np.zeros_like(w) for w in params.weights]
    m_b = [np.zeros_like(b) for b in params.biases]
    v_b = [np.zeros_like(b) for b in params.biases]
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]

    log_every = max(1, config.iterations // 20)
    running = None
    for it in range(1, config.iterations + 1):
        idx = rng.integers(0, n, size=config.batch_size)
        current = MlpParams(
            weights=tuple(weights),
            biases=tuple(biases),
            T=schedule.T,
            embed_dim=config.embed_dim,
        )
        loss, grads = loss_and_grad(current, data[idx], schedule, rng)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"training diverged: loss={loss} at iteration {it}"
            )
        running = loss if running is None else 0.99 * running + 0.01 * loss
        if it % log_every == 0 or it == 1:
            logger.info(
                "iter %d/%d loss %.6f (running %.6f)",
                it,
                config.iterations,
                loss,
                running,
            )
        correction1 = 1.0 - beta1**it
        correction2 = 1.0 - beta2**it
        for tree, m, v, g in (
            (weights, m_w, v_w, grads.weights),
            (biases, m_b, v_b, grads.biases),
        ):
            for p, mi, vi, gi in zip(tree, m, v, g):
                mi *= beta1
                mi += (1.0 - beta1) * gi
                vi *= beta2
                vi += (1.0 - beta2) * gi**2
                p -= config.learning_rate * (mi / correction1) / (
                    np.sqrt(vi / correction2) + adam_eps
                )

    return MlpParams(
        weights=tuple(weights),
        biases=tuple(biases),
        T=schedule.T,
        embed_dim=config.embed_dim,
    )


def save_checkpoint(path, params: MlpParams) -> None:
    """Write layer weights and biases in the fixed binary layout.

    Layout: magic "RPDM", version u32, layer count u32, then per layer
    rows u32, cols u32, row-major little-endian f64 weights, then biases.
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.weights)))
        for w, b in zip(params.weights, params.biases):
            rows, cols = w.shape
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.asarray(b, dtype="<f8").tobytes())


def load_checkpoint(path, T: int) -> MlpParams:
    """Read a checkpoint written by save_checkpoint.

    The file stores only layer data; the schedule length T is supplied by
    the caller and the embedding width is recovered from the layer shapes.
    """
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    if len(raw) < 12:
        raise ValueError(f"{path}: truncated checkpoint header")
    version, n_layers = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    weights, biases = [], []
    for i in range(n_layers):
        if offset + 8 > len(raw):
            raise ValueError(f"{path}: truncated at layer {i} header")
        rows, cols = struct.unpack_from("<II", raw, offset)
        offset += 8
        need = 8 * rows * cols + 8 * rows
        if offset + need > len(raw):
            raise ValueError(f"{path}: truncated at layer {i} payload")
        w = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset)
        offset += 8 * rows * cols
        b = np.frombuffer(raw, dtype="<f8", count=rows, offset=offset)
        offset += 8 * rows
        weights.append(w.reshape(rows, cols).copy())
        biases.append(b.copy())
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    if not weights:
        raise ValueError(f"{path}: checkpoint contains no layers")
    embed_dim = weights[0].shape[1] - weights[-1].shape[0]
    return MlpParams(
        weights=tuple(weights), biases=tuple(biases), T=T, embed_dim=embed_dim
    )
