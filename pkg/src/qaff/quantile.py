"""Quantile-regression heads and their training.

A head is a one-hidden-layer network (ReLU hidden, 100 units) from a context
feature row to ten quantile values, squashed by tanh or sigmoid depending on
the channel range. Training regresses every prefix position of a sentence on
the sentence's end score with the asymmetric Huber quantile loss (the
Monte-Carlo method), or bootstraps prefix targets from the next position's
predictions (TD(0), summed over all level pairs).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .channels import Channel, get_channel
from .errors import ConfigError, InterchangeError, QaffError, TrainingDiverged

HEAD_MAGIC = b"QAFFQH1"

LEVELS = np.linspace(0.05, 0.95, 10)


@dataclass(frozen=True)
class QuantileSet:
    """Ten quantile values aligned with LEVELS, nondecreasing after repair."""

    values: tuple[float, ...]
    channel: str = "valence"

    def __post_init__(self):
        if len(self.values) != len(LEVELS):
            raise ValueError("expected one value per level")


@dataclass
class TrainConfig:
    batch_size: int = 20
    epochs: int = 25
    lr: float = 1e-4
    plateau_patience: int = 2
    plateau_min_improve: float = 1e-5
    huber_k: float = 0.001
    seed: int = 0
    method: str = "mc"
    val_fraction: float = 0.1  # used only when no validation set is supplied

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.lr <= 0 or self.huber_k <= 0:
            raise ConfigError("batch size, epochs, lr, huber k must be positive")
        if self.method not in ("mc", "td0"):
            raise ConfigError(f"unknown training method {self.method!r}")


@dataclass
class TrainLog:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)


class QuantileHead:
    def __init__(self, in_dim: int, channel: Channel, hidden: int = 100, seed: int = 0):
        self.in_dim = in_dim
        self.hidden = hidden
        self.channel = channel
        rng = np.random.Generator(np.random.PCG64(seed))
        b1 = 1.0 / np.sqrt(in_dim)
        b2 = 1.0 / np.sqrt(hidden)
        self.W1 = rng.uniform(-b1, b1, (in_dim, hidden))
        self.b1 = rng.uniform(-b1, b1, hidden)
        self.W2 = rng.uniform(-b2, b2, (hidden, len(LEVELS)))
        self.b2 = rng.uniform(-b2, b2, len(LEVELS))

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> "QuantileHead":
        other = QuantileHead.__new__(QuantileHead)
        other.in_dim, other.hidden, other.channel = self.in_dim, self.hidden, self.channel
        other.W1, other.b1 = self.W1.copy(), self.b1.copy()
        other.W2, other.b2 = self.W2.copy(), self.b2.copy()
        return other

    def _squash(self, z):
        if self.channel.squash == "tanh":
            return np.tanh(z)
        return 1.0 / (1.0 + np.exp(-z))

    def _forward(self, X):
        z1 = X @ self.W1 + self.b1
        h = np.maximum(z1, 0.0)
        q = self._squash(h @ self.W2 + self.b2)
        return z1, h, q

    def raw_quantiles(self, X: np.ndarray) -> np.ndarray:
        """Squashed but unsorted outputs, one row per feature row."""
        return self._forward(np.atleast_2d(X))[2]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Sorted (non-crossing) quantile rows."""
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise QaffError(f"feature dim {X.shape} does not match head input {self.in_dim}")
        return np.sort(self.raw_quantiles(X), axis=1)

    def trajectory(self, example) -> np.ndarray:
        return self.predict(np.asarray(example.features, dtype=np.float64))

    def quantile_sets(self, X: np.ndarray) -> list[QuantileSet]:
        return [QuantileSet(tuple(row), self.channel.name) for row in self.predict(X)]

    def backward(self, X, dq, cache):
        """Gradients of a loss with dL/dq given; cache from _forward."""
        z1, h, q = cache
        if self.channel.squash == "tanh":
            dz2 = dq * (1.0 - q * q)
        else:
            dz2 = dq * q * (1.0 - q)
        gW2 = h.T @ dz2
        gb2 = dz2.sum(axis=0)
        dh = dz2 @ self.W2.T
        dz1 = dh * (z1 > 0)
        gW1 = X.T @ dz1
        gb1 = dz1.sum(axis=0)
        return [gW1, gb1, gW2, gb2]


def loss_and_grad(head: QuantileHead, features: np.ndarray, score: float,
                  huber_k: float = 0.001):
    """Monte-Carlo loss for one example and exact parameter gradients."""
    X = np.asarray(features, dtype=np.float64)
    cache = head._forward(X)
    q = cache[2]
    if not np.isfinite(q).all():
        raise TrainingDiverged("non-finite activations in forward pass")
    y = np.full(X.shape[0], float(score))
    loss, dq = _kernels.mc_loss_grad(q, y, LEVELS, huber_k)
    return loss, head.backward(X, dq, cache)


@dataclass
class _Packed:
    X: np.ndarray
    y: np.ndarray
    bounds: np.ndarray  # sentence i occupies rows bounds[i]:bounds[i+1]


def _pack(dataset, channel_name: str) -> _Packed:
    mats = [np.asarray(ex.features, dtype=np.float64) for ex in dataset]
    ys = [float(ex.scores[channel_name]) for ex in dataset]
    bounds = np.zeros(len(dataset) + 1, dtype=np.int64)
    for i, m in enumerate(mats):
        bounds[i + 1] = bounds[i] + m.shape[0]
    X = np.concatenate(mats, axis=0)
    y = np.concatenate([np.full(m.shape[0], s) for m, s in zip(mats, ys)])
    return _Packed(X, y, bounds)


def _batch_rows(packed: _Packed, sentence_ids):
    """Concatenated row indices for the sentences plus a sentence-end mask."""
    ranges = [np.arange(packed.bounds[s], packed.bounds[s + 1]) for s in sentence_ids]
    rows = np.concatenate(ranges)
    is_last = np.zeros(len(rows), dtype=bool)
    end = 0
    for r in ranges:
        end += len(r)
        is_last[end - 1] = True
    return rows, is_last


def _batch_loss(head, packed: _Packed, rows, is_last, method: str, k: float,
                with_grad: bool):
    X = packed.X[rows]
    cache = head._forward(X)
    q = cache[2]
    if not np.isfinite(q).all():
        raise TrainingDiverged("non-finite activations during training")
    if method == "mc":
        loss, dq = _kernels.mc_loss_grad(q, packed.y[rows], LEVELS, k)
    else:
        # Bootstrap targets: the following position's detached prediction, or
        # the end score replicated over the ten target slots at sentence ends.
        targets = np.empty_like(q)
        targets[:-1] = q[1:]
        targets[is_last] = packed.y[rows[is_last], None]
        loss, dq = _kernels.td0_loss_grad(q, targets, LEVELS, k)
    if not with_grad:
        return loss, None
    return loss, head.backward(X, dq, cache)


def _validation_loss(head, packed: _Packed, method: str, k: float, n_sentences: int):
    rows, is_last = _batch_rows(packed, range(len(packed.bounds) - 1))
    loss, _ = _batch_loss(head, packed, rows, is_last, method, k, with_grad=False)
    return loss / max(n_sentences, 1)


def train(dataset, config: TrainConfig, channel: str = "valence",
          validation=None) -> tuple[QuantileHead, TrainLog]:
    """Adam on the chosen loss with the plateau-halving schedule.

    Deterministic given (seed, config, data). Validation loss is reported per
    sentence; the learning rate halves after `plateau_patience` consecutive
    epochs without a `plateau_min_improve` improvement over the best.
    """
    if not dataset:
        raise ConfigError("dataset must be nonempty")
    ch = get_channel(channel)
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))

    if validation is None:
        n_val = max(1, int(len(dataset) * config.val_fraction))
        perm = rng.permutation(len(dataset))
        val_idx = set(perm[:n_val].tolist())
        validation = [dataset[i] for i in sorted(val_idx)]
        dataset = [dataset[i] for i in range(len(dataset)) if i not in val_idx]

    packed = _pack(dataset, ch.name)
    vpacked = _pack(validation, ch.name)
    head = QuantileHead(packed.X.shape[1], ch, seed=config.seed)

    params = head.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    lr = config.lr
    best_val = None
    plateau = 0
    log = TrainLog()
    last_finite = head.copy()
    n_sent = len(dataset)

    try:
        for _epoch in range(config.epochs):
            order = rng.permutation(n_sent)
            epoch_loss = 0.0
            for start in range(0, n_sent, config.batch_size):
                sel = order[start:start + config.batch_size]
                rows, is_last = _batch_rows(packed, sel)
                loss, grads = _batch_loss(head, packed, rows, is_last, config.method,
                                          config.huber_k, with_grad=True)
                if not np.isfinite(loss):
                    raise TrainingDiverged("training loss became non-finite")
                epoch_loss += loss
                step += 1
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= beta1
                    mi += (1 - beta1) * g
                    vi *= beta2
                    vi += (1 - beta2) * g * g
                    p -= lr * (mi / (1 - beta1 ** step)) / (np.sqrt(vi / (1 - beta2 ** step)) + eps)
            last_finite = head.copy()
            val_loss = _validation_loss(head, vpacked, config.method, config.huber_k,
                                        len(validation))
            log.train_losses.append(epoch_loss / max(n_sent, 1))
            log.val_losses.append(val_loss)
            log.lrs.append(lr)
            if best_val is not None and val_loss > best_val - config.plateau_min_improve:
                plateau += 1
                if plateau >= config.plateau_patience:
                    lr *= 0.5
                    plateau = 0
            else:
                plateau = 0
            best_val = val_loss if best_val is None else min(best_val, val_loss)
    except TrainingDiverged as exc:
        exc.last_head = last_finite
        raise
    return head, log


def train_mc(dataset, config: TrainConfig, channel: str = "valence", validation=None):
    return train(dataset, replace(config, method="mc"), channel, validation)


def train_td0(dataset, config: TrainConfig, channel: str = "valence", validation=None):
    return train(dataset, replace(config, method="td0"), channel, validation)


# ---------------------------------------------------------------- checkpoint
# Layout: magic, u32 version, u32 in_dim, u32 hidden, u32 out, u8 channel-name
# length + UTF-8 name, u8 squash tag (0 tanh, 1 sigmoid), ten f64 levels, then
# W1, b1, W2, b2 as little-endian f64 in that order.

def save_head(path, head: QuantileHead) -> None:
    with open(path, "wb") as fh:
        fh.write(HEAD_MAGIC)
        fh.write(struct.pack("<IIII", 1, head.in_dim, head.hidden, len(LEVELS)))
        name = head.channel.name.encode("utf-8")
        fh.write(struct.pack("<B", len(name)))
        fh.write(name)
        fh.write(struct.pack("<B", 0 if head.channel.squash == "tanh" else 1))
        fh.write(np.asarray(LEVELS, dtype="<f8").tobytes())
        for p in head.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_head(path) -> QuantileHead:
    with open(path, "rb") as fh:
        if fh.read(7) != HEAD_MAGIC:
            raise InterchangeError("not a quantile-head checkpoint")
        version, in_dim, hidden, n_out = struct.unpack("<IIII", fh.read(16))
        if version != 1 or n_out != len(LEVELS):
            raise InterchangeError("unsupported checkpoint layout")
        (nlen,) = struct.unpack("<B", fh.read(1))
        name = fh.read(nlen).decode("utf-8")
        (squash_tag,) = struct.unpack("<B", fh.read(1))
        levels = np.frombuffer(fh.read(8 * n_out), dtype="<f8")
        if not np.allclose(levels, LEVELS):
            raise InterchangeError("checkpoint uses different quantile levels")
        ch = get_channel(name)
        expected = "tanh" if squash_tag == 0 else "sigmoid"
        if ch.squash != expected:
            ch = Channel(name, -1.0 if expected == "tanh" else 0.0, 1.0, expected)
        head = QuantileHead.__new__(QuantileHead)
        head.in_dim, head.hidden, head.channel = in_dim, hidden, ch

        def read_arr(shape):
            n = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()

        head.W1 = read_arr((in_dim, hidden))
        head.b1 = read_arr((hidden,))
        head.W2 = read_arr((hidden, n_out))
        head.b2 = read_arr((n_out,))
    return head
