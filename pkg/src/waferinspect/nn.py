"""From-scratch CNN: explicit forward/backward layers and a seeded trainer.

Tensors are plain numpy arrays, (C, H, W) per sample and (N, C, H, W)
batched, float64 throughout; checkpoints store parameters as float32.
The network is three conv blocks (two 3x3 stride-1 convolutions, a 2x2
stride-2 max pool, dropout) followed by a dense unit (dense, dropout,
dense). Convolutions and pooling run on the compiled kernel backend when
it is available.
"""

from __future__ import annotations

import csv
import enum
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DivergenceDetected, EmptyClass, IoFailure, ShapeMismatch


class Padding(enum.Enum):
    SAME = 1  # zero padding 1, preserves H and W
    VALID = 0  # no padding, shrinks by 2 per axis


class Mode(enum.Enum):
    TRAIN = "train"
    INFER = "infer"


def _batched(x):
    """Normalize (C,H,W) to (1,C,H,W); remember whether to squeeze."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeMismatch(f"expected 3-D or 4-D tensor, got shape {x.shape}")


def conv2d(x, conv_kernels, bias, padding: Padding = Padding.SAME):
    """3x3 stride-1 cross-correlation over (C,H,W) or (N,C,H,W) input."""
    xb, squeeze = _batched(x)
    w = np.asarray(conv_kernels, dtype=np.float64)
    b = None if bias is None else np.asarray(bias, dtype=np.float64)
    out = kernels.conv2d_forward(xb, w, b, padding.value)
    return out[0] if squeeze else out


def maxpool2x2(x):
    """2x2 stride-2 max pool; odd inputs are edge-replicated to even first.

    Returns (out, argmax); argmax feeds the backward scatter.
    """
    xb, squeeze = _batched(x)
    pad_h = xb.shape[2] % 2
    pad_w = xb.shape[3] % 2
    if pad_h or pad_w:
        xb = np.pad(xb, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    out, arg = kernels.maxpool2x2_forward(xb)
    return (out[0], arg[0]) if squeeze else (out, arg)


def dense(x, weights, bias):
    """Affine map W.x + b for a flat vector or a batch of them."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != w.shape[1]:
            raise ShapeMismatch(f"dense expects {w.shape[1]} features, got {x.shape[0]}")
        return w @ x + b
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"dense expects (n, {w.shape[1]}), got {x.shape}")
    return x @ w.T + b


def dropout(x, rate: float, mode: Mode, seed: int):
    """Inverted dropout: zero with probability rate, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if mode == Mode.INFER or rate == 0.0:
        return x.copy()
    mask = np.random.default_rng(seed).random(x.shape) >= rate
    return x * mask / (1.0 - rate)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, target: int):
    """Stable softmax cross-entropy for one logit vector."""
    probs = softmax(logits)
    loss = -np.log(max(probs[target], 1e-300))
    return float(loss), probs


def _softmax_xent_batch(logits, targets):
    """(mean loss, probs, dlogits) for a batch; dlogits is d(mean loss)/dz."""
    probs = softmax(logits)
    n = logits.shape[0]
    picked = probs[np.arange(n), targets]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    return loss, probs, dlogits / n


def _kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2D:
    def __init__(self, c_in: int, c_out: int, padding: Padding, rng):
        self.padding = padding
        self.params = {"w": _kaiming_uniform(rng, (c_out, c_in, 3, 3), c_in * 9),
                       "b": np.zeros(c_out)}
        self.grads = {}
        self._x = None

    def forward(self, x, mode: Mode, rng=None):
        self._x = x
        return kernels.conv2d_forward(x, self.params["w"], self.params["b"],
                                      self.padding.value)

    def backward(self, dy):
        dw, db = kernels.conv2d_backward_weights(self._x, dy, self.padding.value)
        self.grads = {"w": dw, "b": db}
        return kernels.conv2d_backward_input(dy, self.params["w"], self.padding.value)


class ReLU:
    params: dict = {}
    grads: dict = {}

    def forward(self, x, mode: Mode, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class MaxPool2x2:
    params: dict = {}
    grads: dict = {}

    def forward(self, x, mode: Mode, rng=None):
        out, self._arg = kernels.maxpool2x2_forward(x)
        return out

    def backward(self, dy):
        return kernels.maxpool2x2_backward(dy, self._arg)


class Dropout:
    params: dict = {}
    grads: dict = {}

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._scale = None

    def forward(self, x, mode: Mode, rng=None):
        if mode == Mode.INFER or self.rate == 0.0:
            self._scale = None
            return x
        mask = rng.random(x.shape) >= self.rate
        self._scale = mask / (1.0 - self.rate)
        return x * self._scale

    def backward(self, dy):
        return dy if self._scale is None else dy * self._scale


class Flatten:
    params: dict = {}
    grads: dict = {}

    def forward(self, x, mode: Mode, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense:
    def __init__(self, n_in: int, n_out: int, rng):
        self.params = {"w": _kaiming_uniform(rng, (n_out, n_in), n_in),
                       "b": np.zeros(n_out)}
        self.grads = {}
        self._x = None

    def forward(self, x, mode: Mode, rng=None):
        self._x = x
        return x @ self.params["w"].T + self.params["b"]

    def backward(self, dy):
        self.grads = {"w": dy.T @ self._x, "b": dy.sum(axis=0)}
        return dy @ self.params["w"]


@dataclass(frozen=True)
class NetworkConfig:
    """Three conv blocks plus the dense classifier unit."""

    block_widths: tuple[int, int, int] = (16, 32, 64)
    conv_dropout: float = 0.25
    dense1_units: int = 128
    dense_dropout: float = 0.5
    n_classes: int = 3
    input_hw: tuple[int, int] = (64, 64)
    in_channels: int = 1

    def __post_init__(self):
        if len(self.block_widths) != 3:
            raise ValueError("the architecture has exactly three conv blocks")
        if any(w < 1 for w in self.block_widths):
            raise ValueError("block widths must be positive")
        if not (0.0 <= self.conv_dropout < 1.0 and 0.0 <= self.dense_dropout < 1.0):
            raise ValueError("dropout rates must be in [0, 1)")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        h, w = self.input_hw
        if h % 8 or w % 8 or h < 8 or w < 8:
            raise ValueError("input spatial size must be a positive multiple of 8")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("block_widths", "conv_dropout", "dense1_units", "dense_dropout",
              "n_classes", "input_hw", "in_channels")}
        d["block_widths"] = list(d["block_widths"])
        d["input_hw"] = list(d["input_hw"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["block_widths"] = tuple(d["block_widths"])
        d["input_hw"] = tuple(d["input_hw"])
        return cls(**d)


class Network:
    """The layer stack with parameter plumbing for the optimizer."""

    def __init__(self, config: NetworkConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng((seed, 0))
        layers = []
        c_prev = config.in_channels
        for width in config.block_widths:
            layers.append(Conv2D(c_prev, width, Padding.SAME, rng))
            layers.append(ReLU())
            layers.append(Conv2D(width, width, Padding.SAME, rng))
            layers.append(ReLU())
            layers.append(MaxPool2x2())
            layers.append(Dropout(config.conv_dropout))
            c_prev = width
        h, w = config.input_hw
        flat = config.block_widths[-1] * (h // 8) * (w // 8)
        layers.append(Flatten())
        layers.append(Dense(flat, config.dense1_units, rng))
        layers.append(ReLU())
        layers.append(Dropout(config.dense_dropout))
        layers.append(Dense(config.dense1_units, config.n_classes, rng))
        self.layers = layers

    def forward(self, x, mode: Mode, rng=None):
        h, w = self.config.input_hw
        if x.ndim != 4 or x.shape[1] != self.config.in_channels or x.shape[2:] != (h, w):
            raise ShapeMismatch(
                f"expected (n, {self.config.in_channels}, {h}, {w}), got {x.shape}")
        out = x
        for layer in self.layers:
            out = layer.forward(out, mode, rng)
        return out

    def backward(self, dlogits):
        grad = dlogits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        """(layer_index, name, array) triples in a fixed order."""
        out = []
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                out.append((i, name, layer.params[name]))
        return out

    def get_state(self):
        return [(i, n, a.copy()) for i, n, a in self.parameters()]

    def set_state(self, state):
        for i, name, arr in state:
            self.layers[i].params[name] = arr.copy()


def predict(net: Network, x):
    """(label indices, probabilities); single sample in, scalars out."""
    xb, squeeze = _batched(x)
    probs = softmax(net.forward(xb, Mode.INFER))
    labels = probs.argmax(axis=1)
    if squeeze:
        return int(labels[0]), probs[0]
    return labels, probs


def predict_batched(net: Network, x, batch_size: int = 256):
    """predict over a large set in chunks; returns (labels, probs)."""
    labels, probs = [], []
    for i in range(0, len(x), batch_size):
        lab, pr = predict(net, x[i:i + batch_size])
        labels.append(lab)
        probs.append(pr)
    return np.concatenate(labels), np.concatenate(probs)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    patience: int = 10  # 0 disables early stopping
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 0:
            raise ValueError("batch_size and epochs must be >= 1, patience >= 0")


@dataclass
class LabeledTensors:
    """A split: x is (N, C, H, W) images or (N, d) features, float64;
    y is (N,) integer labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim not in (2, 4) or self.y.ndim != 1 or len(self.x) != len(self.y):
            raise ShapeMismatch(
                f"need (N,C,H,W) or (N,d) tensors with N labels, got {self.x.shape}, {self.y.shape}")

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_acc: float
    val_acc: float
    loss: float


class _SGD:
    def __init__(self, cfg: TrainConfig):
        self.lr = cfg.learning_rate

    def step(self, net: Network):
        for i, name, p in net.parameters():
            p -= self.lr * net.layers[i].grads[name]


class _Adam:
    def __init__(self, cfg: TrainConfig):
        self.lr = cfg.learning_rate
        self.b1, self.b2 = cfg.beta1, cfg.beta2
        self.eps = 1e-8
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, net: Network):
        self.t += 1
        for i, name, p in net.parameters():
            g = net.layers[i].grads[name]
            key = (i, name)
            m = self.m.setdefault(key, np.zeros_like(p))
            v = self.v.setdefault(key, np.zeros_like(p))
            m += (1.0 - self.b1) * (g - m)
            v += (1.0 - self.b2) * (g * g - v)
            mhat = m / (1.0 - self.b1 ** self.t)
            vhat = v / (1.0 - self.b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _accuracy_of(net, data: LabeledTensors, batch_size: int) -> float:
    hits = 0
    for i in range(0, len(data), batch_size):
        logits = net.forward(data.x[i:i + batch_size], Mode.INFER)
        hits += int((logits.argmax(axis=1) == data.y[i:i + batch_size]).sum())
    return hits / len(data)


def train(net, train_data: LabeledTensors, val_data: LabeledTensors,
          cfg: TrainConfig) -> list[EpochStats]:
    """Mini-batch descent on softmax cross-entropy, deterministic per seed.

    Tracks per-epoch accuracies, keeps the best-validation parameters,
    and stops early when validation accuracy stalls for `patience` epochs.
    net is any layer stack with the Network protocol (the MLP baseline
    reuses this loop).
    """
    for c in range(net.config.n_classes):
        if not (train_data.y == c).any():
            raise EmptyClass(f"training split has no examples of class {c}")
    if train_data.y.min() < 0 or train_data.y.max() >= net.config.n_classes:
        raise EmptyClass("training labels outside the configured class range")

    rng_shuffle = np.random.default_rng((cfg.seed, 0))
    rng_dropout = np.random.default_rng((cfg.seed, 1))
    opt = _Adam(cfg) if cfg.optimizer == "adam" else _SGD(cfg)
    n = len(train_data)
    history: list[EpochStats] = []
    best_state = net.get_state()
    best_val = -1.0
    best_epoch = 0

    for epoch in range(1, cfg.epochs + 1):
        perm = rng_shuffle.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            logits = net.forward(train_data.x[idx], Mode.TRAIN, rng_dropout)
            loss, _, dlogits = _softmax_xent_batch(logits, train_data.y[idx])
            if not np.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
            net.backward(dlogits)
            opt.step(net)
            losses.append(loss)
        stats = EpochStats(epoch=epoch,
                           train_acc=_accuracy_of(net, train_data, cfg.batch_size),
                           val_acc=_accuracy_of(net, val_data, cfg.batch_size),
                           loss=float(np.mean(losses)))
        history.append(stats)
        if stats.val_acc > best_val:
            best_val = stats.val_acc
            best_state = net.get_state()
            best_epoch = epoch
        elif cfg.patience and epoch - best_epoch >= cfg.patience:
            break
    net.set_state(best_state)
    return history


def write_metrics(history: list[EpochStats], path):
    """Per-epoch metrics as CSV: epoch,train_acc,val_acc,loss."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_acc", "val_acc", "loss"])
            for s in history:
                w.writerow([s.epoch, f"{s.train_acc:.6f}", f"{s.val_acc:.6f}",
                            f"{s.loss:.6f}"])
    except OSError as e:
        raise IoFailure(f"cannot write metrics {path}: {e}") from e


# Checkpoint layout (version 1, little endian):
#   magic b"WINN", u32 version, u32 header length, JSON header
#   (network config + ordered parameter records with shapes), then each
#   parameter's raw float32 bytes in header order.
_CKPT_MAGIC = b"WINN"
_CKPT_VERSION = 1


def save_checkpoint(net: Network, path):
    records = [{"layer": i, "name": n, "shape": list(p.shape)}
               for i, n, p in net.parameters()]
    header = json.dumps({"config": net.config.to_dict(), "params": records},
                        sort_keys=True).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC)
            fh.write(struct.pack("<II", _CKPT_VERSION, len(header)))
            fh.write(header)
            for _, _, p in net.parameters():
                fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path) -> Network:
    try:
        blob = open(path, "rb").read()
    except OSError as e:
        raise IoFailure(f"cannot read checkpoint {path}: {e}") from e
    if blob[:4] != _CKPT_MAGIC:
        raise IoFailure(f"not a checkpoint file: {path}")
    version, hlen = struct.unpack_from("<II", blob, 4)
    if version != _CKPT_VERSION:
        raise IoFailure(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[12:12 + hlen].decode())
        net = Network(NetworkConfig.from_dict(header["config"]))
        off = 12 + hlen
        for rec in header["params"]:
            shape = tuple(rec["shape"])
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
            off += count * 4
            net.layers[rec["layer"]].params[rec["name"]] = (
                arr.astype(np.float64).reshape(shape))
        if off != len(blob):
            raise IoFailure(f"checkpoint {path} has trailing bytes")
    except (KeyError, ValueError, IndexError) as e:
        raise IoFailure(f"corrupt checkpoint {path}: {e}") from e
    return net
