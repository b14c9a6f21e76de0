"""SGD with heavy-ball momentum and weight decay under cosine annealing.

The learning rate changes once per epoch. Mini-batch order comes from a
generator seeded by ``TrainConfig.seed`` and independent of weight init.
"""
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .core import DatasetSplit, FeatureMatrix
from .errors import DimensionMismatch, InvalidSpec, MaskLengthMismatch, OutOfRange, ShapeMismatch
from .network import GradientSet, LossKind, Network, _loss_and_dlogits, forward, forward_prefix, loss_and_grads

SHUFFLE_STREAM = 0x5EED


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr_max: float = 1e-1
    lr_min: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    loss: LossKind = LossKind.CROSS_ENTROPY
    seed: int = 0

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidSpec("epochs must be an integer >= 1")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidSpec("batch_size must be an integer >= 1")
        if not (0.0 <= self.lr_min <= self.lr_max):
            raise InvalidSpec("need 0 <= lr_min <= lr_max")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidSpec("momentum must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise InvalidSpec("weight_decay must be >= 0")
        self.epochs = int(self.epochs)
        self.batch_size = int(self.batch_size)
        self.seed = int(self.seed)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_max": self.lr_max,
            "lr_min": self.lr_min,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "loss": self.loss.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise InvalidSpec(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig.from_dict({**self.to_dict(), **changes})


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    lr: list = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.lr)

    def rows(self):
        for t, (loss, acc, lr) in enumerate(zip(self.loss, self.accuracy, self.lr)):
            yield t, loss, acc, lr


def cosine_lr(t, total, lr_max, lr_min) -> float:
    """Cosine-annealed rate at epoch ``t`` of ``total``.

    Written as a convex combination so both endpoints come out exactly.
    """
    if total < 1 or not (0 <= t <= total):
        raise OutOfRange(f"need 0 <= t <= T and T >= 1, got t={t}, T={total}")
    w = 0.5 * (1.0 + math.cos(math.pi * t / total))
    return lr_max * w + lr_min * (1.0 - w)


def sgd_step(net: Network, grads, velocity, lr, momentum, weight_decay, trainable_mask=None):
    """One heavy-ball step, in place on ``net`` and ``velocity``.

    For trainable layers: ``g += wd * w; v = mu * v + g; w -= lr * v``.
    Frozen layers and their velocity are left untouched.
    """
    n = net.n_layers
    mask = [True] * n if trainable_mask is None else [bool(m) for m in trainable_mask]
    if len(mask) != n:
        raise MaskLengthMismatch(f"mask has {len(mask)} entries for {n} layers")
    if len(grads.weights) != n or len(velocity.weights) != n:
        raise ShapeMismatch("gradient/velocity layer count differs from network")
    for i, ly in enumerate(net.layers):
        if not mask[i]:
            continue
        for p, g, v in ((ly.weight, grads.weights[i], velocity.weights[i]), (ly.bias, grads.biases[i], velocity.biases[i])):
            if g.shape != p.shape or v.shape != p.shape:
                raise ShapeMismatch(f"layer {i + 1}: parameter {p.shape}, grad {g.shape}, velocity {v.shape}")
            step = g + weight_decay * p if weight_decay else g
            v *= momentum
            v += step
            p -= lr * v
    return net, velocity


def _as_matrix(data) -> FeatureMatrix:
    return data.train if isinstance(data, DatasetSplit) else data


def predict(net: Network, x, skip_from=None) -> np.ndarray:
    """Class predictions; ties go to the smallest class index."""
    logits, _ = forward(net, x, skip_from)
    return np.argmax(logits, axis=1)


def train(net: Network, data, config: TrainConfig, trainable_mask=None, skip_from=None):
    """Train a copy of ``net``; returns ``(trained_net, history)``.

    Layers below the lowest trainable one are frozen, so their outputs are
    computed once over the whole training set and reused for every batch.
    """
    fm = _as_matrix(data)
    if fm.d != net.input_dim:
        raise DimensionMismatch(f"data has d={fm.d}, network expects {net.input_dim}")
    if fm.n_classes != net.n_classes:
        raise DimensionMismatch(f"data has {fm.n_classes} classes, network outputs {net.n_classes}")
    n_layers = net.n_layers
    mask = [True] * n_layers if trainable_mask is None else [bool(m) for m in trainable_mask]
    if len(mask) != n_layers:
        raise MaskLengthMismatch(f"mask has {len(mask)} entries for {n_layers} layers")

    work = net.copy()
    first = mask.index(True) if any(mask) else n_layers - 1
    if skip_from is not None and skip_from - 1 < first:
        first = 0
    if first > 0:
        x = forward_prefix(work, fm.data, first)[-1]
    else:
        x = np.asarray(fm.data)
    tail = Network(work.layers[first:])
    tail_mask = mask[first:]
    tail_skip = None if skip_from is None else skip_from - first
    y = np.asarray(fm.labels)
    velocity = GradientSet.zeros_like(tail)
    shuffle = np.random.default_rng([config.seed, SHUFFLE_STREAM])
    hist = TrainHistory()
    n = x.shape[0]
    bs = config.batch_size
    for t in range(config.epochs):
        lr = cosine_lr(t, config.epochs, config.lr_max, config.lr_min)
        order = shuffle.permutation(n)
        if any(tail_mask):
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                _, grads = loss_and_grads(tail, x[idx], y[idx], config.loss, tail_mask, tail_skip)
                sgd_step(tail, grads, velocity, lr, config.momentum, config.weight_decay, tail_mask)
        logits, _ = forward(tail, x, tail_skip)
        loss, _ = _loss_and_dlogits(logits, y, config.loss)
        hist.loss.append(loss)
        hist.accuracy.append(float(np.mean(np.argmax(logits, axis=1) == y)))
        hist.lr.append(lr)
    return work, hist


def desk_config(seed: int = 0, **overrides) -> TrainConfig:
    """Small-model settings: the default optimizer with a halved peak rate and 100 epochs.

    A peak rate of 0.1 occasionally kills the 6-layer ReLU stacks used here
    (no normalization layers), so the desk default starts at 0.05.
    """
    base = dict(epochs=100, batch_size=64, lr_max=0.05, lr_min=1e-4, momentum=0.9,
                weight_decay=1e-4, loss=LossKind.CROSS_ENTROPY, seed=seed)
    base.update(overrides)
    return TrainConfig(**base)
