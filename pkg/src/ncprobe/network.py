"""Feedforward ReLU networks: encoder, optional projection head, linear classifier.

Layers are numbered from 1 in the public API (layer ``l`` produces the
feature ``h^l``); Python lists are 0-based, so ``net.layers[l - 1]`` and
``activations[l - 1]`` refer to layer ``l``.
"""
import enum
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    InvalidSpec,
    LabelOutOfRange,
    MaskLengthMismatch,
    TruncatedFile,
    UnsupportedVersion,
)

NET_MAGIC = b"NET1"
NET_VERSION = 1


class Role(enum.IntEnum):
    ENCODER = 0
    PROJECTION = 1
    CLASSIFIER = 2


class LossKind(str, enum.Enum):
    CROSS_ENTROPY = "ce"
    MSE = "mse"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        aliases = {"ce": cls.CROSS_ENTROPY, "crossentropy": cls.CROSS_ENTROPY, "cross_entropy": cls.CROSS_ENTROPY,
                   "mse": cls.MSE, "meansquarederror": cls.MSE, "mean_squared_error": cls.MSE}
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise InvalidSpec(f"unknown loss {value!r}") from None


@dataclass
class NetworkSpec:
    input_dim: int
    encoder_dims: list
    n_classes: int
    projection_dims: list = field(default_factory=list)
    seed: int = 0

    def validate(self):
        dims = [self.input_dim, *self.encoder_dims, *self.projection_dims, self.n_classes]
        if any(int(x) != x or x < 1 for x in dims):
            raise InvalidSpec(f"all dimensions must be positive integers, got {dims}")

    @property
    def n_layers(self) -> int:
        return len(self.encoder_dims) + len(self.projection_dims) + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        known = {"input_dim", "encoder_dims", "projection_dims", "n_classes", "seed"}
        extra = set(d) - known
        if extra:
            raise InvalidSpec(f"unknown network spec keys {sorted(extra)}")
        try:
            spec = cls(
                input_dim=int(d["input_dim"]),
                encoder_dims=[int(x) for x in d["encoder_dims"]],
                projection_dims=[int(x) for x in d.get("projection_dims", [])],
                n_classes=int(d["n_classes"]),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"bad network spec: {exc}") from None
        spec.validate()
        return spec


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    role: Role

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def n_params(self) -> int:
        return self.weight.size + self.bias.size

    def copy(self) -> "Layer":
        return Layer(self.weight.copy(), self.bias.copy(), self.role)


@dataclass
class Network:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise InvalidSpec("network needs at least a classifier layer")
        roles = [ly.role for ly in self.layers]
        if roles[-1] != Role.CLASSIFIER or roles.count(Role.CLASSIFIER) != 1:
            raise InvalidSpec("exactly one classifier layer, placed last")
        if any(a > b for a, b in zip(roles, roles[1:])):
            raise InvalidSpec("encoder layers must precede projection layers")
        for i, ly in enumerate(self.layers):
            if ly.bias.shape != (ly.out_dim,):
                raise InvalidSpec(f"layer {i + 1}: bias shape {ly.bias.shape} for out_dim {ly.out_dim}")
        for i in range(1, len(self.layers) - 1):
            if self.layers[i].in_dim != self.layers[i - 1].out_dim:
                raise InvalidSpec(f"layer {i + 1} input {self.layers[i].in_dim} != layer {i} output")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    @property
    def classifier(self) -> Layer:
        return self.layers[-1]

    @property
    def encoder_depth(self) -> int:
        return sum(ly.role == Role.ENCODER for ly in self.layers)

    @property
    def projection_depth(self) -> int:
        return sum(ly.role == Role.PROJECTION for ly in self.layers)

    @property
    def widths(self) -> list:
        """Output width of every non-classifier layer, in order."""
        return [ly.out_dim for ly in self.layers[:-1]]

    def copy(self) -> "Network":
        return Network([ly.copy() for ly in self.layers])

    def same_weights(self, other: "Network") -> bool:
        return len(self.layers) == len(other.layers) and all(
            a.role == b.role
            and a.weight.shape == b.weight.shape
            and a.weight.tobytes() == b.weight.tobytes()
            and a.bias.tobytes() == b.bias.tobytes()
            for a, b in zip(self.layers, other.layers)
        )


@dataclass
class GradientSet:
    weights: list
    biases: list

    @classmethod
    def zeros_like(cls, net: Network) -> "GradientSet":
        return cls([np.zeros_like(ly.weight) for ly in net.layers], [np.zeros_like(ly.bias) for ly in net.layers])


def _he_layer(rng, in_dim, out_dim, role):
    w = rng.standard_normal((out_dim, in_dim)) * np.sqrt(2.0 / in_dim)
    return Layer(w, np.zeros(out_dim), role)


def init_network(spec: NetworkSpec) -> Network:
    """He-normal weights (variance 2 / fan_in), zero biases, from ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    layers = []
    prev = spec.input_dim
    for w in spec.encoder_dims:
        layers.append(_he_layer(rng, prev, w, Role.ENCODER))
        prev = w
    for w in spec.projection_dims:
        layers.append(_he_layer(rng, prev, w, Role.PROJECTION))
        prev = w
    layers.append(_he_layer(rng, prev, spec.n_classes, Role.CLASSIFIER))
    return Network(layers)


def fresh_classifier(in_dim: int, n_classes: int, seed: int) -> Layer:
    return _he_layer(np.random.default_rng([seed, 0xC1A5]), in_dim, n_classes, Role.CLASSIFIER)


def encoder_with_classifier(net: Network, n_classes: int, seed: int, in_dim=None) -> Network:
    """Copy of ``net``'s encoder layers topped with a newly initialized classifier.

    Projection and classifier layers are dropped. ``in_dim`` overrides the
    classifier's input width (used when a skip connection widens the feature).
    """
    enc = [ly.copy() for ly in net.layers if ly.role == Role.ENCODER]
    feat = enc[-1].out_dim if enc else net.input_dim
    return Network(enc + [fresh_classifier(in_dim or feat, n_classes, seed)])


def strip_projection_head(net: Network, seed: int = 0) -> Network:
    """Drop the projection head and attach a fresh classifier with the same class count."""
    return encoder_with_classifier(net, net.n_classes, seed)


def scl_combine(h_ft, h_pen):
    """Add two feature batches after zero-padding the narrower one at the tail."""
    h_ft = np.asarray(h_ft, dtype=np.float64)
    h_pen = np.asarray(h_pen, dtype=np.float64)
    a, b = h_ft.shape[-1], h_pen.shape[-1]
    if a == b:
        return h_ft + h_pen
    if a < b:
        h_ft, h_pen = h_pen, h_ft
    out = h_ft.copy()
    out[..., : h_pen.shape[-1]] += h_pen
    return out


def _check_skip(net: Network, skip_from):
    if skip_from is None:
        return None
    if not 1 <= skip_from <= net.n_layers - 1:
        raise DimensionMismatch(f"skip source layer {skip_from} outside 1..{net.n_layers - 1}")
    return skip_from - 1


def _check_batch(net: Network, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionMismatch(f"batch shape {x.shape} does not match input_dim {net.input_dim}")
    return x


def classifier_input(net: Network, activations, skip_from=None):
    s = _check_skip(net, skip_from)
    pen = activations[-1] if activations else None
    if s is None:
        return pen
    return scl_combine(activations[s], pen)


def forward_prefix(net: Network, x, upto: int):
    """Post-ReLU outputs of layers ``1..upto`` (all, in order)."""
    h = _check_batch(net, x)
    acts = []
    for ly in net.layers[:upto]:
        h = np.maximum(h @ ly.weight.T + ly.bias, 0.0)
        acts.append(h)
    return acts


def forward(net: Network, x, skip_from=None):
    """Return ``(logits, activations)``; ``activations[l - 1]`` is ``h^l`` for l < L.

    With ``skip_from=l`` the classifier reads ``scl_combine(h^l, h^{L-1})``.
    """
    x = _check_batch(net, x)
    acts = forward_prefix(net, x, net.n_layers - 1)
    feat = classifier_input(net, acts, skip_from) if acts else x
    cls = net.classifier
    if feat.shape[1] != cls.in_dim:
        raise DimensionMismatch(f"classifier expects {cls.in_dim} inputs, feature has {feat.shape[1]}")
    return feat @ cls.weight.T + cls.bias, acts


def _loss_and_dlogits(logits, labels, loss: LossKind):
    b, k = logits.shape
    if loss == LossKind.CROSS_ENTROPY:
        z = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.sum(np.exp(z), axis=1))
        logp = z - lse[:, None]
        value = -float(np.mean(logp[np.arange(b), labels]))
        d = np.exp(logp)
        d[np.arange(b), labels] -= 1.0
        return value, d / b
    onehot = np.zeros((b, k))
    onehot[np.arange(b), labels] = 1.0
    r = logits - onehot
    return 0.5 * float(np.mean(np.sum(r * r, axis=1))), r / b


def _check_mask(net: Network, mask):
    if mask is None:
        return [True] * net.n_layers
    mask = [bool(m) for m in mask]
    if len(mask) != net.n_layers:
        raise MaskLengthMismatch(f"mask has {len(mask)} entries for {net.n_layers} layers")
    return mask


def _check_labels(net, labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionMismatch(f"{labels.shape} labels for {n} samples")
    labels = labels.astype(np.int64)
    if n and (labels.min() < 0 or labels.max() >= net.n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {net.n_classes})")
    return labels


def loss_value(net: Network, x, labels, loss=LossKind.CROSS_ENTROPY, skip_from=None) -> float:
    x = _check_batch(net, x)
    labels = _check_labels(net, labels, x.shape[0])
    logits, _ = forward(net, x, skip_from)
    return _loss_and_dlogits(logits, labels, LossKind.parse(loss))[0]


def loss_and_grads(net: Network, x, labels, loss=LossKind.CROSS_ENTROPY, trainable_mask=None, skip_from=None):
    """Mean loss over the batch and its exact gradient by backpropagation.

    Cross-entropy is ``-log softmax(z)[y]``; MSE is ``0.5 * ||z - onehot(y)||^2``.
    Layers masked out get zero gradients, and backpropagation stops below the
    lowest trainable layer.
    """
    x = _check_batch(net, x)
    labels = _check_labels(net, labels, x.shape[0])
    mask = _check_mask(net, trainable_mask)
    s = _check_skip(net, skip_from)
    loss = LossKind.parse(loss)
    n = net.n_layers
    logits, acts = forward(net, x, skip_from)
    value, dz = _loss_and_dlogits(logits, labels, loss)
    grads = GradientSet.zeros_like(net)
    if not any(mask):
        return value, grads
    lowest = mask.index(True)
    feat = classifier_input(net, acts, skip_from) if acts else x
    if mask[-1]:
        grads.weights[-1] = dz.T @ feat
        grads.biases[-1] = dz.sum(axis=0)
    if lowest == n - 1:
        return value, grads
    dfeat = dz @ net.classifier.weight
    da = dfeat[:, : acts[-1].shape[1]]
    skip_grad = dfeat[:, : acts[s].shape[1]] if s is not None else None
    for i in range(n - 2, lowest - 1, -1):
        if s == i:
            da = da + skip_grad
        dpre = da * (acts[i] > 0.0)
        if mask[i]:
            inp = acts[i - 1] if i > 0 else x
            grads.weights[i] = dpre.T @ inp
            grads.biases[i] = dpre.sum(axis=0)
        if i > lowest:
            da = dpre @ net.layers[i].weight
    return value, grads


def count_parameters(net: Network, trainable_mask=None):
    """``(trainable, total, percentage)`` counting weights and biases."""
    mask = _check_mask(net, trainable_mask)
    total = sum(ly.n_params for ly in net.layers)
    trainable = sum(ly.n_params for ly, m in zip(net.layers, mask) if m)
    return trainable, total, 100.0 * trainable / total


# NET1 checkpoints -------------------------------------------------------

_NET_HEADER = struct.Struct("<4sII")
_LAYER_HEADER = struct.Struct("<III")


def net_to_bytes(net: Network) -> bytes:
    parts = [_NET_HEADER.pack(NET_MAGIC, NET_VERSION, net.n_layers)]
    for ly in net.layers:
        parts.append(_LAYER_HEADER.pack(int(ly.role), ly.out_dim, ly.in_dim))
        parts.append(np.ascontiguousarray(ly.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(ly.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def net_from_bytes(buf: bytes) -> Network:
    if len(buf) < 4 or buf[:4] != NET_MAGIC:
        raise BadMagic(f"expected magic {NET_MAGIC!r}, got {bytes(buf[:4])!r}")
    if len(buf) < _NET_HEADER.size:
        raise TruncatedFile("header truncated")
    _, version, n_layers = _NET_HEADER.unpack_from(buf)
    if version != NET_VERSION:
        raise UnsupportedVersion(f"NET version {version}")
    off = _NET_HEADER.size
    layers = []
    for i in range(n_layers):
        if len(buf) < off + _LAYER_HEADER.size:
            raise TruncatedFile(f"layer {i + 1} header truncated")
        role, out_dim, in_dim = _LAYER_HEADER.unpack_from(buf, off)
        off += _LAYER_HEADER.size
        need = 8 * (out_dim * in_dim + out_dim)
        if len(buf) < off + need:
            raise TruncatedFile(f"layer {i + 1} payload truncated")
        w = np.frombuffer(buf, dtype="<f8", count=out_dim * in_dim, offset=off).reshape(out_dim, in_dim)
        off += 8 * out_dim * in_dim
        b = np.frombuffer(buf, dtype="<f8", count=out_dim, offset=off)
        off += 8 * out_dim
        try:
            role = Role(role)
        except ValueError:
            raise InvalidSpec(f"layer {i + 1}: unknown role {role}") from None
        layers.append(Layer(w.astype(np.float64), b.astype(np.float64), role))
    if off != len(buf):
        raise InvalidSpec(f"{len(buf) - off} trailing bytes after last layer")
    return Network(layers)


def save_net(net: Network, path) -> None:
    Path(path).write_bytes(net_to_bytes(net))


def load_net(path) -> Network:
    return net_from_bytes(Path(path).read_bytes())
