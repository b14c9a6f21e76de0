"""Partial fine-tuning strategies and layer-wise linear probing.

Strategies (layer indices are 1-based encoder layers):

* ``linear``: train only a fresh classifier on frozen features;
* ``layer``:  additionally fine-tune encoder layer ``l``;
* ``scl``:    like ``layer``, but the classifier reads ``h^l + h^{L-1}``
  (zero-padded to a common width) through a skip connection;
* ``full``:   train every layer.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from .core import DatasetSplit, FeatureMatrix
from .errors import CannotTargetClassifier, DimensionMismatch, InvalidSpec, LayerIndexOutOfRange, TargetTooLarge
from .metrics import layer_metrics, nc1
from .network import (
    Network,
    Role,
    count_parameters,
    encoder_with_classifier,
    forward,
    forward_prefix,
    fresh_classifier,
    scl_combine,
)
from .training import TrainConfig, TrainHistory, train


class Method(str, enum.Enum):
    LINEAR = "linear"
    LAYER = "layer"
    SCL = "scl"
    FULL = "full"


@dataclass(frozen=True)
class FineTuneMethod:
    kind: Method
    layer: int = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Method(self.kind))
        needs_layer = self.kind in (Method.LAYER, Method.SCL)
        if needs_layer and self.layer is None:
            raise InvalidSpec(f"method {self.kind.value!r} needs a layer index")
        if not needs_layer and self.layer is not None:
            raise InvalidSpec(f"method {self.kind.value!r} takes no layer index")

    @classmethod
    def linear_probe(cls):
        return cls(Method.LINEAR)

    @classmethod
    def layer_ft(cls, layer: int):
        return cls(Method.LAYER, layer)

    @classmethod
    def scl_ft(cls, layer: int):
        return cls(Method.SCL, layer)

    @classmethod
    def full_ft(cls):
        return cls(Method.FULL)

    def __str__(self):
        return self.kind.value if self.layer is None else f"{self.kind.value}({self.layer})"


@dataclass(frozen=True)
class FineTunePlan:
    method: FineTuneMethod
    trainable_mask: tuple
    uses_skip: bool = False
    skip_source_layer: int = None


def make_plan(net: Network, method: FineTuneMethod) -> FineTunePlan:
    n = net.n_layers
    if method.kind == Method.LINEAR:
        return FineTunePlan(method, tuple([False] * (n - 1) + [True]))
    if method.kind == Method.FULL:
        return FineTunePlan(method, tuple([True] * n))
    ell = method.layer
    if ell == n:
        raise CannotTargetClassifier(f"layer {ell} is the classifier; pick an encoder layer")
    if not 1 <= ell < n:
        raise LayerIndexOutOfRange(f"layer {ell} outside encoder range 1..{n - 1}")
    if net.layers[ell - 1].role != Role.ENCODER:
        raise LayerIndexOutOfRange(f"layer {ell} is not an encoder layer")
    mask = [False] * n
    mask[ell - 1] = True
    mask[-1] = True
    scl = method.kind == Method.SCL
    return FineTunePlan(method, tuple(mask), uses_skip=scl, skip_source_layer=ell if scl else None)


def adaptive_avg_pool(v, target: int):
    """Average contiguous blocks ``[floor(b*d/m), floor((b+1)*d/m))`` of the last axis."""
    v = np.asarray(v, dtype=np.float64)
    d = v.shape[-1]
    if target < 1:
        raise TargetTooLarge(f"pool target must be >= 1, got {target}")
    if target > d:
        raise TargetTooLarge(f"cannot pool {d} features into {target}")
    if target == d:
        return v.copy()
    bounds = (np.arange(target + 1) * d) // target
    sums = np.add.reduceat(v, bounds[:-1], axis=-1)
    return sums / np.diff(bounds)


def accuracy_from_logits(logits, labels) -> float:
    """Fraction of argmax hits; ``np.argmax`` breaks ties toward the smallest index."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise DimensionMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def evaluate(net: Network, data, labels=None, plan: FineTunePlan = None) -> float:
    if isinstance(data, FeatureMatrix):
        x, labels = data.data, data.labels
    else:
        x = data
    skip = plan.skip_source_layer if plan is not None else None
    logits, _ = forward(net, x, skip)
    return accuracy_from_logits(logits, labels)


@dataclass
class TransferResult:
    method: FineTuneMethod
    test_accuracy: float
    penultimate_nc1: float
    combined_nc1: float
    layer_metrics: list
    params_trainable: int
    params_total: int
    percent_trainable: float
    history: TrainHistory
    network: Network = field(repr=False, default=None)

    def to_dict(self) -> dict:
        per_layer = []
        for i, b in enumerate(self.layer_metrics, start=1):
            label = "combined" if self.combined_nc1 is not None and i == len(self.layer_metrics) else i
            per_layer.append({"layer": label, "nc1": b.nc1, "etf_deviation": b.etf_deviation,
                              "cdnv": b.cdnv, "numerical_rank": b.numerical_rank})
        return {
            "method": self.method.kind.value,
            "layer": self.method.layer,
            "test_accuracy": self.test_accuracy,
            "penultimate_nc1": self.penultimate_nc1,
            "combined_nc1": self.combined_nc1,
            "params_trainable": self.params_trainable,
            "params_total": self.params_total,
            "percent_trainable": self.percent_trainable,
            "per_layer": per_layer,
        }


def _check_downstream(pretrained: Network, downstream: DatasetSplit):
    if downstream.d != pretrained.input_dim:
        raise DimensionMismatch(f"downstream d={downstream.d}, network input {pretrained.input_dim}")
    if pretrained.encoder_depth < 1:
        raise InvalidSpec("pretrained network has no encoder layers")


def run_transfer(pretrained: Network, downstream: DatasetSplit, method: FineTuneMethod, config: TrainConfig) -> TransferResult:
    """Fine-tune a copy of ``pretrained`` on ``downstream`` with one strategy.

    The projection head (if any) and the old classifier are discarded; a new
    classifier sized to the downstream classes is initialized from
    ``config.seed``. NC1 is measured on downstream training features.
    """
    _check_downstream(pretrained, downstream)
    enc_widths = [ly.out_dim for ly in pretrained.layers if ly.role == Role.ENCODER]
    in_dim = enc_widths[-1]
    if method.kind == Method.SCL and method.layer is not None and 1 <= method.layer <= len(enc_widths):
        in_dim = max(enc_widths[method.layer - 1], enc_widths[-1])
    model = encoder_with_classifier(pretrained, downstream.n_classes, config.seed, in_dim)
    plan = make_plan(model, method)
    trained, hist = train(model, downstream.train, config, plan.trainable_mask, plan.skip_source_layer)
    acc = evaluate(trained, downstream.test, plan=plan)

    _, acts = forward(trained, downstream.train.data, plan.skip_source_layer)
    feats = [downstream.train.with_data(a) for a in acts]
    combined = None
    if plan.uses_skip:
        combined = downstream.train.with_data(scl_combine(acts[plan.skip_source_layer - 1], acts[-1]))
        feats.append(combined)
    bundles = layer_metrics(feats)
    pen = bundles[len(acts) - 1]
    trainable, total, pct = count_parameters(trained, plan.trainable_mask)
    return TransferResult(
        method=method,
        test_accuracy=acc,
        penultimate_nc1=pen.nc1,
        combined_nc1=bundles[-1].nc1 if combined is not None else None,
        layer_metrics=bundles,
        params_trainable=trainable,
        params_total=total,
        percent_trainable=pct,
        history=hist,
        network=trained,
    )


@dataclass(frozen=True)
class ProbeRow:
    layer: int
    accuracy: float
    nc1: float


def layer_features(pretrained: Network, x, layer: int, pool_dim=None):
    """Frozen ``h^layer`` for a batch, optionally adaptive-average-pooled."""
    h = forward_prefix(pretrained, x, layer)[-1]
    return h if pool_dim is None else adaptive_avg_pool(h, pool_dim)


def layerwise_probe(pretrained: Network, downstream: DatasetSplit, pool_dim=None, config: TrainConfig = None) -> list:
    """Train a fresh linear classifier on each frozen encoder layer's features."""
    config = config or TrainConfig()
    _check_downstream(pretrained, downstream)
    depth = pretrained.encoder_depth
    if pool_dim is not None:
        narrowest = min(ly.out_dim for ly in pretrained.layers[:depth])
        if pool_dim > narrowest:
            raise TargetTooLarge(f"pool_dim {pool_dim} exceeds narrowest layer width {narrowest}")
    return [probe_layer(pretrained, downstream, ell, pool_dim, config) for ell in range(1, depth + 1)]


def probe_layer(pretrained: Network, downstream: DatasetSplit, layer: int, pool_dim=None, config: TrainConfig = None) -> ProbeRow:
    config = config or TrainConfig()
    if not 1 <= layer <= pretrained.encoder_depth:
        raise LayerIndexOutOfRange(f"layer {layer} outside encoder range 1..{pretrained.encoder_depth}")
    tr = downstream.train.with_data(layer_features(pretrained, downstream.train.data, layer, pool_dim))
    te = downstream.test.with_data(layer_features(pretrained, downstream.test.data, layer, pool_dim))
    probe = Network([fresh_classifier(tr.d, downstream.n_classes, config.seed)])
    probe, _ = train(probe, tr, config)
    return ProbeRow(layer, evaluate(probe, te), nc1(tr))
