"""Seeded synthetic classification tasks and source/target transfer pairs.

Class means are orthonormal directions in a latent subspace (the "frame")
of the input space. Gaussian noise is added in the full input space, then a
stack of fixed affine+tanh warps bends the class boundaries so that the task
is no longer linearly solvable.

Randomness is split into independent streams:

* frame and warps come from the task seed (shared by a transfer pair);
* class directions and sample noise come from the class seed (the task seed
  for a source task, ``shift_seed`` for its target).
"""
from dataclasses import asdict, dataclass

import numpy as np

from .core import DatasetSplit, FeatureMatrix
from .errors import InvalidSpec

MEAN_SCALE = 2.0
WARP_GAIN = 2.0
WARP_OFFSET_SCALE = 0.5
TRAIN_FRACTION = 0.8

_FRAME, _WARP, _DIRS, _NOISE = 1, 2, 3, 4


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int
    per_class: int
    input_dim: int
    latent_dim: int
    noise_scale: float
    warp_depth: int = 2
    seed: int = 0

    def validate(self):
        if self.n_classes < 1 or self.input_dim < 1 or self.latent_dim < 1:
            raise InvalidSpec("n_classes, input_dim and latent_dim must be >= 1")
        if self.per_class < 2:
            raise InvalidSpec("per_class must be >= 2 so both splits are non-empty")
        if self.latent_dim > self.input_dim:
            raise InvalidSpec("latent_dim must not exceed input_dim")
        if self.n_classes > self.latent_dim:
            raise InvalidSpec("orthonormal class directions need n_classes <= latent_dim")
        if not self.noise_scale > 0:
            raise InvalidSpec("noise_scale must be > 0")
        if self.warp_depth < 0:
            raise InvalidSpec("warp_depth must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        try:
            spec = cls(
                n_classes=int(d["n_classes"]),
                per_class=int(d["per_class"]),
                input_dim=int(d["input_dim"]),
                latent_dim=int(d["latent_dim"]),
                noise_scale=float(d["noise_scale"]),
                warp_depth=int(d.get("warp_depth", 2)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"bad synthetic spec: {exc}") from None
        spec.validate()
        return spec


@dataclass(frozen=True)
class TransferPairSpec:
    source: SyntheticSpec
    target_classes: int
    target_per_class: int
    shift_seed: int

    def target_spec(self) -> SyntheticSpec:
        s = self.source
        return SyntheticSpec(self.target_classes, self.target_per_class, s.input_dim, s.latent_dim,
                             s.noise_scale, s.warp_depth, s.seed)

    def validate(self):
        self.source.validate()
        self.target_spec().validate()

    def to_dict(self) -> dict:
        return {"source": self.source.to_dict(), "target_classes": self.target_classes,
                "target_per_class": self.target_per_class, "shift_seed": self.shift_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TransferPairSpec":
        try:
            spec = cls(SyntheticSpec.from_dict(d["source"]), int(d["target_classes"]),
                       int(d["target_per_class"]), int(d["shift_seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"bad transfer pair spec: {exc}") from None
        spec.validate()
        return spec


def _orthonormal(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # sign fix makes the draw a deterministic function of the Gaussian sample
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _warps(spec: SyntheticSpec):
    rng = np.random.default_rng([spec.seed, _WARP])
    out = []
    for _ in range(spec.warp_depth):
        q = _orthonormal(rng, spec.input_dim, spec.input_dim)
        c = WARP_OFFSET_SCALE * rng.standard_normal(spec.input_dim)
        out.append((WARP_GAIN * q, c))
    return out


def apply_warps(x, warps):
    for a, c in warps:
        x = np.tanh(x @ a.T + c)
    return x


def class_means(spec: SyntheticSpec, class_seed=None) -> np.ndarray:
    """Pre-warp class means, shape ``(n_classes, input_dim)``."""
    class_seed = spec.seed if class_seed is None else class_seed
    frame = _orthonormal(np.random.default_rng([spec.seed, _FRAME]), spec.input_dim, spec.latent_dim)
    dirs = _orthonormal(np.random.default_rng([class_seed, _DIRS]), spec.latent_dim, spec.n_classes)
    return MEAN_SCALE * (frame @ dirs).T


def _generate(spec: SyntheticSpec, class_seed: int) -> DatasetSplit:
    spec.validate()
    means = class_means(spec, class_seed)
    rng = np.random.default_rng([class_seed, _NOISE])
    k, n = spec.n_classes, spec.per_class
    x = means[:, None, :] + spec.noise_scale * rng.standard_normal((k, n, spec.input_dim))
    x = apply_warps(x.reshape(k * n, spec.input_dim), _warps(spec)).reshape(k, n, spec.input_dim)
    n_train = min(max(int(round(TRAIN_FRACTION * n)), 1), n - 1)
    labels = np.arange(k)
    train = FeatureMatrix.from_arrays(x[:, :n_train].reshape(-1, spec.input_dim), np.repeat(labels, n_train), k)
    test = FeatureMatrix.from_arrays(x[:, n_train:].reshape(-1, spec.input_dim), np.repeat(labels, n - n_train), k)
    return DatasetSplit(train, test)


def make_classification_task(spec: SyntheticSpec) -> DatasetSplit:
    return _generate(spec, spec.seed)


def make_transfer_pair(pair: TransferPairSpec):
    """``(source, target)`` splits sharing frame and warps but not class directions."""
    pair.validate()
    return _generate(pair.source, pair.source.seed), _generate(pair.target_spec(), pair.shift_seed)


# presets used by the test-suite and the CLI examples ----------------------


def standard_task(seed: int = 0) -> SyntheticSpec:
    """10 classes in 32-D: a linear model stays below 95% train accuracy, a small MLP does not."""
    return SyntheticSpec(n_classes=10, per_class=100, input_dim=32, latent_dim=16,
                         noise_scale=0.6, warp_depth=2, seed=seed)


def hard_task(seed: int = 0) -> SyntheticSpec:
    """Heavy noise and four warps: random-feature probes stay near chance."""
    return SyntheticSpec(n_classes=10, per_class=100, input_dim=32, latent_dim=16,
                         noise_scale=2.0, warp_depth=4, seed=seed)


def standard_pair(seed: int = 0) -> TransferPairSpec:
    """Standard task as source, 5 new classes in the same frame as target."""
    return TransferPairSpec(standard_task(seed), target_classes=5, target_per_class=100, shift_seed=1000 + seed)
