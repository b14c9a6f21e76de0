"""Collapse metrics over a :class:`~ncprobe.core.FeatureMatrix`.

All four metrics are invariant to a global rescaling or rotation of the
features. Class-level reductions run in class-index order so results are
bit-reproducible.
"""
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .core import ClassStatistics, FeatureMatrix
from .errors import (
    CoincidentClassMeans,
    ConstantSeries,
    DegenerateMeans,
    LayerMetricError,
    LengthMismatch,
    NcError,
    SingleClass,
    ZeroClassFeatures,
)
from .linalg import pinv_quadratic_trace, power_spectral_norm

DEFAULT_RANK_REL_TOL = 1e-10
DEFAULT_POWER_ITERS = 200
DEFAULT_POWER_REL_TOL = 1e-10


@dataclass(frozen=True)
class MetricBundle:
    nc1: float
    etf_deviation: float
    cdnv: float
    numerical_rank: float
    n_classes: int
    n_samples: int
    d: int

    def to_dict(self) -> dict:
        return asdict(self)


def _require_two_classes(fm: FeatureMatrix):
    if fm.n_classes < 2:
        raise SingleClass("metric needs at least two classes")


def class_blocks(fm: FeatureMatrix) -> list:
    """Per-class sample blocks with rows in lexicographic order.

    Every reduction runs over these canonical blocks, which is what makes the
    metrics bit-identical under any reordering of samples.
    """
    blocks = []
    for k in range(fm.n_classes):
        hk = fm.class_rows(k)
        blocks.append(hk[np.lexsort(hk.T[::-1])])
    return blocks


def _class_means(blocks) -> np.ndarray:
    return np.stack([b.mean(axis=0) for b in blocks])


def class_statistics(fm: FeatureMatrix) -> ClassStatistics:
    """Class means, the mean of class means, and the two covariances.

    Within-class covariance is normalized by the total sample count N and
    between-class covariance by K; the global mean is the unweighted mean of
    the class means.
    """
    blocks = class_blocks(fm)
    means = _class_means(blocks)
    h_g = means.mean(axis=0)
    sigma_w = np.zeros((fm.d, fm.d))
    for b, mu in zip(blocks, means):
        c = b - mu
        sigma_w += c.T @ c
    sigma_w /= fm.n_samples
    mc = means - h_g
    sigma_b = mc.T @ mc / fm.n_classes
    # exact symmetry; the products above are symmetric only up to rounding
    sigma_w = 0.5 * (sigma_w + sigma_w.T)
    sigma_b = 0.5 * (sigma_b + sigma_b.T)
    return ClassStatistics(means, h_g, sigma_w, sigma_b, fm.class_counts)


def nc1(fm: FeatureMatrix, rank_rel_tol: float = DEFAULT_RANK_REL_TOL) -> float:
    _require_two_classes(fm)
    st = class_statistics(fm)
    return pinv_quadratic_trace(st.sigma_w, st.sigma_b, rank_rel_tol) / fm.n_classes


def etf_deviation(fm: FeatureMatrix) -> float:
    """Frobenius distance between the normalized centered-mean Gram and the simplex-ETF Gram."""
    _require_two_classes(fm)
    means = _class_means(class_blocks(fm))
    mc = means - means.mean(axis=0)
    gram = mc @ mc.T
    g_norm = np.linalg.norm(gram)
    if g_norm == 0.0:
        raise DegenerateMeans("all class means coincide")
    k = fm.n_classes
    target = np.eye(k) - np.full((k, k), 1.0 / k)
    return float(np.linalg.norm(gram / g_norm - target / np.linalg.norm(target)))


def cdnv(fm: FeatureMatrix) -> float:
    """Class-distance normalized variance averaged over unordered class pairs."""
    _require_two_classes(fm)
    blocks = class_blocks(fm)
    means = _class_means(blocks)
    var = np.array([np.mean(np.sum((b - mu) ** 2, axis=1)) for b, mu in zip(blocks, means)])
    total = 0.0
    pairs = 0
    for i, j in combinations(range(fm.n_classes), 2):
        dist2 = float(np.sum((means[i] - means[j]) ** 2))
        if dist2 == 0.0:
            raise CoincidentClassMeans(i, j)
        total += (var[i] + var[j]) / (2.0 * dist2)
        pairs += 1
    return float(total / pairs)


def numerical_rank(
    fm: FeatureMatrix,
    power_iters: int = DEFAULT_POWER_ITERS,
    rel_tol: float = DEFAULT_POWER_REL_TOL,
    seed: int = 0,
) -> float:
    """Mean over classes of ``||H_k||_F^2 / ||H_k||_2^2`` (spectral norm by power iteration)."""
    ratios = []
    for k, hk in enumerate(class_blocks(fm)):
        fro2 = float(np.sum(hk * hk))
        if fro2 == 0.0:
            raise ZeroClassFeatures(k)
        sigma = power_spectral_norm(hk, power_iters, rel_tol, seed)
        ratios.append(fro2 / (sigma * sigma))
    return float(np.mean(ratios))


def metric_bundle(
    fm: FeatureMatrix,
    rank_rel_tol: float = DEFAULT_RANK_REL_TOL,
    power_iters: int = DEFAULT_POWER_ITERS,
    power_rel_tol: float = DEFAULT_POWER_REL_TOL,
    seed: int = 0,
) -> MetricBundle:
    return MetricBundle(
        nc1=nc1(fm, rank_rel_tol),
        etf_deviation=etf_deviation(fm),
        cdnv=cdnv(fm),
        numerical_rank=numerical_rank(fm, power_iters, power_rel_tol, seed),
        n_classes=fm.n_classes,
        n_samples=fm.n_samples,
        d=fm.d,
    )


def layer_metrics(activations, rank_rel_tol: float = DEFAULT_RANK_REL_TOL) -> list:
    """One :class:`MetricBundle` per layer; failures name the (1-based) layer."""
    activations = list(activations)
    if activations:
        ref = activations[0]
        for fm in activations[1:]:
            if fm.n_samples != ref.n_samples or not np.array_equal(fm.labels, ref.labels):
                raise LengthMismatch("all layers must share labels and sample count")
    out = []
    for i, fm in enumerate(activations, start=1):
        try:
            out.append(metric_bundle(fm, rank_rel_tol))
        except NcError as exc:
            raise LayerMetricError(i, exc) from exc
    return out


def pearson(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise LengthMismatch(f"series shapes {xs.shape} and {ys.shape}")
    if xs.size < 2:
        raise LengthMismatch("need at least two points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = float(np.sqrt(dx @ dx))
    sy = float(np.sqrt(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise ConstantSeries("correlation undefined for a constant series")
    r = float(dx @ dy) / (sx * sy)
    return float(min(1.0, max(-1.0, r)))
