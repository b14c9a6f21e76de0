"""Labeled feature matrices and the FMX / CSV / IDX readers.

Features are stored sample-major: ``data[i]`` is the feature vector of sample
``i`` and ``labels[i]`` its class. Arrays are float64 and made read-only on
construction.
"""
import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    DimensionMismatch,
    EmptyClass,
    EmptyInput,
    FormatError,
    LabelOutOfRange,
    MalformedHeader,
    NonFiniteValue,
    ParseError,
    TruncatedFile,
    UnsupportedVersion,
)

FMX_MAGIC = b"FMX1"
FMX_VERSION = 1
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    data: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,) int64
    n_classes: int

    @classmethod
    def from_arrays(cls, data, labels, n_classes: int) -> "FeatureMatrix":
        data = np.array(data, dtype=np.float64, copy=True)
        labels_in = np.asarray(labels)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] == 0:
            raise EmptyInput("need at least one sample")
        if data.shape[1] == 0:
            raise DimensionMismatch("feature dimension must be >= 1")
        if labels_in.ndim != 1 or labels_in.shape[0] != data.shape[0]:
            raise DimensionMismatch(f"{labels_in.shape[0] if labels_in.ndim else 0} labels for {data.shape[0]} samples")
        if labels_in.size and not np.issubdtype(labels_in.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels_in, 1), 0)):
                raise LabelOutOfRange("labels must be integers")
        labels_arr = labels_in.astype(np.int64)
        n_classes = int(n_classes)
        if n_classes < 1:
            raise LabelOutOfRange("n_classes must be >= 1")
        if labels_arr.min() < 0 or labels_arr.max() >= n_classes:
            raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
        counts = np.bincount(labels_arr, minlength=n_classes)
        if np.any(counts == 0):
            raise EmptyClass(f"class {int(np.argmin(counts))} has no samples")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue("feature values must be finite")
        data.setflags(write=False)
        labels_arr.setflags(write=False)
        return cls(data, labels_arr, n_classes)

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def class_rows(self, k: int) -> np.ndarray:
        return self.data[self.labels == k]

    def with_data(self, data) -> "FeatureMatrix":
        """Same labels, new feature rows (e.g. a layer's activations)."""
        return FeatureMatrix.from_arrays(data, self.labels, self.n_classes)

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.n_classes == other.n_classes
            and self.data.shape == other.data.shape
            and np.array_equal(self.labels, other.labels)
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ClassStatistics:
    class_means: np.ndarray  # (K, d)
    global_mean: np.ndarray  # (d,)
    sigma_w: np.ndarray  # (d, d)
    sigma_b: np.ndarray  # (d, d)
    class_counts: np.ndarray  # (K,)


@dataclass(frozen=True)
class DatasetSplit:
    train: FeatureMatrix
    test: FeatureMatrix

    def __post_init__(self):
        if self.train.d != self.test.d:
            raise DimensionMismatch(f"train d={self.train.d} but test d={self.test.d}")
        if self.train.n_classes != self.test.n_classes:
            raise DimensionMismatch("train and test disagree on n_classes")

    @property
    def d(self) -> int:
        return self.train.d

    @property
    def n_classes(self) -> int:
        return self.train.n_classes


def build_feature_matrix(rows, n_classes: int) -> FeatureMatrix:
    """Build from ``(label, vector)`` pairs."""
    rows = list(rows)
    if not rows:
        raise EmptyInput("no rows given")
    dims = {len(v) for _, v in rows}
    if len(dims) != 1:
        raise DimensionMismatch(f"vectors have differing dimensions {sorted(dims)}")
    labels = np.array([lab for lab, _ in rows])
    data = np.array([np.asarray(v, dtype=np.float64) for _, v in rows])
    return FeatureMatrix.from_arrays(data, labels, n_classes)


# FMX --------------------------------------------------------------------

_FMX_HEADER = struct.Struct("<4sIIII")


def save_fmx(fm: FeatureMatrix, path) -> None:
    header = _FMX_HEADER.pack(FMX_MAGIC, FMX_VERSION, fm.d, fm.n_samples, fm.n_classes)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(fm.labels.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(fm.data, dtype="<f8").tobytes())


def parse_fmx(buf: bytes) -> FeatureMatrix:
    if len(buf) < 4 or buf[:4] != FMX_MAGIC:
        raise BadMagic(f"expected magic {FMX_MAGIC!r}, got {bytes(buf[:4])!r}")
    if len(buf) < _FMX_HEADER.size:
        raise TruncatedFile("header truncated")
    _, version, d, n, k = _FMX_HEADER.unpack_from(buf)
    if version != FMX_VERSION:
        raise UnsupportedVersion(f"FMX version {version}")
    need = _FMX_HEADER.size + 4 * n + 8 * n * d
    if len(buf) < need:
        raise TruncatedFile(f"expected {need} bytes, got {len(buf)}")
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload")
    off = _FMX_HEADER.size
    labels = np.frombuffer(buf, dtype="<u4", count=n, offset=off)
    data = np.frombuffer(buf, dtype="<f8", count=n * d, offset=off + 4 * n).reshape(n, d)
    return FeatureMatrix.from_arrays(data, labels, k)


def load_fmx(path) -> FeatureMatrix:
    return parse_fmx(Path(path).read_bytes())


# CSV --------------------------------------------------------------------


def load_csv(path) -> FeatureMatrix:
    """Read ``label,f0,...,f{d-1}`` CSV; K is inferred as ``max(label) + 1``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip() != "label":
            raise MalformedHeader("first line must be 'label,f0,...'")
        d = len(header) - 1
        if [h.strip() for h in header[1:]] != [f"f{i}" for i in range(d)]:
            raise MalformedHeader("feature columns must be named f0..f{d-1}")
        labels, data = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != d + 1:
                raise ParseError(lineno, f"expected {d + 1} fields, got {len(rec)}")
            try:
                labels.append(int(rec[0]))
                data.append([float(f) for f in rec[1:]])
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
    if not labels:
        raise EmptyInput("CSV has no data rows")
    if min(labels) < 0:
        raise LabelOutOfRange("negative label")
    return FeatureMatrix.from_arrays(np.array(data), np.array(labels), max(labels) + 1)


def save_csv(fm: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i}" for i in range(fm.d)])
        for lab, row in zip(fm.labels, fm.data):
            w.writerow([int(lab)] + [repr(float(x)) for x in row])


# IDX --------------------------------------------------------------------


def _read_idx(buf: bytes, magic: int, what: str):
    if len(buf) < 4:
        raise TruncatedFile(f"{what}: missing magic")
    got = struct.unpack_from(">I", buf)[0]
    if got != magic:
        raise BadMagic(f"{what}: expected magic 0x{magic:08x}, got 0x{got:08x}")
    ndim = magic & 0xFF
    if len(buf) < 4 + 4 * ndim:
        raise TruncatedFile(f"{what}: header truncated")
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    off = 4 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) < off + count:
        raise TruncatedFile(f"{what}: expected {count} payload bytes, got {len(buf) - off}")
    payload = np.frombuffer(buf, dtype=np.uint8, count=count, offset=off)
    return dims, payload


def parse_idx(images: bytes, labels: bytes, n_classes=None) -> FeatureMatrix:
    (n_img, rows, cols), pix = _read_idx(images, IDX_IMAGES_MAGIC, "images")
    (n_lab,), lab = _read_idx(labels, IDX_LABELS_MAGIC, "labels")
    if n_img != n_lab:
        raise CountMismatch(f"{n_img} images but {n_lab} labels")
    data = pix.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    lab = lab.astype(np.int64)
    if n_classes is None:
        if lab.size == 0:
            raise EmptyInput("IDX files hold no samples")
        n_classes = int(lab.max()) + 1
    return FeatureMatrix.from_arrays(data, lab, n_classes)


def load_idx(images_path, labels_path, n_classes=None) -> FeatureMatrix:
    """MNIST-style IDX pair; pixels are scaled to [0, 1] by dividing by 255."""
    return parse_idx(Path(images_path).read_bytes(), Path(labels_path).read_bytes(), n_classes)


def save_split(split: DatasetSplit, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_fmx(split.train, directory / "train.fmx")
    save_fmx(split.test, directory / "test.fmx")


def load_split(directory) -> DatasetSplit:
    """A split on disk is a directory holding ``train.fmx`` and ``test.fmx``."""
    directory = Path(directory)
    return DatasetSplit(load_fmx(directory / "train.fmx"), load_fmx(directory / "test.fmx"))
