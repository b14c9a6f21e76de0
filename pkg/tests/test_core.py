import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import idx_bytes
from ncprobe.core import (
    DatasetSplit,
    FeatureMatrix,
    build_feature_matrix,
    load_csv,
    load_fmx,
    load_idx,
    load_split,
    parse_fmx,
    save_csv,
    save_fmx,
    save_split,
)
from ncprobe.errors import (
    BadMagic,
    CountMismatch,
    DimensionMismatch,
    EmptyClass,
    EmptyInput,
    LabelOutOfRange,
    MalformedHeader,
    NonFiniteValue,
    ParseError,
    TruncatedFile,
    UnsupportedVersion,
)


def test_build_counts_classes():
    fm = build_feature_matrix([(0, [1, 2]), (0, [3, 4]), (1, [5, 6]), (1, [7, 8])], 2)
    assert fm.d == 2 and fm.n_samples == 4 and fm.n_classes == 2
    assert fm.class_counts.tolist() == [2, 2]


@pytest.mark.parametrize(
    "rows, k, exc",
    [
        ([(0, [1.0]), (2, [2.0])], 2, LabelOutOfRange),
        ([(0, [1.0]), (0, [2.0])], 2, EmptyClass),
        ([], 2, EmptyInput),
        ([(0, [1.0]), (1, [2.0, 3.0])], 2, DimensionMismatch),
        ([(0, [np.nan]), (1, [2.0])], 2, NonFiniteValue),
        ([(0, [np.inf]), (1, [2.0])], 2, NonFiniteValue),
        ([(-1, [1.0]), (1, [2.0])], 2, LabelOutOfRange),
    ],
)
def test_build_rejects(rows, k, exc):
    with pytest.raises(exc):
        build_feature_matrix(rows, k)


def test_feature_matrix_is_read_only():
    fm = build_feature_matrix([(0, [1.0]), (1, [2.0])], 2)
    with pytest.raises(ValueError):
        fm.data[0, 0] = 5.0


def test_build_is_permutation_equivariant(rng):
    rows = [(int(rng.integers(3)), rng.standard_normal(4)) for _ in range(30)]
    rows += [(0, rng.standard_normal(4)), (1, rng.standard_normal(4)), (2, rng.standard_normal(4))]
    perm = rng.permutation(len(rows))
    a = build_feature_matrix(rows, 3)
    b = build_feature_matrix([rows[i] for i in perm], 3)
    assert np.array_equal(b.data, a.data[perm])
    assert np.array_equal(b.labels, a.labels[perm])
    assert a.class_counts.tolist() == b.class_counts.tolist()


def test_fmx_round_trip_small(tmp_path):
    fm = FeatureMatrix.from_arrays(np.arange(8.0).reshape(4, 2) / 3.0, [0, 0, 1, 1], 2)
    save_fmx(fm, tmp_path / "a.fmx")
    back = load_fmx(tmp_path / "a.fmx")
    assert back == fm
    assert back.data.tobytes() == fm.data.tobytes()


def test_fmx_layout(tmp_path):
    fm = FeatureMatrix.from_arrays([[1.5, -2.0]], [0], 1)
    save_fmx(fm, tmp_path / "a.fmx")
    raw = (tmp_path / "a.fmx").read_bytes()
    assert raw[:4] == b"FMX1"
    assert struct.unpack_from("<IIII", raw, 4) == (1, 2, 1, 1)
    assert struct.unpack_from("<I", raw, 20) == (0,)
    assert struct.unpack_from("<2d", raw, 24) == (1.5, -2.0)
    assert len(raw) == 24 + 16


@settings(max_examples=40, deadline=None)
@given(
    data=hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 5)),
                    elements=st.floats(allow_nan=False, allow_infinity=False, width=64)),
    k=st.integers(1, 4),
)
def test_fmx_round_trip_property(tmp_path_factory, data, k):
    n = data.shape[0]
    k = min(k, n)
    labels = np.arange(n) % k
    fm = FeatureMatrix.from_arrays(data, labels, k)
    p = tmp_path_factory.mktemp("fmx") / "x.fmx"
    save_fmx(fm, p)
    back = load_fmx(p)
    assert back.data.tobytes() == fm.data.tobytes()
    assert np.array_equal(back.labels, fm.labels) and back.n_classes == fm.n_classes


def test_fmx_bad_magic(tmp_path):
    p = tmp_path / "bad.fmx"
    p.write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(BadMagic):
        load_fmx(p)


def test_fmx_truncated(tmp_path):
    fm = FeatureMatrix.from_arrays(np.ones((4, 2)), [0, 0, 1, 1], 2)
    save_fmx(fm, tmp_path / "a.fmx")
    raw = (tmp_path / "a.fmx").read_bytes()
    with pytest.raises(TruncatedFile):
        parse_fmx(raw[:-5])
    with pytest.raises(TruncatedFile):
        parse_fmx(raw[:10])


def test_fmx_version():
    raw = struct.pack("<4sIIII", b"FMX1", 2, 1, 1, 1) + struct.pack("<I", 0) + struct.pack("<d", 1.0)
    with pytest.raises(UnsupportedVersion):
        parse_fmx(raw)


def test_fmx_validation_applies():
    raw = struct.pack("<4sIIII", b"FMX1", 1, 1, 2, 2) + struct.pack("<2I", 0, 0) + struct.pack("<2d", 1.0, 2.0)
    with pytest.raises(EmptyClass):
        parse_fmx(raw)


def test_csv_basic(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0,4.0\n")
    fm = load_csv(p)
    assert (fm.d, fm.n_samples, fm.n_classes) == (2, 2, 2)
    assert fm.data.tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_csv_missing_header(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0,1.0,2.0\n1,3.0,4.0\n")
    with pytest.raises(MalformedHeader):
        load_csv(p)


def test_csv_parse_error_line(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("label,f0,f1\n0,1.0,abc\n")
    with pytest.raises(ParseError) as info:
        load_csv(p)
    assert info.value.line == 2


def test_csv_fmx_csv_round_trip(tmp_path, rng):
    fm = FeatureMatrix.from_arrays(rng.standard_normal((20, 3)) * 10 ** rng.uniform(-5, 5, (20, 1)),
                                   np.arange(20) % 4, 4)
    save_csv(fm, tmp_path / "a.csv")
    parsed = load_csv(tmp_path / "a.csv")
    save_fmx(parsed, tmp_path / "a.fmx")
    back = load_fmx(tmp_path / "a.fmx")
    assert np.max(np.abs(back.data - parsed.data)) <= 1e-15
    # shortest-repr text round-trips exactly
    assert back.data.tobytes() == fm.data.tobytes()


def test_idx_two_images(tmp_path):
    (tmp_path / "img").write_bytes(idx_bytes(0x803, (2, 2, 2), [0, 0, 0, 0, 255, 255, 255, 255]))
    (tmp_path / "lab").write_bytes(idx_bytes(0x801, (2,), [0, 1]))
    fm = load_idx(tmp_path / "img", tmp_path / "lab", 2)
    assert fm.data.tolist() == [[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]]
    assert fm.labels.tolist() == [0, 1]


def test_idx_scaling_and_row_major(tmp_path):
    (tmp_path / "img").write_bytes(idx_bytes(0x803, (1, 2, 3), [0, 51, 102, 153, 204, 255]))
    (tmp_path / "lab").write_bytes(idx_bytes(0x801, (1,), [0]))
    fm = load_idx(tmp_path / "img", tmp_path / "lab", 1)
    assert fm.data.tolist() == [[v / 255.0 for v in (0, 51, 102, 153, 204, 255)]]


def test_idx_count_mismatch(tmp_path):
    (tmp_path / "img").write_bytes(idx_bytes(0x803, (2, 1, 1), [0, 1]))
    (tmp_path / "lab").write_bytes(idx_bytes(0x801, (3,), [0, 1, 0]))
    with pytest.raises(CountMismatch):
        load_idx(tmp_path / "img", tmp_path / "lab", 2)


def test_idx_bad_magic(tmp_path):
    (tmp_path / "img").write_bytes(idx_bytes(0x801, (2,), [0, 1]))
    (tmp_path / "lab").write_bytes(idx_bytes(0x801, (2,), [0, 1]))
    with pytest.raises(BadMagic):
        load_idx(tmp_path / "img", tmp_path / "lab", 2)


def test_idx_truncated(tmp_path):
    (tmp_path / "img").write_bytes(idx_bytes(0x803, (2, 2, 2), [0] * 7))
    (tmp_path / "lab").write_bytes(idx_bytes(0x801, (2,), [0, 1]))
    with pytest.raises(TruncatedFile):
        load_idx(tmp_path / "img", tmp_path / "lab", 2)


def test_split_validates_and_round_trips(tmp_path):
    a = FeatureMatrix.from_arrays(np.ones((2, 3)), [0, 1], 2)
    b = FeatureMatrix.from_arrays(np.ones((2, 2)), [0, 1], 2)
    with pytest.raises(DimensionMismatch):
        DatasetSplit(a, b)
    split = DatasetSplit(a, a)
    save_split(split, tmp_path / "s")
    back = load_split(tmp_path / "s")
    assert back.train == a and back.test == a
