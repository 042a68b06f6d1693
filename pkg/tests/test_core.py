import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hydefuse.core import (
    DimensionError,
    HsbFormatError,
    HsiImage,
    SpatialDims,
    h_norm,
    inner_product,
    read_hsb,
    to_cube,
    to_matrix,
    write_hsb,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
# keeps products clear of the subnormal range
moderate = finite.filter(lambda v: v == 0 or abs(v) > 1e-100)


def pairs(max_rows=12, max_cols=5):
    return st.tuples(st.integers(1, max_rows), st.integers(1, max_cols)).flatmap(
        lambda s: st.tuples(arrays(np.float64, s, elements=finite), arrays(np.float64, s, elements=finite))
    )


def test_inner_product_of_zeros_is_zero():
    assert inner_product(np.zeros((4, 2)), np.zeros((4, 2))) == 0.0


def test_inner_product_of_ones_counts_entries():
    assert inner_product(np.ones((4, 2)), np.ones((4, 2))) == 8.0


def test_inner_product_matches_flattened_dot():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    assert inner_product(a, b) == pytest.approx(float(a.ravel() @ b.ravel()), rel=1e-14)
    assert inner_product(a, b) == pytest.approx(np.trace(a.T @ b), rel=1e-12)


def test_inner_product_shape_mismatch():
    with pytest.raises(DimensionError):
        inner_product(np.zeros((4, 2)), np.zeros((2, 4)))


def test_norm_examples():
    assert h_norm(np.zeros((3, 3))) == 0.0
    x = np.zeros((5, 2))
    x[2, 1] = 3.0
    assert h_norm(x) == 3.0
    r = np.random.default_rng(1).standard_normal((5, 2))
    assert h_norm(r) == pytest.approx(np.sqrt(np.sum(r**2)), rel=1e-14)


@given(pairs())
def test_inner_product_symmetric(ab):
    a, b = ab
    x, y = inner_product(a, b), inner_product(b, a)
    assert abs(x - y) <= 1e-12 * max(1.0, abs(x))


@given(pairs())
def test_cauchy_schwarz(ab):
    a, b = ab
    assert abs(inner_product(a, b)) <= h_norm(a) * h_norm(b) * (1 + 1e-12) + 1e-10


@given(arrays(np.float64, (7, 3), elements=moderate), st.floats(-50, 50).filter(lambda c: c == 0 or abs(c) > 1e-100))
def test_norm_homogeneous(x, c):
    assert h_norm(c * x) == pytest.approx(abs(c) * h_norm(x), rel=1e-12, abs=1e-300)


@given(arrays(np.float64, (6, 2), elements=finite))
def test_norm_zero_iff_zero(x):
    assert (h_norm(x) == 0) == (not np.any(x))


def test_image_validation():
    with pytest.raises(DimensionError):
        HsiImage(2, 2, 3, np.zeros((5, 3)))
    with pytest.raises(ValueError):
        HsiImage(2, 2, 1, np.array([[0.0], [np.nan], [0.0], [0.0]]))
    with pytest.raises(ValueError):
        SpatialDims(0, 3)


def test_cube_layout_is_row_major():
    cube = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
    X = to_matrix(cube)
    # pixel (r, c) -> row r * cols + c
    assert np.array_equal(X[1 * 3 + 2], cube[1, 2])
    assert np.array_equal(to_cube(X, SpatialDims(2, 3)), cube)


@given(rows=st.integers(1, 6), cols=st.integers(1, 6), bands=st.integers(1, 4),
       seed=st.integers(0, 2**32 - 1))
def test_hsb_roundtrip(tmp_path_factory, rows, cols, bands, seed):
    data = np.random.default_rng(seed).standard_normal((rows * cols, bands))
    img = HsiImage(rows, cols, bands, data)
    path = tmp_path_factory.mktemp("hsb") / "x.hsb"
    write_hsb(path, img)
    back = read_hsb(path)
    assert (back.rows, back.cols, back.bands) == (rows, cols, bands)
    assert np.array_equal(back.data, data)


def test_hsb_layout_is_band_major(tmp_path):
    data = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 40.0]])
    path = tmp_path / "x.hsb"
    write_hsb(path, HsiImage(2, 2, 2, data))
    raw = path.read_bytes()
    head, body = raw.split(b"\n", 1)
    assert json.loads(head) == {"magic": "HSB1", "rows": 2, "cols": 2, "bands": 2, "dtype": "f64"}
    assert np.array_equal(np.frombuffer(body, "<f8"), [1, 2, 3, 4, 10, 20, 30, 40])


@pytest.mark.parametrize(
    "payload",
    [
        b"no newline",
        b"{not json\n",
        b'{"magic":"HSB2","rows":1,"cols":1,"bands":1,"dtype":"f64"}\n' + b"\0" * 8,
        b'{"magic":"HSB1","rows":1,"cols":1,"bands":2,"dtype":"f64"}\n' + b"\0" * 8,
    ],
)
def test_hsb_rejects_malformed(tmp_path, payload):
    path = tmp_path / "bad.hsb"
    path.write_bytes(payload)
    with pytest.raises(HsbFormatError):
        read_hsb(path)
