import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydefuse.core import DimensionError, HsiImage, SpatialDims
from hydefuse.subspace import (
    Subspace,
    cubic_interp_matrix,
    default_dim,
    estimate_subspace,
    to_full,
    to_latent,
    upsample,
)


def image(data, rows, cols):
    return HsiImage.from_matrix(np.asarray(data, dtype=float), SpatialDims(rows, cols))


def low_rank(n, L, r, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, r)) @ rng.standard_normal((r, L))


# -- upsampling -------------------------------------------------------------------

def test_cubic_half_pixel_weights():
    # Keys a=-0.5 at half-pixel offsets: (-1, 9, 9, -1) / 16
    M = cubic_interp_matrix(8, 2)
    assert np.allclose(M[5, 1:5], [-1 / 16, 9 / 16, 9 / 16, -1 / 16], atol=1e-15)
    assert np.allclose(M[4], np.eye(8)[2])


def test_upsample_factor_one_is_identity():
    img = image(np.random.default_rng(0).random((12, 2)), 3, 4)
    assert upsample(img, 1) is img


def test_upsample_reproduces_constants_and_samples():
    img = image(np.full((20, 3), 0.7), 4, 5)
    up = upsample(img, 3)
    assert (up.rows, up.cols, up.bands) == (12, 15, 3)
    assert np.allclose(up.data, 0.7, atol=1e-14)
    rnd = image(np.random.default_rng(1).random((20, 2)), 4, 5)
    assert np.allclose(upsample(rnd, 4).cube()[::4, ::4], rnd.cube(), atol=1e-14)


def test_upsample_preserves_ramp_in_interior():
    rows, cols, f = 8, 10, 2
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    ramp = (0.3 * r + 0.1 * c + 0.2).reshape(-1, 1)
    up = upsample(image(ramp, rows, cols), f).cube()[:, :, 0]
    ur, uc = np.meshgrid(np.arange(rows * f) / f, np.arange(cols * f) / f, indexing="ij")
    expected = 0.3 * ur + 0.1 * uc + 0.2
    margin = 2 * f   # two low-resolution pixels
    inner = (slice(margin, -margin), slice(margin, -margin))
    assert np.allclose(up[inner], expected[inner], atol=1e-6)


def test_upsample_rejects_bad_factor():
    img = image(np.zeros((4, 1)), 2, 2)
    for bad in (0, -1, 1.5):
        with pytest.raises(ValueError):
            upsample(img, bad)


# -- subspace estimation ----------------------------------------------------------

def test_exact_rank_reconstruction():
    Y = image(low_rank(64, 8, 3, seed=2), 8, 8)
    sub = estimate_subspace(Y, 3)
    assert np.allclose(to_full(to_latent(Y.data, sub), sub), Y.data, atol=1e-9)


def test_full_basis_is_orthogonal():
    Y = image(np.random.default_rng(3).standard_normal((64, 8)), 8, 8)
    sub = estimate_subspace(Y, 8)
    assert np.allclose(sub.basis @ sub.basis.T, np.eye(8), atol=1e-10)
    assert np.allclose(sub.basis.T @ sub.basis, np.eye(8), atol=1e-10)
    assert np.linalg.norm(Y.data @ sub.basis.T @ sub.basis - Y.data) <= 1e-9


def test_projection_residual_matches_discarded_energy():
    Y = image(np.random.default_rng(4).standard_normal((64, 8)), 8, 8)
    s = np.linalg.svd(Y.data, compute_uv=False)
    sub = estimate_subspace(Y, 3)
    resid = np.linalg.norm(Y.data - Y.data @ sub.basis.T @ sub.basis) ** 2
    assert resid == pytest.approx(np.sum(s[3:] ** 2), abs=1e-8)


def test_rank_deficient_request_warns_but_returns():
    Y = image(low_rank(16, 6, 2, seed=5), 4, 4)
    with pytest.warns(RuntimeWarning, match="numerical rank"):
        sub = estimate_subspace(Y, 4)
    assert sub.dim == 4
    assert np.allclose(sub.basis @ sub.basis.T, np.eye(4), atol=1e-10)


def test_dim_out_of_range():
    Y = image(np.ones((4, 3)), 2, 2)
    with pytest.raises(ValueError):
        estimate_subspace(Y, 0)
    with pytest.raises(ValueError):
        estimate_subspace(Y, 4)


def test_sign_canonicalisation():
    Y = image(np.random.default_rng(6).standard_normal((30, 5)), 5, 6)
    E = estimate_subspace(Y, 4).basis
    flipped = estimate_subspace(image(-Y.data, 5, 6), 4).basis
    assert np.allclose(E, flipped, atol=1e-12)
    piv = np.argmax(np.abs(E), axis=1)
    assert np.all(E[np.arange(4), piv] > 0)


def test_latent_maps_trivial_cases():
    sub = Subspace(np.eye(4))
    X = np.random.default_rng(7).standard_normal((9, 4))
    assert np.array_equal(to_full(X, sub), X)
    assert np.array_equal(to_latent(X, sub), X)
    assert not np.any(to_full(np.zeros((9, 4)), sub))
    with pytest.raises(DimensionError):
        to_full(np.zeros((9, 3)), sub)
    with pytest.raises(DimensionError):
        to_latent(np.zeros((9, 3)), sub)
    with pytest.raises(DimensionError):
        Subspace(np.zeros((5, 3)))


def test_default_dim():
    assert default_dim(8) == 8
    assert default_dim(100) == 10


def test_subspace_file_roundtrip(tmp_path):
    sub = estimate_subspace(image(np.random.default_rng(8).random((16, 6)), 4, 4), 3)
    sub.save(tmp_path / "E.hsb")
    assert np.array_equal(Subspace.load(tmp_path / "E.hsb").basis, sub.basis)


# -- properties -------------------------------------------------------------------

shapes = st.tuples(st.integers(2, 6), st.integers(2, 6), st.integers(1, 7), st.integers(0, 2**31))


@given(shapes, st.data())
def test_basis_orthonormal_and_ordered(shape, data):
    rows, cols, L, seed = shape
    Y = image(np.random.default_rng(seed).random((rows * cols, L)), rows, cols)
    dim = data.draw(st.integers(1, min(rows * cols, L)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sub = estimate_subspace(Y, dim)
    E = sub.basis
    assert np.allclose(E @ E.T, np.eye(dim), atol=1e-10)
    energy = np.linalg.norm(Y.data @ E.T, axis=0)
    assert np.all(np.diff(energy) <= 1e-9 * max(1.0, energy[0]))
    P = to_full(to_latent(Y.data, sub), sub)
    assert np.allclose(to_full(to_latent(P, sub), sub), P, atol=1e-9)
    X = np.random.default_rng(seed + 1).standard_normal((5, dim))
    assert np.allclose(to_latent(to_full(X, sub), sub), X, atol=1e-10)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.floats(-2, 2))
def test_upsample_constant_band(rows, cols, f, c):
    up = upsample(image(np.full((rows * cols, 1), c), rows, cols), f)
    assert up.rows == rows * f and up.cols == cols * f
    assert np.allclose(up.data, c, atol=1e-12)
