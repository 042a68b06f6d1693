import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydefuse.core import DimensionError, SpatialDims, h_norm, inner_product
from hydefuse.forward import (
    STARCK_TAPS,
    ForwardModel,
    NoiseSpec,
    UndefinedSnrError,
    add_noise,
    apply_A,
    apply_A_adjoint,
    apply_B,
    apply_R,
    blur_taps,
    box_response,
    generate_scene,
    noise_sigma,
    parse_response,
    sigma_max_A,
    simulate_observations,
)
from hydefuse.spectral import operator_norm_A


def circulant(taps, n):
    r = len(taps) // 2
    M = np.zeros((n, n))
    for i in range(n):
        for t, w in zip(range(-r, r + 1), taps):
            M[i, (i - t) % n] += w
    return M


def dense_A(model):
    rows, cols = model.ms_dims.rows, model.ms_dims.cols
    d = model.decimation
    B = np.kron(circulant(model.taps, rows), circulant(model.taps, cols))
    keep = [r * cols + c for r in range(0, rows, d) for c in range(0, cols, d)]
    return B[keep]


def model(rows=8, cols=8, bands=4, d=4, blur="starck", **kw):
    return ForwardModel(SpatialDims(rows, cols), box_response(bands, 2), decimation=d, blur=blur, **kw)


models = st.builds(
    lambda n, d, blur, radius, std: ForwardModel(
        SpatialDims(n * d, (n + 1) * d), box_response(3, 1), decimation=d, blur=blur, radius=radius, std=std
    ),
    st.integers(1, 4),
    st.sampled_from([1, 2, 3, 4]),
    st.sampled_from(["starck", "gauss"]),
    st.integers(0, 7),
    st.floats(0.5, 3.0),
)


# -- oracles --------------------------------------------------------------------

def test_frozen_gauss_taps():
    t = blur_taps("gauss", 7, 2.0)
    assert len(t) == 15
    assert t[7] == pytest.approx(0.19950134764464328, rel=1e-12)
    assert t[0] == pytest.approx(0.0004364074260381732, rel=1e-12)
    assert np.array_equal(blur_taps("gauss", 0, 2.0), [1.0])


def test_starck_taps():
    assert np.allclose(STARCK_TAPS * 16, [1, 4, 6, 4, 1])


@pytest.mark.parametrize(
    "d, blur, expected",
    [(1, "starck", 1.0), (2, "starck", 0.5), (4, "starck", 0.28125),
     (1, "gauss", 1.0), (4, "gauss", 0.25002492961117306)],
)
def test_frozen_sigma_max(d, blur, expected):
    assert sigma_max_A(model(16, 16, d=d, blur=blur)) == pytest.approx(expected, rel=1e-12)


def test_impulse_response_is_stamped_kernel():
    m = model(8, 8, d=1)
    x = np.zeros((64, 1))
    x[0] = 1.0
    out = apply_A(x, m).reshape(8, 8)
    k = np.outer(STARCK_TAPS, STARCK_TAPS)
    expected = np.zeros((8, 8))
    for i in range(5):
        for j in range(5):
            expected[(i - 2) % 8, (j - 2) % 8] = k[i, j]
    assert np.allclose(out, expected, atol=1e-15)


@pytest.mark.parametrize("blur", ["starck", "gauss"])
def test_apply_A_matches_dense_matrix(blur):
    m = model(8, 8, d=4, blur=blur)
    X = np.random.default_rng(0).standard_normal((64, 2))
    assert np.allclose(apply_A(X, m), dense_A(m) @ X, atol=1e-12)
    Y = np.random.default_rng(1).standard_normal((4, 2))
    assert np.allclose(apply_A_adjoint(Y, m), dense_A(m).T @ Y, atol=1e-12)


def test_sigma_max_matches_dense_svd():
    for d in (1, 2, 4):
        m = model(8, 16, d=d, blur="gauss")
        assert sigma_max_A(m) == pytest.approx(np.linalg.norm(dense_A(m), 2), rel=1e-10)


def test_apply_R_examples():
    X = np.random.default_rng(2).standard_normal((4, 3))
    assert np.array_equal(apply_R(X, np.eye(3)), X)
    assert np.allclose(apply_R(X, np.ones((3, 1)) / 3), X.mean(axis=1, keepdims=True))
    R = np.random.default_rng(3).standard_normal((3, 2))
    naive = np.array([[sum(X[i, k] * R[k, j] for k in range(3)) for j in range(2)] for i in range(4)])
    assert np.allclose(apply_R(X, R), naive, atol=1e-14)
    with pytest.raises(DimensionError):
        apply_R(X, np.ones((2, 2)))


def test_box_response_layout():
    R = box_response(10, 3)
    assert np.allclose(R.sum(axis=0), 1.0)
    assert [int(np.count_nonzero(R[:, j])) for j in range(3)] == [4, 3, 3]
    assert np.array_equal(parse_response("box:3", 10), R)
    with pytest.raises(ValueError):
        parse_response("gauss:3", 10)


def test_noise_level_and_determinism():
    X = np.full((128 * 128, 8), 0.5)
    Y = add_noise(X, 20.0, seed=7)
    noise = Y - X
    snr = 10 * np.log10(np.sum(X**2) / np.sum(noise**2))
    assert 19.5 <= snr <= 20.5
    assert np.array_equal(Y, add_noise(X, 20.0, seed=7))
    assert not np.array_equal(Y, add_noise(X, 20.0, seed=7, stream=1))
    assert np.array_equal(add_noise(X, np.inf, seed=7), X)
    assert noise_sigma(np.ones((10, 10)), 20.0) == pytest.approx(0.1, rel=1e-14)
    with pytest.raises(UndefinedSnrError):
        add_noise(np.zeros((4, 2)), 20.0, seed=0)


def test_simulation_identity_configuration():
    Z = generate_scene(SpatialDims(8, 8), 3, 2, seed=1)
    m = ForwardModel(Z.dims, np.eye(3), decimation=1, blur="gauss", radius=0)
    y_h, y_m = simulate_observations(Z, m, NoiseSpec(np.inf, np.inf, 0))
    assert np.array_equal(y_h.data, Z.data)
    assert np.array_equal(y_m.data, Z.data)


def test_simulation_shapes_and_dense_oracle():
    Z = generate_scene(SpatialDims(16, 16), 6, 3, seed=2)
    m = ForwardModel(Z.dims, box_response(6, 2), decimation=4)
    y_h, y_m = simulate_observations(Z, m, NoiseSpec(np.inf, np.inf, 0))
    assert (y_h.rows, y_h.cols, y_h.bands) == (4, 4, 6)
    assert (y_m.rows, y_m.cols, y_m.bands) == (16, 16, 2)
    assert np.allclose(y_h.data, dense_A(m) @ Z.data, atol=1e-12)
    noisy_h, noisy_m = simulate_observations(Z, m, NoiseSpec(20, 20, 5))
    assert np.array_equal(noisy_h.data, simulate_observations(Z, m, NoiseSpec(20, 20, 5))[0].data)


def test_simulation_dimension_errors():
    Z = generate_scene(SpatialDims(8, 8), 4, 2, seed=0)
    with pytest.raises(DimensionError):
        simulate_observations(Z, ForwardModel(SpatialDims(16, 16), box_response(4, 2)), NoiseSpec())
    with pytest.raises(DimensionError):
        simulate_observations(Z, ForwardModel(SpatialDims(8, 8), box_response(5, 2)), NoiseSpec())
    with pytest.raises(DimensionError):
        apply_A(np.zeros((10, 1)), ForwardModel(SpatialDims(8, 8), box_response(4, 2)))


def test_model_validation():
    with pytest.raises(ValueError):
        ForwardModel(SpatialDims(10, 8), box_response(4, 2), decimation=4)
    with pytest.raises(ValueError):
        ForwardModel(SpatialDims(8, 8), -box_response(4, 2))
    with pytest.raises(ValueError):
        ForwardModel(SpatialDims(8, 8), box_response(4, 2), lam=-1.0)


def test_model_config_roundtrip():
    m = ForwardModel(SpatialDims(8, 12), box_response(6, 3), decimation=2, blur="gauss", radius=3, std=1.5, lam=0.5)
    back = ForwardModel.from_config(m.to_config())
    assert back.to_config() == m.to_config()
    boxed = ForwardModel.from_config({"rows": 8, "cols": 8, "response": "box:2"}, hs_bands=4)
    assert np.array_equal(boxed.response, box_response(4, 2))


def test_scene_structure():
    Z1 = generate_scene(SpatialDims(16, 16), 8, 1, seed=3)
    ratios = Z1.data / Z1.data[:, :1]
    assert np.allclose(ratios, ratios[0], atol=1e-12)
    Z = generate_scene(SpatialDims(16, 16), 8, 3, seed=4)
    s = np.linalg.svd(Z.data, compute_uv=False)
    assert s[3] <= 1e-10 * s[0]
    assert Z.data.min() >= 0 and Z.data.max() == pytest.approx(1.0)
    assert np.array_equal(Z.data, generate_scene(SpatialDims(16, 16), 8, 3, seed=4).data)
    with pytest.raises(ValueError):
        generate_scene(SpatialDims(4, 4), 2, 3, seed=0)


# -- properties -------------------------------------------------------------------

@given(models, st.integers(0, 2**31))
def test_blur_preserves_constants(m, seed):
    c = np.random.default_rng(seed).uniform(0.1, 2.0, size=3)
    F = np.ones((m.ms_dims.npix, 1)) * c
    assert np.allclose(apply_B(F, m), F, rtol=1e-12)
    assert np.allclose(apply_A(F, m), np.ones((m.hs_dims.npix, 1)) * c, rtol=1e-12)


@given(models, st.integers(0, 2**31))
def test_adjoint_identity(m, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((m.ms_dims.npix, 2))
    y = rng.standard_normal((m.hs_dims.npix, 2))
    lhs, rhs = inner_product(apply_A(x, m), y), inner_product(x, apply_A_adjoint(y, m))
    assert abs(lhs - rhs) <= 1e-10 * h_norm(x) * h_norm(y)


@given(models)
def test_sigma_max_at_most_one(m):
    assert sigma_max_A(m) <= 1 + 1e-9


@given(models, st.integers(0, 2**31))
def test_positive_images_stay_positive(m, seed):
    x = np.random.default_rng(seed).uniform(1e-3, 1.0, (m.ms_dims.npix, 1))
    assert np.all(apply_A(x, m) > 0)


def test_power_method_agrees_with_closed_form():
    m = model(16, 16, d=4, blur="gauss")
    assert operator_norm_A(m, iters=5000) == pytest.approx(sigma_max_A(m), rel=1e-8)
    assert operator_norm_A(m, iters=5000) <= 1 + 1e-9
