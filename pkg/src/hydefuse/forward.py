"""Degradation operators, noise injection and observation simulation.

The HS observation is ``Y_h = A Z + noise`` with ``A = S B`` (circular blur
followed by decimation at phase 0); the MS observation is ``Y_m = Z R + noise``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from .core import DimensionError, HsiImage, SpatialDims, to_cube, to_matrix

STARCK_TAPS = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

# stream tags so the HS and MS noise draws are independent but jointly seeded
_HS_STREAM = 0
_MS_STREAM = 1


class UndefinedSnrError(ValueError):
    """SNR is undefined for an all-zero signal."""


def blur_taps(kind: str, radius: int = 7, std: float = 2.0) -> np.ndarray:
    """1-D symmetric unit-sum taps; the 2-D blur is their outer product."""
    if kind == "starck":
        return STARCK_TAPS.copy()
    if kind == "gauss":
        if radius < 0 or std <= 0:
            raise ValueError("gaussian psf needs radius >= 0 and std > 0")
        t = np.arange(-radius, radius + 1, dtype=np.float64)
        taps = np.exp(-(t**2) / (2.0 * std**2))
        return taps / taps.sum()
    raise ValueError(f"unknown blur kind {kind!r}")


def box_response(bands: int, k: int) -> np.ndarray:
    """Spectral response averaging ``k`` contiguous, near-equal groups of bands."""
    if not 1 <= k <= bands:
        raise ValueError(f"box response needs 1 <= K <= {bands}, got {k}")
    R = np.zeros((bands, k))
    for j, idx in enumerate(np.array_split(np.arange(bands), k)):
        R[idx, j] = 1.0 / len(idx)
    return R


def parse_response(spec, bands: int) -> np.ndarray:
    if isinstance(spec, str):
        if not spec.startswith("box:"):
            raise ValueError(f"response string must look like 'box:K', got {spec!r}")
        return box_response(bands, int(spec[4:]))
    return np.asarray(spec, dtype=np.float64)


@dataclass(frozen=True)
class ForwardModel:
    """Spatial blur + decimation ``A = S B``, spectral response ``R`` and loss weight."""

    ms_dims: SpatialDims
    response: np.ndarray
    decimation: int = 4
    blur: str = "starck"
    radius: int = 7
    std: float = 2.0
    lam: float = 1.0
    taps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = int(self.decimation)
        if d < 1:
            raise ValueError("decimation must be a positive integer")
        if self.ms_dims.rows % d or self.ms_dims.cols % d:
            raise ValueError(
                f"MS dims {self.ms_dims.rows}x{self.ms_dims.cols} not divisible by {d}"
            )
        R = np.atleast_2d(np.asarray(self.response, dtype=np.float64))
        if np.any(R < 0) or np.any(R.max(axis=0) <= 0):
            raise ValueError("spectral response columns must be nonnegative and nonzero")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "response", R)
        object.__setattr__(self, "taps", blur_taps(self.blur, self.radius, self.std))

    @property
    def hs_dims(self) -> SpatialDims:
        return SpatialDims(self.ms_dims.rows // self.decimation, self.ms_dims.cols // self.decimation)

    @property
    def hs_bands(self) -> int:
        return self.response.shape[0]

    @property
    def ms_bands(self) -> int:
        return self.response.shape[1]

    def to_config(self) -> dict:
        return {
            "rows": self.ms_dims.rows,
            "cols": self.ms_dims.cols,
            "blur": self.blur,
            "radius": self.radius,
            "std": self.std,
            "decimation": self.decimation,
            "lambda": self.lam,
            "response": self.response.tolist(),
        }

    @classmethod
    def from_config(cls, cfg: dict, hs_bands: int | None = None) -> "ForwardModel":
        response = cfg.get("response", "box:4")
        if isinstance(response, str):
            if hs_bands is None:
                raise ValueError("a 'box:K' response needs the HS band count")
            response = parse_response(response, hs_bands)
        return cls(
            ms_dims=SpatialDims(int(cfg["rows"]), int(cfg["cols"])),
            response=np.asarray(response, dtype=np.float64),
            decimation=int(cfg.get("decimation", 4)),
            blur=cfg.get("blur", "starck"),
            radius=int(cfg.get("radius", 7)),
            std=float(cfg.get("std", 2.0)),
            lam=float(cfg.get("lambda", 1.0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_config())


def _circular_blur(cube: np.ndarray, taps: np.ndarray) -> np.ndarray:
    r = len(taps) // 2
    out = np.zeros_like(cube)
    for t, w in zip(range(-r, r + 1), taps):
        out += w * np.roll(cube, t, axis=0)
    res = np.zeros_like(cube)
    for t, w in zip(range(-r, r + 1), taps):
        res += w * np.roll(out, t, axis=1)
    return res


def apply_B(X: np.ndarray, model: ForwardModel) -> np.ndarray:
    """Circular separable blur of every column (pixels x bands)."""
    cube = to_cube(np.asarray(X, dtype=np.float64), model.ms_dims)
    return to_matrix(_circular_blur(cube, model.taps))


def apply_A(X: np.ndarray, model: ForwardModel) -> np.ndarray:
    """``S B X``: blur each band, then keep samples at (0, d, 2d, ...) in both axes."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.ms_dims.npix:
        raise DimensionError(f"expected {model.ms_dims.npix} pixels, got shape {X.shape}")
    d = model.decimation
    cube = _circular_blur(to_cube(X, model.ms_dims), model.taps)
    return to_matrix(np.ascontiguousarray(cube[::d, ::d, :]))


def apply_A_adjoint(Yl: np.ndarray, model: ForwardModel) -> np.ndarray:
    """``B^T S^T Y``: zero-insertion upsampling then blur (the kernel is symmetric)."""
    Yl = np.asarray(Yl, dtype=np.float64)
    hs = model.hs_dims
    if Yl.ndim != 2 or Yl.shape[0] != hs.npix:
        raise DimensionError(f"expected {hs.npix} pixels, got shape {Yl.shape}")
    d = model.decimation
    up = np.zeros((model.ms_dims.rows, model.ms_dims.cols, Yl.shape[1]))
    up[::d, ::d, :] = to_cube(Yl, hs)
    return to_matrix(_circular_blur(up, model.taps))


def _axis_gram_spectrum(taps: np.ndarray, n: int, d: int) -> np.ndarray:
    """Eigenvalues of ``S B B^T S^T`` along one axis (a circulant on the coarse grid)."""
    ring = np.zeros(n)
    r = len(taps) // 2
    for t, w in zip(range(-r, r + 1), taps):
        ring[t % n] += w
    autocorr = np.real(np.fft.ifft(np.abs(np.fft.fft(ring)) ** 2))
    return np.real(np.fft.fft(autocorr[::d]))


def sigma_max_A(model: ForwardModel) -> float:
    """Largest singular value of ``A = S B``, exactly, from the aliased blur spectrum."""
    d = model.decimation
    er = _axis_gram_spectrum(model.taps, model.ms_dims.rows, d).max()
    ec = _axis_gram_spectrum(model.taps, model.ms_dims.cols, d).max()
    return float(np.sqrt(max(er, 0.0) * max(ec, 0.0)))


def apply_R(X: np.ndarray, Rmat: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Rmat = np.asarray(Rmat, dtype=np.float64)
    if X.shape[1] != Rmat.shape[0]:
        raise DimensionError(f"cannot multiply {X.shape} by {Rmat.shape}")
    return X @ Rmat


def noise_sigma(X: np.ndarray, snr_db: float) -> float:
    """Noise std giving ``10 log10(||X||^2 / (N sigma^2)) = snr_db``."""
    energy = float(np.vdot(X, X))
    if energy == 0.0:
        raise UndefinedSnrError("SNR is undefined for an all-zero signal")
    return float(np.sqrt(energy / (X.size * 10.0 ** (snr_db / 10.0))))


def add_noise(X: np.ndarray, snr_db: float, seed, stream: int = 0) -> np.ndarray:
    """Add i.i.d. Gaussian noise at the requested SNR; ``snr_db=inf`` is a no-op."""
    X = np.asarray(X, dtype=np.float64)
    if np.isinf(snr_db) and snr_db > 0:
        return X.copy()
    sigma = noise_sigma(X, snr_db)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream])
    return X + sigma * rng.standard_normal(X.shape)


@dataclass(frozen=True)
class NoiseSpec:
    snr_h_db: float = 20.0
    snr_m_db: float = 20.0
    seed: int = 0


def simulate_observations(Z: HsiImage, model: ForwardModel, noise: NoiseSpec):
    """Return the noisy ``(Y_h, Y_m)`` pair for ground truth ``Z``."""
    if Z.dims != model.ms_dims:
        raise DimensionError(f"scene is {Z.rows}x{Z.cols}, model expects {model.ms_dims}")
    if Z.bands != model.hs_bands:
        raise DimensionError(f"scene has {Z.bands} bands, response expects {model.hs_bands}")
    yh = add_noise(apply_A(Z.data, model), noise.snr_h_db, noise.seed, _HS_STREAM)
    ym = add_noise(apply_R(Z.data, model.response), noise.snr_m_db, noise.seed, _MS_STREAM)
    return HsiImage.from_matrix(yh, model.hs_dims), HsiImage.from_matrix(ym, model.ms_dims)


def generate_scene(dims: SpatialDims, bands: int, rank: int, seed: int) -> HsiImage:
    """Piecewise-smooth synthetic scene of exact spectral rank ``rank``, scaled to [0, 1].

    Each of the ``rank`` spatial fields mixes a smooth random field with a
    piecewise-constant region map; each spectral signature is a smoothed
    nonnegative random curve.
    """
    if not 1 <= rank <= bands:
        raise ValueError(f"need 1 <= rank <= bands, got rank={rank}, bands={bands}")
    rng = np.random.default_rng(seed)
    scale = max(dims.rows, dims.cols) / 8.0
    fields = []
    for _ in range(rank):
        smooth = gaussian_filter(rng.standard_normal((dims.rows, dims.cols)), scale, mode="wrap")
        regions = gaussian_filter(rng.standard_normal((dims.rows, dims.cols)), scale, mode="wrap")
        f = smooth / (np.abs(smooth).max() + 1e-12) + (regions > 0)
        fields.append((f - f.min() + 0.1).ravel())
    spectra = []
    for _ in range(rank):
        s = gaussian_filter1d(rng.random(bands), max(bands / 8.0, 0.5), mode="nearest")
        spectra.append(s + 0.05)
    Z = np.stack(fields, axis=1) @ np.stack(spectra, axis=0)
    Z /= Z.max()
    return HsiImage.from_matrix(Z, dims)
