"""Spectral subspace estimation and latent <-> full-image maps."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, HsiImage, SpatialDims, read_hsb, write_hsb


@dataclass(frozen=True)
class Subspace:
    """Orthonormal-row spectral basis ``E`` of shape ``(dim, L_h)``."""

    basis: np.ndarray

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
        if E.shape[0] > E.shape[1]:
            raise DimensionError(f"basis has more rows than bands: {E.shape}")
        object.__setattr__(self, "basis", E)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def bands(self) -> int:
        return self.basis.shape[1]

    def save(self, path) -> None:
        E = self.basis
        write_hsb(path, HsiImage(E.shape[0], E.shape[1], 1, E.reshape(-1, 1)))

    @classmethod
    def load(cls, path) -> "Subspace":
        img = read_hsb(path)
        if img.bands != 1:
            raise ValueError(f"{path}: subspace container must have one band")
        return cls(img.data[:, 0].reshape(img.rows, img.cols))


def _keys_weights(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic-convolution weights for offsets ``t`` (|t| < 2)."""
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    w[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    w[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return w


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def cubic_interp_matrix(n_in: int, factor: int) -> np.ndarray:
    """``(n_in*factor, n_in)`` bicubic interpolation matrix along one axis.

    Output sample ``u`` sits at input coordinate ``u / factor``, matching the
    phase-0 decimation grid, so input samples are reproduced exactly.
    """
    n_out = n_in * factor
    M = np.zeros((n_out, n_in))
    x = np.arange(n_out) / factor
    base = np.floor(x).astype(int)
    for off in (-1, 0, 1, 2):
        j = base + off
        w = _keys_weights(x - j)
        np.add.at(M, (np.arange(n_out), _reflect_index(j, n_in)), w)
    return M


def upsample(Y_h: HsiImage, factor: int) -> HsiImage:
    """Bicubic (Keys, a=-0.5) upsampling of every band by ``factor``."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return Y_h
    Mr = cubic_interp_matrix(Y_h.rows, factor)
    Mc = cubic_interp_matrix(Y_h.cols, factor)
    cube = np.einsum("ur,rcb,vc->uvb", Mr, Y_h.cube(), Mc, optimize=True)
    return HsiImage.from_cube(cube)


def _canonical_signs(V: np.ndarray) -> np.ndarray:
    pivots = np.argmax(np.abs(V), axis=1)
    signs = np.sign(V[np.arange(V.shape[0]), pivots])
    signs[signs == 0] = 1.0
    return V * signs[:, None]


def estimate_subspace(Y: HsiImage, dim: int) -> Subspace:
    """Top-``dim`` right singular vectors of ``Y`` (not mean-centred)."""
    n, L = Y.data.shape
    if not 1 <= dim <= min(n, L):
        raise ValueError(f"subspace dim must be in [1, {min(n, L)}], got {dim}")
    _, s, Vt = np.linalg.svd(Y.data, full_matrices=False)
    tol = s[0] * max(n, L) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if dim > rank:
        warnings.warn(
            f"subspace dim {dim} exceeds numerical rank {rank}; trailing rows span a null space",
            RuntimeWarning,
            stacklevel=2,
        )
    return Subspace(_canonical_signs(Vt[:dim]))


def to_full(X: np.ndarray, sub: Subspace) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != sub.dim:
        raise DimensionError(f"latent has {X.shape[1]} bands, subspace dim is {sub.dim}")
    return X @ sub.basis


def to_latent(Z: np.ndarray, sub: Subspace) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[1] != sub.bands:
        raise DimensionError(f"image has {Z.shape[1]} bands, subspace expects {sub.bands}")
    return Z @ sub.basis.T


def default_dim(bands: int) -> int:
    return min(10, bands)


def surrogate_latent(y_h: HsiImage, factor: int, sub: Subspace) -> np.ndarray:
    """Guide / initial latent: the upsampled HS image projected on the subspace."""
    return to_latent(upsample(y_h, factor).data, sub)


__all__ = [
    "Subspace",
    "SpatialDims",
    "cubic_interp_matrix",
    "default_dim",
    "estimate_subspace",
    "surrogate_latent",
    "to_full",
    "to_latent",
    "upsample",
]
