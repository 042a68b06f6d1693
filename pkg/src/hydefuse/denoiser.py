"""Symmetric doubly-stochastic kernel denoisers built from a fixed guide image.

Two linear smoothers are provided, plus their cascade:

* ``V`` (bandwise): band ``b`` is filtered by its own weight matrix, built
  from patches of band ``b`` of the guide and a tent window ``h``.
* ``W`` (high-dimensional): one weight matrix shared by every band, built
  from cluster features of full multi-band patches.  Its kernel
  ``K_ij = h(i-j) sum_c f_i[c] f_j[c]`` factorises, so ``K x`` is a sum of
  ``C`` tent convolutions of feature-weighted images.
* CasKD: ``V o W``.

Both kernels are symmetrised with the same recipe::

    W = (1/nu) D^-1/2 K D^-1/2 + diag(e - e_hat/nu),
    D = diag(K e),  e_hat = D^-1/2 K D^-1/2 e,  nu = max(e_hat)

which keeps ``W`` symmetric, nonnegative, row-stochastic and PSD.  Patch
distances are averaged over the patch dimension, so the RBF bandwidths are
per-pixel-value standard deviations on the [0, 1] intensity scale.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz
from scipy.spatial.distance import cdist

from .core import DimensionError, HsiImage, SpatialDims

logger = logging.getLogger(__name__)

DENSE_PIXEL_LIMIT = 4096


class CapacityError(RuntimeError):
    """Requested dense materialisation exceeds the size guard."""


@dataclass(frozen=True)
class DenoiserParams:
    patch_size: int = 3
    window: int = 5
    sigma_w: float = 0.039
    sigma_v: float = 0.039
    clusters: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ValueError(f"patch size must be odd and >= 1, got {self.patch_size}")
        if self.window < 1:
            raise ValueError(f"window half-width must be >= 1, got {self.window}")
        if self.sigma_w <= 0 or self.sigma_v <= 0:
            raise ValueError("RBF bandwidths must be positive")
        if self.clusters < 1:
            raise ValueError("need at least one cluster")


# -- building blocks --------------------------------------------------------

def tent(offsets, S: int) -> np.ndarray:
    """1-D hat ``max(0, 1 - |t|/S)``."""
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(offsets, dtype=np.float64)) / S)


@lru_cache(maxsize=32)
def tent_matrix(n: int, S: int) -> np.ndarray:
    """``n x n`` banded Toeplitz matrix of the hat, clipped at the borders (no wraparound)."""
    M = toeplitz(tent(np.arange(n), S))
    M.flags.writeable = False
    return M


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[r, c] = img[r+dy, c+dx]`` where that pixel exists, else 0."""
    out = np.zeros_like(img)
    rows, cols = img.shape[:2]
    r0, r1 = max(0, -dy), min(rows, rows - dy)
    c0, c1 = max(0, -dx), min(cols, cols - dx)
    if r0 < r1 and c0 < c1:
        out[r0:r1, c0:c1] = img[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
    return out


def extract_patches(guide: HsiImage, k: int) -> np.ndarray:
    """Row ``i`` is the ``k x k x L`` neighbourhood of pixel ``i`` (reflect padding).

    Entries are ordered (row offset, column offset, band), row-major.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"patch size must be odd, got {k}")
    if k > min(guide.rows, guide.cols):
        raise ValueError(f"patch size {k} exceeds image size {guide.rows}x{guide.cols}")
    r = k // 2
    cube = guide.cube()
    mode = "reflect" if min(guide.rows, guide.cols) > 1 else "edge"
    padded = np.pad(cube, ((r, r), (r, r), (0, 0)), mode=mode)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(0, 1))
    # windows: (rows, cols, L, k, k) -> (rows, cols, k, k, L)
    patches = np.moveaxis(windows, 2, -1)
    return np.ascontiguousarray(patches).reshape(guide.npix, k * k * guide.bands)


def cluster_patches(patches: np.ndarray, C: int, seed: int = 0) -> np.ndarray:
    """k-means (k-means++ seeding, 50 Lloyd iterations max) centroids, ``(C, dim)``."""
    from sklearn.cluster import KMeans
    from sklearn.exceptions import ConvergenceWarning

    patches = np.asarray(patches, dtype=np.float64)
    if C > patches.shape[0]:
        raise ValueError(f"cannot form {C} clusters from {patches.shape[0]} patches")
    if C == 1:
        return patches.mean(axis=0, keepdims=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        km = KMeans(n_clusters=C, init="k-means++", n_init=1, max_iter=50, random_state=seed)
        km.fit(patches)
    return km.cluster_centers_


def rbf(sqdist: np.ndarray, sigma: float, dim: int) -> np.ndarray:
    return np.exp(-np.asarray(sqdist) / (2.0 * sigma**2 * dim))


def symmetrize(K: np.ndarray) -> np.ndarray:
    """Dense symmetric doubly-stochastic weights from a symmetric kernel matrix."""
    dsum = K.sum(axis=1)
    isq = 1.0 / np.sqrt(dsum)
    M = isq[:, None] * K * isq[None, :]
    ehat = M.sum(axis=1)
    nu = ehat.max()
    return M / nu + np.diag(1.0 - ehat / nu)


# -- operator state ----------------------------------------------------------

@dataclass(frozen=True)
class HighDimKernel:
    """State of ``W``: cluster features and the precomputed normalisation."""

    dims: SpatialDims
    window: int
    features: np.ndarray      # (N, C), entries in (0, 1]
    d_isqrt: np.ndarray       # D^-1/2, (N,)
    ehat: np.ndarray          # (N,)
    nu: float
    _ft: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_ft", np.ascontiguousarray(self.features.T))

    @property
    def diag(self) -> np.ndarray:
        return 1.0 - self.ehat / self.nu

    def kernel_apply(self, X: np.ndarray) -> np.ndarray:
        """``K X`` via ``sum_c f_c * (h conv (f_c * X))``, zero outside the image."""
        rows, cols = self.dims.rows, self.dims.cols
        Tr, Tc = tent_matrix(rows, self.window), tent_matrix(cols, self.window)
        F = self._ft                                          # (C, N)
        C, L = F.shape[0], X.shape[1]
        Y = (F[:, :, None] * X[None, :, :]).reshape(C, rows, cols * L)
        Y = np.matmul(Tr, Y).reshape(C, rows, cols, L).transpose(0, 2, 1, 3)
        Y = np.matmul(Tc, np.ascontiguousarray(Y).reshape(C, cols, rows * L))
        Y = Y.reshape(C, cols, rows, L).transpose(0, 2, 1, 3).reshape(C, rows * cols, L)
        return np.einsum("cn,cnl->nl", F, Y)

    def apply(self, X: np.ndarray) -> np.ndarray:
        s = self.d_isqrt[:, None]
        return s * self.kernel_apply(s * X) / self.nu + self.diag[:, None] * X

    def dense(self) -> np.ndarray:
        """Dense ``W`` evaluated entry-by-entry from the kernel definition."""
        n = self.dims.npix
        if n > DENSE_PIXEL_LIMIT:
            raise CapacityError(f"dense W needs {n}x{n} entries; limit is {DENSE_PIXEL_LIMIT} pixels")
        H = _pairwise_hat(self.dims, self.window)
        K = H * (self.features @ self.features.T)
        return symmetrize(K)


@dataclass(frozen=True)
class BandwiseKernel:
    """State of ``V``: per-band normalised window weights.

    ``weights[o, :, b]`` is the weight linking pixel ``i`` to ``i + offsets[o]``
    in band ``b``, already scaled by ``1/(nu_b sqrt(D_i D_j))``; zero where the
    neighbour falls outside the image.
    """

    dims: SpatialDims
    window: int
    offsets: tuple
    weights: np.ndarray       # (n_offsets, N, L)
    diag: np.ndarray          # (N, L)
    patches: np.ndarray       # (N, L, k*k) guide patches, kept for the dense oracle
    sigma: float

    @property
    def bands(self) -> int:
        return self.diag.shape[1]

    def apply(self, X: np.ndarray) -> np.ndarray:
        rows, cols = self.dims.rows, self.dims.cols
        m = self.window - 1
        padded = np.pad(X.reshape(rows, cols, -1), ((m, m), (m, m), (0, 0)))
        out = self.diag * X
        for o, (dy, dx) in enumerate(self.offsets):
            nb = padded[m + dy:m + dy + rows, m + dx:m + dx + cols]
            out += self.weights[o] * nb.reshape(X.shape)
        return out

    def dense(self) -> list:
        """Dense ``W^(b)`` for each band, from the kernel definition."""
        n = self.dims.npix
        if n > DENSE_PIXEL_LIMIT:
            raise CapacityError(f"dense V needs {n}x{n} entries; limit is {DENSE_PIXEL_LIMIT} pixels")
        H = _pairwise_hat(self.dims, self.window)
        mats = []
        for b in range(self.bands):
            P = self.patches[:, b, :]
            K = H * rbf(cdist(P, P, "sqeuclidean"), self.sigma, P.shape[1])
            mats.append(symmetrize(K))
        return mats


def _pairwise_hat(dims: SpatialDims, S: int) -> np.ndarray:
    r, c = np.divmod(np.arange(dims.npix), dims.cols)
    return tent(r[:, None] - r[None, :], S) * tent(c[:, None] - c[None, :], S)


@dataclass(frozen=True)
class KernelDenoiser:
    """Immutable linear denoiser: ``kind`` is ``"w"``, ``"v"`` or ``"caskd"``."""

    kind: str
    dims: SpatialDims
    w: HighDimKernel | None = None
    v: BandwiseKernel | None = None

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return apply(self, X)


# -- construction -------------------------------------------------------------

def _require_neighbour_coupling(coupling_right, coupling_down, what: str):
    """Zero weight between 4-neighbours would split the pixel graph in floating point."""
    if np.any(coupling_right <= 0) or np.any(coupling_down <= 0):
        raise FloatingPointError(
            f"{what} weights between neighbouring pixels underflow to zero; increase the bandwidth"
        )


def build_w(guide: HsiImage, params: DenoiserParams) -> KernelDenoiser:
    patches = extract_patches(guide, params.patch_size)
    centroids = cluster_patches(patches, params.clusters, params.seed)
    dim = patches.shape[1]
    features = rbf(cdist(patches, centroids, "sqeuclidean"), params.sigma_w, dim)
    if np.any(features <= 0):
        raise FloatingPointError("cluster features underflowed; increase sigma_w")
    if params.window > 1:
        Fc = features.reshape(guide.rows, guide.cols, -1)
        _require_neighbour_coupling((Fc[:, :-1] * Fc[:, 1:]).sum(-1), (Fc[:-1] * Fc[1:]).sum(-1), "W")
    partial = HighDimKernel(guide.dims, params.window, features, np.ones(guide.npix), np.ones(guide.npix), 1.0)
    dsum = partial.kernel_apply(np.ones((guide.npix, 1)))[:, 0]
    isq = 1.0 / np.sqrt(dsum)
    ehat = isq * partial.kernel_apply(isq[:, None])[:, 0]
    nu = float(ehat.max())
    logger.debug("built W: %d clusters, nu=%.6f", params.clusters, nu)
    return KernelDenoiser(
        "w", guide.dims, w=HighDimKernel(guide.dims, params.window, features, isq, ehat, nu)
    )


def build_v(guide: HsiImage, params: DenoiserParams) -> KernelDenoiser:
    k, S = params.patch_size, params.window
    rows, cols, L = guide.rows, guide.cols, guide.bands
    patches = extract_patches(guide, k).reshape(guide.npix, k * k, L)
    patches = np.ascontiguousarray(np.swapaxes(patches, 1, 2))   # (N, L, k*k)
    pcube = patches.reshape(rows, cols, L, k * k)
    ones = np.ones((rows, cols, 1))

    offsets = tuple((dy, dx) for dy in range(-(S - 1), S) for dx in range(-(S - 1), S))
    raw = np.empty((len(offsets), rows, cols, L))
    for o, (dy, dx) in enumerate(offsets):
        valid = _shift(ones, dy, dx)
        sq = ((pcube - _shift(pcube, dy, dx)) ** 2).sum(axis=-1)
        raw[o] = tent(dy, S) * tent(dx, S) * rbf(sq, params.sigma_v, k * k) * valid

    if S > 1:
        right, down = offsets.index((0, 1)), offsets.index((1, 0))
        _require_neighbour_coupling(raw[right][:, :-1], raw[down][:-1], "V")
    dsum = raw.sum(axis=0)                        # (rows, cols, L)
    isq = 1.0 / np.sqrt(dsum)
    for o, (dy, dx) in enumerate(offsets):
        raw[o] *= isq * _shift(isq, dy, dx)
    ehat = raw.sum(axis=0)
    nu = ehat.reshape(-1, L).max(axis=0)          # one nu per band
    raw /= nu
    diag = 1.0 - ehat / nu
    n = guide.npix
    return KernelDenoiser(
        "v",
        guide.dims,
        v=BandwiseKernel(
            guide.dims, S, offsets, raw.reshape(len(offsets), n, L), diag.reshape(n, L),
            patches, params.sigma_v,
        ),
    )


def build_caskd(guide: HsiImage, params: DenoiserParams) -> KernelDenoiser:
    w = build_w(guide, params).w
    v = build_v(guide, params).v
    return KernelDenoiser("caskd", guide.dims, w=w, v=v)


# -- application --------------------------------------------------------------

def _check(den: KernelDenoiser, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != den.dims.npix:
        raise DimensionError(f"expected {den.dims.npix} pixels, got shape {X.shape}")
    if den.v is not None and X.shape[1] != den.v.bands:
        raise DimensionError(f"bandwise denoiser built for {den.v.bands} bands, got {X.shape[1]}")
    return X


def apply(den: KernelDenoiser, X: np.ndarray) -> np.ndarray:
    """Denoise ``X``; CasKD applies ``W`` first, then ``V``."""
    X = _check(den, X)
    if den.kind == "w":
        return den.w.apply(X)
    if den.kind == "v":
        return den.v.apply(X)
    return den.v.apply(den.w.apply(X))


def apply_adjoint(den: KernelDenoiser, X: np.ndarray) -> np.ndarray:
    """Adjoint under the trace inner product: ``W o V`` for CasKD, self otherwise."""
    X = _check(den, X)
    if den.kind == "caskd":
        return den.w.apply(den.v.apply(X))
    return apply(den, X)


def dense_materialize(den: KernelDenoiser):
    """Dense oracle: ``W`` for ``"w"``, ``[W^(b)]`` for ``"v"``, ``[W^(b) W]`` for CasKD."""
    if den.kind == "w":
        return den.w.dense()
    if den.kind == "v":
        return den.v.dense()
    W = den.w.dense()
    return [Wb @ W for Wb in den.v.dense()]


def operator_bands(den: KernelDenoiser) -> int | None:
    return den.v.bands if den.v is not None else None


def denoise_image(noisy: HsiImage, params: DenoiserParams, kind: str = "caskd",
                  guide: HsiImage | None = None) -> HsiImage:
    """Standalone denoising; the noisy image is its own guide unless one is given."""
    guide = noisy if guide is None else guide
    builders = {"w": build_w, "v": build_v, "caskd": build_caskd}
    if kind not in builders:
        raise ValueError(f"unknown denoiser kind {kind!r}")
    den = builders[kind](guide, params)
    return noisy.with_data(apply(den, noisy.data))


__all__ = [
    "BandwiseKernel",
    "CapacityError",
    "DenoiserParams",
    "HighDimKernel",
    "KernelDenoiser",
    "apply",
    "apply_adjoint",
    "build_caskd",
    "build_v",
    "build_w",
    "cluster_patches",
    "dense_materialize",
    "denoise_image",
    "extract_patches",
    "symmetrize",
    "tent",
]
