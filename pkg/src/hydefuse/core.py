"""Image container, the matrix inner-product space and the HSB file format.

A hyperspectral cube with ``rows x cols`` pixels and ``bands`` bands is held
as a ``(rows*cols, bands)`` matrix: one column per band, pixels vectorized in
row-major spatial order (pixel ``i = r*cols + c``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HSB_MAGIC = "HSB1"


class HsbFormatError(ValueError):
    """Malformed or truncated HSB container."""


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


@dataclass(frozen=True)
class SpatialDims:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"spatial dims must be positive, got {self.rows}x{self.cols}")

    @property
    def npix(self) -> int:
        return self.rows * self.cols

    def scaled(self, factor: int) -> "SpatialDims":
        return SpatialDims(self.rows * factor, self.cols * factor)


@dataclass(frozen=True)
class HsiImage:
    """A hyperspectral image stored as a pixels x bands matrix."""

    rows: int
    cols: int
    bands: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape != (self.rows * self.cols, self.bands):
            raise DimensionError(
                f"data shape {data.shape} does not match "
                f"({self.rows}*{self.cols}, {self.bands})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains non-finite entries")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_matrix(cls, data: np.ndarray, dims: SpatialDims) -> "HsiImage":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        return cls(dims.rows, dims.cols, data.shape[1], data)

    @classmethod
    def from_cube(cls, cube: np.ndarray) -> "HsiImage":
        cube = np.asarray(cube, dtype=np.float64)
        if cube.ndim == 2:
            cube = cube[:, :, None]
        rows, cols, bands = cube.shape
        return cls(rows, cols, bands, cube.reshape(rows * cols, bands))

    @property
    def dims(self) -> SpatialDims:
        return SpatialDims(self.rows, self.cols)

    @property
    def npix(self) -> int:
        return self.rows * self.cols

    def cube(self) -> np.ndarray:
        """View of the data as a ``(rows, cols, bands)`` array."""
        return self.data.reshape(self.rows, self.cols, self.bands)

    def with_data(self, data: np.ndarray) -> "HsiImage":
        return HsiImage.from_matrix(data, self.dims)


def to_cube(X: np.ndarray, dims: SpatialDims) -> np.ndarray:
    X = np.asarray(X)
    if X.shape[0] != dims.npix:
        raise DimensionError(f"{X.shape[0]} pixels do not match {dims.rows}x{dims.cols}")
    return X.reshape(dims.rows, dims.cols, -1)


def to_matrix(cube: np.ndarray) -> np.ndarray:
    return cube.reshape(cube.shape[0] * cube.shape[1], -1)


def inner_product(X1: np.ndarray, X2: np.ndarray) -> float:
    """Trace inner product ``tr(X1^T X2)``: sum over bands of per-band dot products."""
    X1 = np.asarray(X1, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    if X1.shape != X2.shape:
        raise DimensionError(f"shape mismatch {X1.shape} vs {X2.shape}")
    return float(np.vdot(X1, X2))


def h_norm(X: np.ndarray) -> float:
    X = np.asarray(X, dtype=np.float64)
    return float(np.sqrt(np.vdot(X, X)))


# HSB container: one JSON header line, then band-major little-endian float64.

def write_hsb(path, image: HsiImage) -> None:
    header = {
        "magic": HSB_MAGIC,
        "rows": image.rows,
        "cols": image.cols,
        "bands": image.bands,
        "dtype": "f64",
    }
    payload = np.ascontiguousarray(image.data.T).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload)


def read_hsb(path) -> HsiImage:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise HsbFormatError(f"{path}: missing HSB header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HsbFormatError(f"{path}: malformed HSB header") from exc
    if header.get("magic") != HSB_MAGIC or header.get("dtype") != "f64":
        raise HsbFormatError(f"{path}: not an HSB1/f64 container")
    rows, cols, bands = int(header["rows"]), int(header["cols"]), int(header["bands"])
    body = raw[newline + 1:]
    expected = rows * cols * bands * 8
    if len(body) != expected:
        raise HsbFormatError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return HsiImage(rows, cols, bands, flat.reshape(bands, rows * cols).T.copy())
