"""Reference-based quality metrics for fused images (peak value 1)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DimensionError, HsiImage

PSNR_CAP = 100.0
UIQI_WINDOW = 8


@dataclass(frozen=True)
class MetricsReport:
    psnr: float
    rmse: float
    sam: float
    ergas: float
    uiqi: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    def table(self) -> str:
        return "\n".join(f"{k:<6}{v:>14.6f}" for k, v in asdict(self).items())


def _psnr_from_mse(mse):
    mse = np.asarray(mse, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.where(mse > 0, -10.0 * np.log10(np.where(mse > 0, mse, 1.0)), PSNR_CAP)
    return np.minimum(out, PSNR_CAP)


def band_psnr(ref: np.ndarray, est: np.ndarray) -> float:
    """Mean over bands of ``10 log10(1 / MSE_b)``, each band capped at 100 dB."""
    mse = np.mean((np.asarray(ref) - np.asarray(est)) ** 2, axis=0)
    return float(np.mean(_psnr_from_mse(mse)))


def global_psnr(ref: np.ndarray, est: np.ndarray) -> float:
    return float(_psnr_from_mse(np.mean((np.asarray(ref) - np.asarray(est)) ** 2)))


def rmse(ref: np.ndarray, est: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(ref) - np.asarray(est)) ** 2)))


def sam(ref: np.ndarray, est: np.ndarray) -> float:
    """Mean spectral angle in degrees, skipping pixels with a zero spectrum.

    Uses the half-angle form ``2 atan2(|u - v|, |u + v|)`` on unit spectra,
    which stays accurate for nearly parallel pairs where ``arccos`` does not.
    """
    nr = np.linalg.norm(ref, axis=1)
    ne = np.linalg.norm(est, axis=1)
    keep = (nr > 0) & (ne > 0)
    if not np.any(keep):
        return 0.0
    u = ref[keep] / nr[keep, None]
    v = est[keep] / ne[keep, None]
    ang = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1))
    return float(np.degrees(np.mean(ang)))


def ergas(ref: np.ndarray, est: np.ndarray, scale: int) -> float:
    if scale < 1:
        raise ValueError("resolution ratio must be >= 1")
    rmse_b = np.sqrt(np.mean((ref - est) ** 2, axis=0))
    mean_b = np.mean(ref, axis=0)
    return float(100.0 / scale * np.sqrt(np.mean((rmse_b / mean_b) ** 2)))


def uiqi_band(x: np.ndarray, y: np.ndarray, window: int = UIQI_WINDOW) -> float:
    """Mean Wang-Bovik index over all ``window x window`` windows (stride 1)."""
    wr = min(window, x.shape[0])
    wc = min(window, x.shape[1])
    X = sliding_window_view(x, (wr, wc)).reshape(-1, wr * wc)
    Y = sliding_window_view(y, (wr, wc)).reshape(-1, wr * wc)
    mx, my = X.mean(axis=1), Y.mean(axis=1)
    vx = X.var(axis=1)
    vy = Y.var(axis=1)
    cxy = np.mean((X - mx[:, None]) * (Y - my[:, None]), axis=1)
    var_sum = vx + vy
    mean_sq = mx**2 + my**2
    q = np.zeros_like(mx)
    both_flat = var_sum == 0
    q[both_flat] = 1.0
    ok = ~both_flat & (mean_sq > 0)
    q[ok] = 4.0 * cxy[ok] * mx[ok] * my[ok] / (var_sum[ok] * mean_sq[ok])
    return float(np.mean(q))


def uiqi(ref: HsiImage, est: HsiImage) -> float:
    rc, ec = ref.cube(), est.cube()
    return float(np.mean([uiqi_band(rc[:, :, b], ec[:, :, b]) for b in range(ref.bands)]))


def compute_metrics(reference: HsiImage, estimate: HsiImage, scale: int = 1,
                    global_mse_psnr: bool = False) -> MetricsReport:
    if (reference.rows, reference.cols, reference.bands) != (estimate.rows, estimate.cols, estimate.bands):
        raise DimensionError("reference and estimate shapes differ")
    if scale < 1:
        raise ValueError("resolution ratio must be >= 1")
    ref, est = reference.data, estimate.data
    psnr = global_psnr(ref, est) if global_mse_psnr else band_psnr(ref, est)
    return MetricsReport(
        psnr=psnr,
        rmse=rmse(ref, est),
        sam=sam(ref, est),
        ergas=ergas(ref, est, scale),
        uiqi=uiqi(reference, estimate),
    )
