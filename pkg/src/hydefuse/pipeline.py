"""End-to-end wiring: observations -> subspace -> guide -> denoiser -> problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HsiImage, SpatialDims
from .denoiser import DenoiserParams, build_caskd, build_v, build_w
from .forward import ForwardModel, NoiseSpec, box_response, generate_scene, simulate_observations
from .fusion import FusionProblem
from .subspace import default_dim, estimate_subspace, upsample

_BUILDERS = {"caskd": build_caskd, "w": build_w, "v": build_v}


def build_problem(y_h: HsiImage, y_m: HsiImage, model: ForwardModel,
                  params: DenoiserParams | None = None, subspace_dim: int | None = None,
                  denoiser: str = "caskd") -> FusionProblem:
    """Estimate ``E`` from the upsampled HS image and build the guided denoiser.

    The guide is the upsampled HS image projected on the subspace; it is
    fixed for the whole run so the denoiser stays linear.
    """
    params = params or DenoiserParams()
    surrogate = upsample(y_h, model.decimation)
    sub = estimate_subspace(surrogate, subspace_dim or default_dim(y_h.bands))
    guide = HsiImage.from_matrix(surrogate.data @ sub.basis.T, model.ms_dims)
    den = _BUILDERS[denoiser](guide, params) if denoiser else None
    return FusionProblem(y_h, y_m, model, sub, den)


@dataclass
class SyntheticCase:
    truth: HsiImage
    y_h: HsiImage
    y_m: HsiImage
    model: ForwardModel
    problem: FusionProblem


def synthetic_case(rows: int = 32, cols: int = 32, bands: int = 16, rank: int = 4,
                   ms_bands: int = 4, decimation: int = 4, snr_db: float = 20.0,
                   seed: int = 0, lam: float = 1.0, blur: str = "starck",
                   params: DenoiserParams | None = None, subspace_dim: int | None = None,
                   denoiser: str = "caskd") -> SyntheticCase:
    """Generate a scene, simulate observations and assemble the fusion problem."""
    dims = SpatialDims(rows, cols)
    truth = generate_scene(dims, bands, rank, seed)
    model = ForwardModel(dims, box_response(bands, ms_bands), decimation=decimation,
                         blur=blur, lam=lam)
    y_h, y_m = simulate_observations(truth, model, NoiseSpec(snr_db, snr_db, seed))
    prob = build_problem(y_h, y_m, model, params, subspace_dim, denoiser)
    return SyntheticCase(truth, y_h, y_m, model, prob)


def bicubic_baseline(y_h: HsiImage, decimation: int) -> HsiImage:
    return upsample(y_h, decimation)


def clip01(img: HsiImage) -> HsiImage:
    return img.with_data(np.clip(img.data, 0.0, 1.0))
