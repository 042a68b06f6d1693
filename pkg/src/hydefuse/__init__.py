"""Hyperspectral/multispectral fusion by plug-and-play gradient descent with kernel denoisers."""

from .core import DimensionError, HsbFormatError, HsiImage, SpatialDims, read_hsb, write_hsb
from .denoiser import DenoiserParams, KernelDenoiser, build_caskd, build_v, build_w, denoise_image
from .forward import ForwardModel, NoiseSpec, box_response, generate_scene, simulate_observations
from .fusion import (
    DivergenceError,
    FusionOptions,
    FusionProblem,
    FusionResult,
    FusionTrace,
    NumericFailure,
    default_step_size,
    gradient,
    loss,
    run,
)
from .metrics import MetricsReport, compute_metrics
from .pipeline import build_problem, synthetic_case
from .subspace import Subspace, estimate_subspace, upsample

__version__ = "0.1.0"

__all__ = [
    "DenoiserParams",
    "DimensionError",
    "DivergenceError",
    "ForwardModel",
    "FusionOptions",
    "FusionProblem",
    "FusionResult",
    "FusionTrace",
    "HsbFormatError",
    "HsiImage",
    "KernelDenoiser",
    "MetricsReport",
    "NoiseSpec",
    "NumericFailure",
    "SpatialDims",
    "Subspace",
    "box_response",
    "build_caskd",
    "build_problem",
    "build_v",
    "build_w",
    "compute_metrics",
    "default_step_size",
    "denoise_image",
    "estimate_subspace",
    "generate_scene",
    "gradient",
    "loss",
    "read_hsb",
    "run",
    "simulate_observations",
    "synthetic_case",
    "upsample",
    "write_hsb",
]
