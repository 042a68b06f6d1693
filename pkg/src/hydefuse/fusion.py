"""Plug-and-play proximal gradient fusion in the spectral subspace.

The loss is ``l(X) = 1/2 ||A X E - Y_h||^2 + lam/2 ||X E R - Y_m||^2`` over
latents ``X`` (pixels x L_s).  With ``E E^T = I`` its gradient is
``K(X) - b`` where ``K(X) = P1 X + X P2``, ``P1 = A^T A`` and
``P2 = lam (ER)(ER)^T``, and ``b = A^T Y_h E^T + lam Y_m (ER)^T``.  Each
iteration is ``X <- D(X - gamma grad l(X))``: an affine map with linear part
``D o G`` and offset ``D(gamma b)``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import DimensionError, HsiImage, h_norm
from .denoiser import KernelDenoiser, apply as apply_denoiser, operator_bands
from .forward import ForwardModel, apply_A, apply_A_adjoint, sigma_max_A
from .metrics import band_psnr
from .subspace import Subspace, surrogate_latent, to_full

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 10.0


class NumericFailure(FloatingPointError):
    """Iterates became non-finite; ``last_finite`` holds the last good iterate."""

    def __init__(self, message, last_finite=None, trace=None):
        super().__init__(message)
        self.last_finite = last_finite
        self.trace = trace


class DivergenceError(RuntimeError):
    """Successive differences grew past the divergence guard."""

    def __init__(self, message, last_iterate=None, trace=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.trace = trace


@dataclass
class FusionProblem:
    y_h: HsiImage
    y_m: HsiImage
    model: ForwardModel
    sub: Subspace
    denoiser: KernelDenoiser | None = None

    def __post_init__(self):
        m = self.model
        if self.y_h.dims != m.hs_dims or self.y_h.bands != m.hs_bands:
            raise DimensionError(
                f"HS image {self.y_h.rows}x{self.y_h.cols}x{self.y_h.bands} does not match "
                f"model {m.hs_dims.rows}x{m.hs_dims.cols}x{m.hs_bands}"
            )
        if self.y_m.dims != m.ms_dims or self.y_m.bands != m.ms_bands:
            raise DimensionError(
                f"MS image {self.y_m.rows}x{self.y_m.cols}x{self.y_m.bands} does not match "
                f"model {m.ms_dims.rows}x{m.ms_dims.cols}x{m.ms_bands}"
            )
        if self.sub.bands != m.hs_bands:
            raise DimensionError(f"subspace spans {self.sub.bands} bands, HS image has {m.hs_bands}")
        if self.denoiser is not None:
            if self.denoiser.dims != m.ms_dims:
                raise DimensionError("denoiser guide dims differ from the MS grid")
            nb = operator_bands(self.denoiser)
            if nb is not None and nb != self.sub.dim:
                raise DimensionError(f"denoiser built for {nb} bands, subspace dim is {self.sub.dim}")

    @property
    def latent_shape(self) -> tuple:
        return (self.model.ms_dims.npix, self.sub.dim)

    @cached_property
    def ER(self) -> np.ndarray:
        return self.sub.basis @ self.model.response

    @cached_property
    def P2(self) -> np.ndarray:
        return self.model.lam * (self.ER @ self.ER.T)

    @cached_property
    def b(self) -> np.ndarray:
        """Data term ``A^T Y_h E^T + lam Y_m (ER)^T``."""
        hs = apply_A_adjoint(self.y_h.data, self.model) @ self.sub.basis.T
        return hs + self.model.lam * (self.y_m.data @ self.ER.T)

    def check_latent(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape != self.latent_shape:
            raise DimensionError(f"latent must be {self.latent_shape}, got {X.shape}")
        return X

    def surrogate(self) -> np.ndarray:
        return surrogate_latent(self.y_h, self.model.decimation, self.sub)


def K_apply(X: np.ndarray, prob: FusionProblem) -> np.ndarray:
    """``P1 X + X P2`` with ``P1 = A^T A``."""
    X = prob.check_latent(X)
    return apply_A_adjoint(apply_A(X, prob.model), prob.model) + X @ prob.P2


def loss(X: np.ndarray, prob: FusionProblem) -> float:
    X = prob.check_latent(X)
    E = prob.sub.basis
    r_h = apply_A(X, prob.model) @ E - prob.y_h.data
    r_m = X @ prob.ER - prob.y_m.data
    return 0.5 * float(np.vdot(r_h, r_h)) + 0.5 * prob.model.lam * float(np.vdot(r_m, r_m))


def gradient(X: np.ndarray, prob: FusionProblem) -> np.ndarray:
    return K_apply(X, prob) - prob.b


def gradient_step(X: np.ndarray, prob: FusionProblem, gamma: float) -> np.ndarray:
    """Linear gradient-step operator ``G(X) = X - gamma K(X)``."""
    if gamma <= 0:
        raise ValueError("step size must be positive")
    return X - gamma * K_apply(X, prob)


def analytic_beta_bound(prob: FusionProblem) -> float:
    """``sigma_max(A)^2 + lam sigma_max(ER)^2``."""
    s_er = np.linalg.norm(prob.ER, 2) if prob.ER.size else 0.0
    return sigma_max_A(prob.model) ** 2 + prob.model.lam * s_er**2


BETA_POWER_ITERS = 5000


def default_step_size(prob: FusionProblem, frac: float = 1.8, iters: int = BETA_POWER_ITERS):
    """Return ``(gamma, beta, bound)`` with ``gamma = frac / beta``.

    ``beta`` comes from the power method on ``K``; if that fails to converge
    the analytic bound is used instead. Close singular values of ``ER`` make
    the iteration slow, hence the generous iteration cap.
    """
    from .spectral import power_method_beta

    if not 0 < frac < 2:
        raise ValueError(f"step fraction must be in (0, 2), got {frac}")
    bound = analytic_beta_bound(prob)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        beta = power_method_beta(prob, iters=iters)
    if caught or not np.isfinite(beta) or beta <= 0:
        logger.warning("power method did not converge; using analytic bound %.6g", bound)
        beta = bound
    return frac / beta, beta, bound


@dataclass
class FusionOptions:
    gamma: float | None = None
    gamma_frac: float = 1.8
    max_iters: int = 1000
    tol: float = 1e-8
    init: str = "surrogate"
    init_seed: int = 0
    record_trace: bool = True
    ground_truth: HsiImage | None = None

    def __post_init__(self):
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.init not in ("zeros", "ones", "noise", "surrogate"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class TraceRecord:
    iter: int
    diff: float
    loss: float
    psnr: float | None = None


@dataclass
class FusionTrace:
    records: list = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    gamma: float | None = None
    beta: float | None = None

    @property
    def diffs(self) -> np.ndarray:
        return np.array([r.diff for r in self.records])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([np.nan if r.psnr is None else r.psnr for r in self.records])

    def empirical_rate(self, tail: int = 10) -> float:
        """Geometric mean of the last ``tail`` successive-difference ratios."""
        d = self.diffs
        d = d[d > 0]
        if d.size < 2:
            return float("nan")
        ratios = d[1:] / d[:-1]
        return float(np.exp(np.mean(np.log(ratios[-tail:]))))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "diff", "loss", "psnr"])
            for r in self.records:
                writer.writerow([r.iter, repr(r.diff), repr(r.loss), "" if r.psnr is None else repr(r.psnr)])


@dataclass
class FusionResult:
    X: np.ndarray
    Z: HsiImage
    trace: FusionTrace


def initial_latent(prob: FusionProblem, init: str, seed: int = 0) -> np.ndarray:
    shape = prob.latent_shape
    if init == "zeros":
        return np.zeros(shape)
    if init == "ones":
        return np.ones(shape)
    if init == "noise":
        return np.random.default_rng(seed).standard_normal(shape)
    if init == "surrogate":
        return prob.surrogate()
    raise ValueError(f"unknown init {init!r}")


def fixed_point_map(prob: FusionProblem, gamma: float):
    """The affine iteration map ``T(X) = D(X - gamma grad l(X))``."""
    den = prob.denoiser

    def T(X):
        step = X - gamma * gradient(X, prob)
        return step if den is None else apply_denoiser(den, step)

    return T


def run(prob: FusionProblem, opts: FusionOptions | None = None) -> FusionResult:
    """Iterate the PnP-PGD update until the relative step falls below ``tol``."""
    opts = opts or FusionOptions()
    beta = None
    if opts.gamma is None:
        gamma, beta, _ = _step_from_fraction(prob, opts.gamma_frac)
    else:
        gamma = opts.gamma
    if beta is not None and gamma >= 2.0 / beta:
        warnings.warn(
            f"step size {gamma:.4g} >= 2/beta = {2 / beta:.4g}; convergence is not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )

    T = fixed_point_map(prob, gamma)
    trace = FusionTrace(gamma=gamma, beta=beta)
    E = prob.sub.basis
    gt = opts.ground_truth
    X = initial_latent(prob, opts.init, opts.init_seed)
    min_diff = np.inf

    for k in range(1, opts.max_iters + 1):
        X_new = T(X)
        if not np.all(np.isfinite(X_new)):
            trace.iterations_run = k - 1
            raise NumericFailure(f"non-finite iterate at step {k}", last_finite=X, trace=trace)
        diff = h_norm(X_new - X)
        X = X_new
        if opts.record_trace:
            psnr = band_psnr(gt.data, X @ E) if gt is not None else None
            trace.records.append(TraceRecord(k, diff, loss(X, prob), psnr))
        trace.iterations_run = k
        min_diff = min(min_diff, diff)
        if diff > DIVERGENCE_FACTOR * min_diff:
            raise DivergenceError(
                f"successive difference {diff:.3e} exceeds {DIVERGENCE_FACTOR:g}x its minimum "
                f"{min_diff:.3e} at iteration {k} (gamma={gamma:.4g})",
                last_iterate=X,
                trace=trace,
            )
        if diff / max(h_norm(X), np.finfo(float).tiny) < opts.tol:
            trace.converged = True
            break

    logger.info(
        "fusion finished after %d iterations (converged=%s)", trace.iterations_run, trace.converged
    )
    Z = HsiImage.from_matrix(to_full(X, prob.sub), prob.model.ms_dims)
    return FusionResult(X, Z, trace)


def _step_from_fraction(prob: FusionProblem, frac: float):
    """Like :func:`default_step_size` but allows fractions >= 2 (for divergence studies)."""
    if 0 < frac < 2:
        return default_step_size(prob, frac)
    if frac <= 0:
        raise ValueError("step fraction must be positive")
    from .spectral import power_method_beta

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        beta = power_method_beta(prob, iters=BETA_POWER_ITERS)
    return frac / beta, beta, analytic_beta_bound(prob)
