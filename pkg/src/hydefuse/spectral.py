"""Spectral estimates for the fusion operators.

Power iteration gives ``beta`` (top eigenvalue of the gradient operator
``K``) and the contraction factor ``mu`` (top singular value of the linear
part ``P = D o G`` of the fixed-point map, via ``P* P`` with
``P* = G o W o V``).  Dense materialisations of the same handles serve as
oracles on tiny problems.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import HsiImage, h_norm, inner_product
from .denoiser import (
    DenoiserParams,
    KernelDenoiser,
    apply as apply_denoiser,
    apply_adjoint as apply_denoiser_adjoint,
    build_caskd,
)
from .forward import ForwardModel, apply_A, apply_A_adjoint

logger = logging.getLogger(__name__)

DENSE_UNKNOWN_LIMIT = 8192


class PowerMethodWarning(RuntimeWarning):
    pass


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearOperatorHandle:
    """A linear map on ``shape``-sized matrices together with its adjoint."""

    forward: Callable
    adjoint: Callable
    shape: tuple
    name: str = ""

    def __call__(self, X):
        return self.forward(X)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def normal(self) -> "LinearOperatorHandle":
        """``F* o F`` (self-adjoint, PSD)."""
        return LinearOperatorHandle(
            lambda X: self.adjoint(self.forward(X)),
            lambda X: self.adjoint(self.forward(X)),
            self.shape,
            f"{self.name}*{self.name}",
        )


def identity_handle(shape) -> LinearOperatorHandle:
    return LinearOperatorHandle(lambda X: np.array(X, dtype=np.float64), lambda X: np.array(X, dtype=np.float64), tuple(shape), "I")


def scaling_handle(shape, c: float) -> LinearOperatorHandle:
    return LinearOperatorHandle(lambda X: c * np.asarray(X), lambda X: c * np.asarray(X), tuple(shape), f"{c}I")


def matrix_handle(M: np.ndarray, shape) -> LinearOperatorHandle:
    """Handle acting on row-major-vectorised matrices by the dense matrix ``M``."""
    shape = tuple(shape)
    return LinearOperatorHandle(
        lambda X: (M @ np.ravel(X)).reshape(shape),
        lambda X: (M.T @ np.ravel(X)).reshape(shape),
        shape,
        "M",
    )


def k_handle(prob) -> LinearOperatorHandle:
    from .fusion import K_apply

    f = lambda X: K_apply(X, prob)  # noqa: E731
    return LinearOperatorHandle(f, f, prob.latent_shape, "K")


def g_handle(prob, gamma: float) -> LinearOperatorHandle:
    from .fusion import gradient_step

    f = lambda X: gradient_step(X, prob, gamma)  # noqa: E731
    return LinearOperatorHandle(f, f, prob.latent_shape, "G")


def denoiser_handle(den: KernelDenoiser, shape) -> LinearOperatorHandle:
    return LinearOperatorHandle(
        lambda X: apply_denoiser(den, X),
        lambda X: apply_denoiser_adjoint(den, X),
        tuple(shape),
        den.kind.upper(),
    )


def p_handle(prob, gamma: float) -> LinearOperatorHandle:
    """Linear part ``P = D o G`` of the fixed-point map; ``P* = G o W o V``."""
    G = g_handle(prob, gamma)
    if prob.denoiser is None:
        return G
    D = denoiser_handle(prob.denoiser, prob.latent_shape)
    return LinearOperatorHandle(
        lambda X: D.forward(G.forward(X)),
        lambda X: G.adjoint(D.adjoint(X)),
        prob.latent_shape,
        "P",
    )


# -- power iteration ------------------------------------------------------------

@dataclass
class PowerResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def power_iteration(apply_sym: Callable, shape, iters: int = 500, tol: float = 1e-9,
                    seed: int = 0) -> PowerResult:
    """Largest eigenvalue of a self-adjoint PSD map by Rayleigh-quotient power iteration."""
    if iters < 1:
        raise ValueError("need at least one power iteration")
    x = np.random.default_rng(seed).standard_normal(shape)
    x /= h_norm(x)
    history = []
    prev = None
    for k in range(1, iters + 1):
        y = apply_sym(x)
        est = inner_product(x, y)
        history.append(est)
        ny = h_norm(y)
        if ny == 0.0:
            return PowerResult(0.0, x, k, True, history)
        x = y / ny
        if prev is not None and abs(est - prev) <= tol * abs(est):
            return PowerResult(est, x, k, True, history)
        prev = est
    return PowerResult(history[-1], x, iters, False, history)


def _warn_unconverged(res: PowerResult, what: str, estimate: float):
    if not res.converged:
        warnings.warn(
            f"power method for {what} did not converge in {res.iterations} iterations; "
            f"returning best estimate {estimate:.6g}",
            PowerMethodWarning,
            stacklevel=3,
        )


def power_method_beta(prob, iters: int = 500, tol: float = 1e-9, seed: int = 0) -> float:
    """``beta``: largest eigenvalue of ``K(X) = A^T A X + X P2``."""
    res = power_iteration(k_handle(prob).forward, prob.latent_shape, iters, tol, seed)
    _warn_unconverged(res, "beta", res.value)
    return res.value


def power_method_mu(P: LinearOperatorHandle, iters: int = 500, tol: float = 1e-9,
                    seed: int = 0) -> float:
    """Operator norm of ``P`` as ``sqrt(lambda_max(P* P))``."""
    res = power_iteration(P.normal().forward, P.shape, iters, tol, seed)
    mu = float(np.sqrt(max(res.value, 0.0)))
    _warn_unconverged(res, "mu", mu)
    return mu


def power_method_mu_result(P: LinearOperatorHandle, iters: int = 500, tol: float = 1e-9,
                           seed: int = 0) -> PowerResult:
    return power_iteration(P.normal().forward, P.shape, iters, tol, seed)


def operator_norm_A(model: ForwardModel, iters: int = 500, tol: float = 1e-12, seed: int = 0) -> float:
    """``sigma_max(A)`` for the blur + decimation operator (one band suffices)."""
    shape = (model.ms_dims.npix, 1)
    res = power_iteration(lambda x: apply_A_adjoint(apply_A(x, model), model), shape, iters, tol, seed)
    return float(np.sqrt(max(res.value, 0.0)))


# -- dense oracles ----------------------------------------------------------------

def dense_operator_matrix(op: LinearOperatorHandle) -> np.ndarray:
    """Standard-basis matrix of ``op``: column ``j`` is ``vec(op(E_j))`` (row-major vec)."""
    n = op.size
    if n > DENSE_UNKNOWN_LIMIT:
        raise CapacityError(f"{n} unknowns exceed the dense limit of {DENSE_UNKNOWN_LIMIT}")
    M = np.empty((n, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        M[:, j] = np.ravel(op.forward(basis.reshape(op.shape)))
        basis[j] = 0.0
    return M


# -- contraction sweep ------------------------------------------------------------

@dataclass
class ContractionRow:
    gamma_frac: float
    sigma1: float
    sigma2: float
    mu: float
    mu_dense: float | None = None


@dataclass
class ContractionReport:
    beta: float
    rows: list

    @property
    def all_contractive(self) -> bool:
        return all(r.mu < 1.0 - 1e-9 for r in self.rows)

    def table(self) -> dict:
        """``{(sigma1, sigma2): [(gamma_frac, mu), ...]}``."""
        out = {}
        for r in self.rows:
            out.setdefault((r.sigma1, r.sigma2), []).append((r.gamma_frac, r.mu))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gamma_frac", "sigma1", "sigma2", "mu"])
            for r in self.rows:
                w.writerow([r.gamma_frac, r.sigma1, r.sigma2, repr(r.mu)])


def verify_contraction_suite(prob, guide: HsiImage, gamma_grid, sigma_grid,
                             params: DenoiserParams | None = None, dense_checks: int = 0,
                             iters: int = 2000, tol: float = 1e-12) -> ContractionReport:
    """Sweep ``mu`` over step fractions and ``(sigma1, sigma2)`` denoiser settings.

    ``gamma_grid`` holds fractions of ``2/beta`` numerators (``gamma = g/beta``).
    The first ``dense_checks`` grid points are cross-checked against the
    largest singular value of the dense ``P``.
    """
    from .fusion import default_step_size

    params = params or DenoiserParams()
    _, beta, _ = default_step_size(prob, 1.0)
    rows = []
    checked = 0
    for s1, s2 in sigma_grid:
        den = build_caskd(guide, replace(params, sigma_w=s1, sigma_v=s2))
        sub_prob = replace(prob, denoiser=den)
        for g in gamma_grid:
            P = p_handle(sub_prob, g / beta)
            mu = power_method_mu(P, iters=iters, tol=tol)
            mu_dense = None
            if checked < dense_checks:
                mu_dense = float(np.linalg.norm(dense_operator_matrix(P), 2))
                checked += 1
            logger.info("gamma=%.3g/beta sigma=(%.4g, %.4g): mu=%.6f", g, s1, s2, mu)
            rows.append(ContractionRow(float(g), float(s1), float(s2), mu, mu_dense))
    return ContractionReport(beta, rows)


# -- norm-preservation check --------------------------------------------------------

@dataclass
class NormPreservationReport:
    applicable: bool
    passed: bool
    fixed_dim: int = 0
    checked: int = 0
    message: str = ""


def norm_preservation_check(op: LinearOperatorHandle, samples: int = 20, seed: int = 0,
                            fix_tol: float = 1e-8) -> NormPreservationReport:
    """Check that a self-adjoint op with spectrum in (-1, 1] only preserves norms of fixed points.

    Random probes mix components inside and outside the eigenvalue-1
    eigenspace.  A probe whose norm is preserved must be fixed; a probe with
    its fixed component projected out must shrink strictly.
    """
    M = dense_operator_matrix(op)
    scale = max(1.0, np.abs(M).max())
    if np.abs(M - M.T).max() > 1e-9 * scale:
        return NormPreservationReport(False, False, message="operator is not self-adjoint")
    lam, H = np.linalg.eigh((M + M.T) / 2)
    if lam[0] <= -1.0 + 1e-9 or lam[-1] > 1.0 + 1e-9:
        return NormPreservationReport(False, False, message=f"spectrum [{lam[0]:.3g}, {lam[-1]:.3g}] not in (-1, 1]")

    fixed = lam >= 1.0 - fix_tol
    Hf = H[:, fixed]
    rng = np.random.default_rng(seed)
    n = M.shape[0]
    checked = 0
    for _ in range(samples):
        # probe in fix(op): norm must be preserved and the probe fixed
        if Hf.shape[1]:
            x = Hf @ rng.standard_normal(Hf.shape[1])
            y = M @ x
            nx = np.linalg.norm(x)
            if np.linalg.norm(y) >= nx * (1 - 1e-10) and np.linalg.norm(y - x) > 1e-8 * nx:
                return NormPreservationReport(True, False, int(fixed.sum()), checked,
                                              "norm-preserving probe is not fixed")
            checked += 1
        # generic probe and its projection off fix(op)
        x = rng.standard_normal(n)
        for probe in (x, x - Hf @ (Hf.T @ x)):
            nx = np.linalg.norm(probe)
            if nx < 1e-12:
                continue
            y = M @ probe
            ny = np.linalg.norm(y)
            if ny >= nx * (1 - 1e-10) and np.linalg.norm(y - probe) > 1e-8 * nx:
                return NormPreservationReport(True, False, int(fixed.sum()), checked,
                                              "norm-preserving probe is not fixed")
            checked += 1
        proj = x - Hf @ (Hf.T @ x)
        nproj = np.linalg.norm(proj)
        if nproj > 1e-12 and not np.linalg.norm(M @ proj) < nproj:
            return NormPreservationReport(True, False, int(fixed.sum()), checked,
                                          "probe outside fix(op) did not shrink")
    return NormPreservationReport(True, True, int(fixed.sum()), checked, "ok")
