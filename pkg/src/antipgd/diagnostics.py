"""Regularization and flatness diagnostics.

* the trace-regularized loss  Ltilde(z) = L(z) + (sigma^2/2) tr(Hess L(z))
  and its gradient (analytic trace gradient where the landscape provides
  one, central finite differences otherwise);
* an exact conditional-mean oracle for one noise-shifted gradient step
  under symmetric Bernoulli perturbations (full sign-pattern enumeration);
* a Monte Carlo expected-sharpness estimator E[L(w* + eps)] - L(w*), whose
  small-radius limit recovers (s^2/2) tr(Hess L(w*));
* finite-difference validation of analytic gradients and Hessian traces;
* the average squared trace-regularized gradient norm along a trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .landscapes import Landscape

__all__ = [
    "ModifiedLossSpec",
    "modified_loss",
    "modified_grad",
    "expected_sharpness_mc",
    "conditional_mean_exact",
    "fd_grad",
    "fd_hessian_diag_sum",
    "finite_diff_check",
    "avg_reg_grad_sqnorm",
]

# Central-difference steps balancing truncation against roundoff in float64.
GRAD_FD_SCALE = 1e-5
TRACE_FD_SCALE = 1e-4


@dataclass(frozen=True)
class ModifiedLossSpec:
    """Trace-regularized loss spec: landscape, sigma^2, trace-gradient method.

    method 'analytic' uses the landscape's exact trace gradient when
    implemented and falls back to central differences of the trace with
    step fd_step (default TRACE_FD_SCALE * (1 + |z|)); method 'fd' always
    differentiates numerically.
    """

    landscape: Landscape
    sigma2: float
    method: str = "analytic"
    fd_step: float | None = None

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if self.method not in ("analytic", "fd"):
            raise ValueError(f"unknown trace-gradient method {self.method!r}")
        if self.fd_step is not None and self.fd_step <= 0:
            raise ValueError("fd_step must be > 0")


def modified_loss(spec: ModifiedLossSpec, z: np.ndarray) -> float:
    """L(z) + (sigma^2/2) tr(Hess L(z))."""
    return spec.landscape.loss(z) + 0.5 * spec.sigma2 * spec.landscape.hessian_trace(z)


def _trace_grad(spec: ModifiedLossSpec, z: np.ndarray) -> np.ndarray:
    if spec.method == "analytic":
        try:
            return spec.landscape.hessian_trace_grad(z)
        except NotImplementedError:
            pass
    z = np.asarray(z, dtype=np.float64)
    h = spec.fd_step or TRACE_FD_SCALE * (1.0 + float(np.linalg.norm(z)))
    g = np.empty_like(z)
    probe = z.copy()
    for i in range(z.size):
        probe[i] = z[i] + h
        hi = spec.landscape.hessian_trace(probe)
        probe[i] = z[i] - h
        lo = spec.landscape.hessian_trace(probe)
        probe[i] = z[i]
        g[i] = (hi - lo) / (2.0 * h)
    return g


def modified_grad(spec: ModifiedLossSpec, z: np.ndarray) -> np.ndarray:
    """grad L(z) + (sigma^2/2) grad tr(Hess L)(z)."""
    g = spec.landscape.grad(z)
    if spec.sigma2 == 0.0:
        return g
    return g + 0.5 * spec.sigma2 * _trace_grad(spec, z)


@dataclass(frozen=True)
class SharpnessEstimate:
    value: float
    stderr: float


def expected_sharpness_mc(
    landscape: Landscape, w_star: np.ndarray, s: float, n_samples: int, seed: int = 0
) -> SharpnessEstimate:
    """Monte Carlo E_{eps ~ N(0, s^2 I)}[L(w* + eps)] - L(w*).

    For small s this approaches (s^2/2) tr(Hess L(w*)), so value * 2 / s^2
    doubles as a stochastic trace estimator.
    """
    if s <= 0:
        raise ValueError("s must be > 0")
    if n_samples < 1000:
        raise ValueError("need n_samples >= 1000")
    w_star = np.asarray(w_star, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(key=seed))
    base = landscape.loss(w_star)
    vals = np.empty(n_samples)
    for i in range(n_samples):
        vals[i] = landscape.loss(w_star + s * rng.standard_normal(w_star.size))
    est = float(vals.mean() - base)
    sem = float(vals.std(ddof=1) / np.sqrt(n_samples))
    return SharpnessEstimate(est, sem)


def conditional_mean_exact(landscape: Landscape, z: np.ndarray, eta: float, sigma: float) -> np.ndarray:
    """Exact E[z - eta grad L(z + xi)] under xi in {-sigma, +sigma}^dim.

    Enumerates all 2^dim sign patterns, so the landscape dimension is capped
    at 20. For losses with vanishing fifth derivatives and symmetric
    Bernoulli noise this equals z - eta grad Ltilde(z) exactly.
    """
    z = np.asarray(z, dtype=np.float64)
    dim = z.size
    if dim > 20:
        raise ValueError(f"enumeration is limited to dim <= 20, got {dim}")
    total = np.zeros(dim)
    n_patterns = 1 << dim
    bits = np.arange(dim)
    for code in range(n_patterns):
        signs = np.where((code >> bits) & 1, sigma, -sigma)
        total += landscape.grad(z + signs)
    return z - eta * total / n_patterns


def fd_grad(landscape: Landscape, w: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central-difference gradient of the landscape loss."""
    w = np.asarray(w, dtype=np.float64)
    h = h or GRAD_FD_SCALE * (1.0 + float(np.linalg.norm(w)))
    g = np.empty_like(w)
    probe = w.copy()
    for i in range(w.size):
        probe[i] = w[i] + h
        hi = landscape.loss(probe)
        probe[i] = w[i] - h
        lo = landscape.loss(probe)
        probe[i] = w[i]
        g[i] = (hi - lo) / (2.0 * h)
    return g


def fd_hessian_diag_sum(landscape: Landscape, w: np.ndarray, h: float | None = None) -> float:
    """Sum of second central differences: the finite-difference Hessian trace."""
    w = np.asarray(w, dtype=np.float64)
    h = h or TRACE_FD_SCALE * (1.0 + float(np.linalg.norm(w)))
    center = landscape.loss(w)
    total = 0.0
    probe = w.copy()
    for i in range(w.size):
        probe[i] = w[i] + h
        hi = landscape.loss(probe)
        probe[i] = w[i] - h
        lo = landscape.loss(probe)
        probe[i] = w[i]
        total += (hi - 2.0 * center + lo) / (h * h)
    return total


@dataclass
class FinDiffReport:
    """Worst-case relative disagreement between analytic and FD derivatives."""

    grad_max_rel_err: float
    trace_max_rel_err: float
    n_points: int

    def rows(self):
        return [
            ("grad_vs_central_diff", self.grad_max_rel_err),
            ("trace_vs_diag_sum", self.trace_max_rel_err),
        ]


def finite_diff_check(landscape: Landscape, points) -> FinDiffReport:
    """Validate grad and hessian_trace against finite differences of loss."""
    grad_err = 0.0
    trace_err = 0.0
    n = 0
    for w in points:
        w = np.asarray(w, dtype=np.float64)
        g = landscape.grad(w)
        g_fd = fd_grad(landscape, w)
        scale = max(float(np.linalg.norm(g_fd)), 1e-12)
        grad_err = max(grad_err, float(np.linalg.norm(g - g_fd)) / scale)
        tr = landscape.hessian_trace(w)
        tr_fd = fd_hessian_diag_sum(landscape, w)
        tscale = max(abs(tr_fd), 1e-12)
        trace_err = max(trace_err, abs(tr - tr_fd) / tscale)
        n += 1
    return FinDiffReport(grad_err, trace_err, n)


def avg_reg_grad_sqnorm(zs, spec: ModifiedLossSpec) -> float:
    """(1/N) sum_n |grad Ltilde(z_n)|^2 over the given iterates."""
    zs = np.atleast_2d(np.asarray(zs, dtype=np.float64))
    if zs.shape[0] == 0:
        raise ValueError("empty trajectory")
    total = 0.0
    for z in zs:
        g = modified_grad(spec, z)
        total += float(g @ g)
    return total / zs.shape[0]
