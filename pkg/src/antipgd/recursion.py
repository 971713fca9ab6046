"""Closed-form second moments and Monte Carlo for w_{k+1} = rho_k w_k + eps_k.

The scalar-factor linear recursion is the exactly solvable model behind the
widening-valley analysis. With zero-mean draws xi_k of per-coordinate
variance sigma^2 (so E|xi_k|^2 = d sigma^2) and the convention that an empty
product equals one:

* uncorrelated noise, eps_k = xi_k:
    E|w_{k+1}|^2 = (prod_{j<=k} rho_j^2) |w_0|^2
                   + sum_{i=0}^{k} (prod_{j=i+1}^{k} rho_j^2) d sigma^2

* anticorrelated increments, eps_0 = xi_0 and eps_k = xi_k - xi_{k-1}:
    E|w_{k+1}|^2 = (prod_{j<=k} rho_j^2) |w_0|^2 + (1 + nu_k) d sigma^2
    nu_k = sum_{i=0}^{k-1} (1 - rho_{i+1})^2 prod_{j=i+2}^{k} rho_j^2
         = rho_k^2 nu_{k-1} + (1 - rho_k)^2,   nu_0 = 0.

For constant rho in [0, 1) the sums are geometric and the limits are
2 d sigma^2 / (1 + rho) (anticorrelated: decreasing in rho) versus
d sigma^2 / (1 - rho^2) (uncorrelated: increasing in rho). For stochastic
rho_k in [0, 1] with rho_k != 1 at positive probability, nu_k <= 1 always,
so the anticorrelated limit is bounded by 2 d sigma^2.

Everything is evaluated incrementally in O(K) via the nu-style recursions
(algebraically identical to the double products, but stable at K ~ 1e5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .noise import NoiseSpec, derive_seed, _raw_block

__all__ = [
    "RhoSpec",
    "RecursionMC",
    "expected_sqnorm_const_rho",
    "limit_const_rho",
    "expected_sqnorm_sequence",
    "nu_sequence",
    "simulate_recursion",
]

MODES = ("anticorrelated", "uncorrelated")


def _check_mode(mode: str):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class RhoSpec:
    """Contraction-factor schedule: constant, explicit sequence, or i.i.d.
    uniform per step (stochastic mode requires [low, high] within [0, 1])."""

    mode: str
    value: float = 0.0
    sequence: tuple = ()
    low: float = 0.0
    high: float = 1.0

    @classmethod
    def constant(cls, value: float) -> "RhoSpec":
        if not 0.0 <= value < 1.0:
            raise ValueError("constant rho must lie in [0, 1)")
        return cls("constant", value=value)

    @classmethod
    def from_sequence(cls, values) -> "RhoSpec":
        seq = tuple(float(v) for v in values)
        if not seq:
            raise ValueError("empty rho sequence")
        if not all(np.isfinite(seq)):
            raise ValueError("rho sequence must be finite")
        return cls("sequence", sequence=seq)

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "RhoSpec":
        if not 0.0 <= low <= high <= 1.0:
            raise ValueError("stochastic rho range must satisfy 0 <= low <= high <= 1")
        return cls("stochastic", low=low, high=high)


def expected_sqnorm_const_rho(rho, k, w0_sqnorm, d, sigma2, mode) -> float:
    """Closed-form E|w_{k+1}|^2 for constant rho in [0, 1).

    Geometric-series evaluation of the sequence formulas; note the
    anticorrelated transient sums k terms, sum_{m<k} rho^{2m}
    = (1 - rho^{2k}) / (1 - rho^2), while the uncorrelated one sums k+1.
    """
    _check_mode(mode)
    if not 0.0 <= rho < 1.0:
        raise ValueError("constant rho must lie in [0, 1)")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    if k < 0:
        raise ValueError("k must be >= 0")
    decay = rho ** (2 * (k + 1)) * w0_sqnorm
    if mode == "anticorrelated":
        transient = (1.0 - rho) ** 2 * (1.0 - rho ** (2 * k)) / (1.0 - rho * rho)
        return decay + (1.0 + transient) * d * sigma2
    return decay + (1.0 - rho ** (2 * (k + 1))) / (1.0 - rho * rho) * d * sigma2


def limit_const_rho(rho, d, sigma2, mode) -> float:
    """lim_k E|w_k|^2: 2 d sigma^2/(1+rho) (anti) or d sigma^2/(1-rho^2)."""
    _check_mode(mode)
    if not 0.0 <= rho < 1.0:
        raise ValueError("constant rho must lie in [0, 1)")
    if mode == "anticorrelated":
        return 2.0 * d * sigma2 / (1.0 + rho)
    return d * sigma2 / (1.0 - rho * rho)


def expected_sqnorm_sequence(rho_seq, w0_sqnorm, d, sigma2, mode) -> np.ndarray:
    """E|w_{k+1}|^2 for k = 0..K-1 under an arbitrary rho_0..rho_{K-1}."""
    _check_mode(mode)
    rho = np.asarray(rho_seq, dtype=np.float64)
    if rho.size == 0:
        raise ValueError("empty rho sequence")
    if not np.all(np.isfinite(rho)):
        raise ValueError("rho sequence must be finite")
    out = np.empty(rho.size)
    decay = 1.0
    acc = 0.0 if mode == "anticorrelated" else 1.0
    for k, r in enumerate(rho):
        decay *= r * r
        if mode == "anticorrelated":
            if k > 0:
                acc = r * r * acc + (1.0 - r) ** 2
            out[k] = decay * w0_sqnorm + (1.0 + acc) * d * sigma2
        else:
            if k > 0:
                acc = r * r * acc + 1.0
            out[k] = decay * w0_sqnorm + acc * d * sigma2
    return out


def nu_sequence(rho_seq) -> np.ndarray:
    """nu_k = rho_k^2 nu_{k-1} + (1 - rho_k)^2 with nu_0 = 0.

    Input rho_1..rho_K must lie in [0, 1]; returns [nu_0, ..., nu_K], all
    guaranteed <= 1.
    """
    rho = np.asarray(rho_seq, dtype=np.float64)
    if np.any(rho < 0.0) or np.any(rho > 1.0):
        raise ValueError("rho values must lie in [0, 1]")
    out = np.empty(rho.size + 1)
    out[0] = 0.0
    nu = 0.0
    for k, r in enumerate(rho, start=1):
        nu = r * r * nu + (1.0 - r) ** 2
        out[k] = nu
    return out


@dataclass
class RecursionMC:
    """Per-step Monte Carlo estimate of E|w_k|^2 (k = 1..K)."""

    steps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int


def simulate_recursion(
    rho_spec: RhoSpec,
    noise_spec: NoiseSpec,
    n_samples: int,
    n_steps: int,
    w0_sqnorm: float = 0.0,
) -> RecursionMC:
    """Simulate the recursion with fresh draws per sample.

    The noise mode and distribution come from ``noise_spec``; stochastic rho
    values are sampled i.i.d. per step and per sample from an independent
    stream derived from the noise seed. w_0 is the constant vector with the
    requested squared norm (only |w_0|^2 enters the second moments).
    """
    if n_samples < 100:
        raise ValueError("need n_samples >= 100")
    if n_steps < 1:
        raise ValueError("need n_steps >= 1")
    d = noise_spec.dim
    if d < 1:
        raise ValueError("noise_spec.dim must be >= 1")
    anti = noise_spec.correlation == "anticorrelated"

    if rho_spec.mode == "sequence" and len(rho_spec.sequence) != n_steps:
        raise ValueError("rho sequence length must equal n_steps")

    rng = np.random.Generator(np.random.Philox(key=noise_spec.seed))
    rho_rng = np.random.Generator(np.random.Philox(key=derive_seed(noise_spec.seed, "rho")))

    w = np.full((n_samples, d), np.sqrt(w0_sqnorm / d))
    xi_prev = np.zeros((n_samples, d))
    sums = np.empty(n_steps)
    sumsq = np.empty(n_steps)

    chunk = max(1, min(n_steps, int(4e6 / (n_samples * d))))
    pos = 0
    while pos < n_steps:
        t = min(chunk, n_steps - pos)
        xi = _raw_block(rng, noise_spec.distribution, noise_spec.sigma, (t, n_samples, d))
        if rho_spec.mode == "constant":
            rho = np.full((t, n_samples), rho_spec.value)
        elif rho_spec.mode == "sequence":
            seq = np.asarray(rho_spec.sequence[pos : pos + t])
            rho = np.repeat(seq[:, None], n_samples, axis=1)
        else:
            rho = rho_rng.uniform(rho_spec.low, rho_spec.high, size=(t, n_samples))
        kernels.recursion_block(w, xi_prev, rho, xi, anti, sums[pos : pos + t], sumsq[pos : pos + t])
        pos += t

    mean = sums / n_samples
    var = np.maximum(sumsq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    stderr = np.sqrt(var / n_samples)
    return RecursionMC(np.arange(1, n_steps + 1), mean, stderr, n_samples)
