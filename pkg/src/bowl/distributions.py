"""Exact samplers and log-densities for the latent-variable updates.

Everything here is a deterministic function of (parameters, rng state):
identical seeds reproduce identical draws bit-for-bit. Samplers are
stateless and safe to use concurrently as long as each thread owns its
own Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

# Below this, the inverse-Gaussian mean 1/sqrt(chi) is so large that the
# half-order GIG is indistinguishable from its chi=0 Gamma limit.
CHI_DEGENERATE = 1e-12


@dataclass(frozen=True)
class InvGaussianParams:
    """Inverse-Gaussian with mean `mu` and shape `lambda_shape`."""

    mu: float
    lambda_shape: float

    def __post_init__(self):
        if not (self.mu > 0):
            raise ValueError(f"inverse-Gaussian mean must be positive, got {self.mu}")
        if not (self.lambda_shape > 0):
            raise ValueError(f"inverse-Gaussian shape must be positive, got {self.lambda_shape}")


@dataclass(frozen=True)
class GigHalfParams:
    """Generalized inverse Gaussian of fixed order 1/2.

    Density proportional to x^{-1/2} exp{-(chi/x + psi*x)/2} on x > 0.
    chi = 0 is the documented degenerate case (a Gamma(1/2, psi/2) limit).
    """

    psi: float
    chi: float

    def __post_init__(self):
        if not (self.psi > 0):
            raise ValueError(f"psi must be positive, got {self.psi}")
        if not (self.chi >= 0):
            raise ValueError(f"chi must be nonnegative, got {self.chi}")


class MvnParams:
    """Multivariate normal given by its mean and precision matrix.

    The precision Cholesky factor is computed once at construction;
    a LinAlgError here means the precision is not positive definite
    (degenerate data or a caller bug, not a sampling failure).
    """

    def __init__(self, mean: np.ndarray, precision: np.ndarray):
        mean = np.asarray(mean, dtype=float)
        precision = np.asarray(precision, dtype=float)
        if mean.ndim != 1 or precision.shape != (mean.size, mean.size):
            raise ValueError("mean must be length-p and precision p x p")
        if not np.allclose(precision, precision.T):
            raise ValueError("precision matrix must be symmetric")
        self.mean = mean
        self.precision = precision
        self.chol_lower = np.linalg.cholesky(precision)


def _invgauss_draw(mu, lambda_shape, rng: np.random.Generator):
    """Michael-Schucany-Haas transformation-with-rejection, vectorized.

    The small root of the transformed quadratic is evaluated as
    mu / (1 + t + sqrt(t^2 + 2t)) with t = mu*y/(2*lambda), which is
    algebraically identical to the textbook form but free of the
    catastrophic cancellation it suffers for large y.
    """
    mu = np.asarray(mu, dtype=float)
    y = rng.standard_normal(size=mu.shape) ** 2
    t = mu * y / (2.0 * lambda_shape)
    x_small = mu / (1.0 + t + np.sqrt(t * t + 2.0 * t))
    u = rng.uniform(size=mu.shape)
    return np.where(u <= mu / (mu + x_small), x_small, mu * mu / x_small)


def sample_inverse_gaussian(params: InvGaussianParams, rng: np.random.Generator) -> float:
    """Draw one value from IG(mu, lambda_shape)."""
    return float(_invgauss_draw(np.float64(params.mu), params.lambda_shape, rng))


def _gig_half_draw_vec(psi: float, chi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vector of independent GIG(1/2, psi, chi_i) draws.

    Uses the reciprocal identity: X ~ GIG(1/2, psi, chi) iff
    1/X ~ IG(sqrt(psi/chi), psi). Entries with chi below the degeneracy
    cutoff fall back to the exact chi=0 limit Gamma(1/2, rate psi/2).
    """
    chi = np.asarray(chi, dtype=float)
    out = np.empty_like(chi)
    degenerate = chi < CHI_DEGENERATE
    if degenerate.any():
        out[degenerate] = rng.gamma(0.5, 2.0 / psi, size=int(degenerate.sum()))
    proper = ~degenerate
    if proper.any():
        mu = np.sqrt(psi / chi[proper])
        out[proper] = 1.0 / _invgauss_draw(mu, psi, rng)
    return out


def sample_gig_half(params: GigHalfParams, rng: np.random.Generator) -> float:
    """Draw one value from GIG(1/2, psi, chi)."""
    return float(_gig_half_draw_vec(params.psi, np.atleast_1d(params.chi), rng)[0])


def sample_mvn(params: MvnParams, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, precision^{-1}) via the precision Cholesky factor.

    x = mean + L^{-T} z has covariance (L L^T)^{-1} = precision^{-1} exactly.
    """
    z = rng.standard_normal(params.mean.size)
    return params.mean + solve_triangular(params.chol_lower, z, trans="T", lower=True)


def log_density_gig_half(x: float, params: GigHalfParams) -> float:
    """Log density of GIG(1/2, psi, chi) at x, including normalization.

    C(1/2, psi, chi) = (psi/chi)^{1/4} / (2 K_{1/2}(sqrt(psi*chi))) with
    the half-order Bessel function in closed form,
    K_{1/2}(z) = sqrt(pi/(2z)) exp(-z).
    """
    if not (x > 0):
        raise ValueError(f"x must be positive, got {x}")
    if not (params.chi > 0):
        raise ValueError("log density requires chi > 0")
    psi, chi = params.psi, params.chi
    z = math.sqrt(psi * chi)
    log_k_half = 0.5 * (math.log(math.pi) - math.log(2.0) - math.log(z)) - z
    log_c = 0.25 * math.log(psi / chi) - math.log(2.0) - log_k_half
    return log_c - 0.5 * math.log(x) - 0.5 * (chi / x + psi * x)
