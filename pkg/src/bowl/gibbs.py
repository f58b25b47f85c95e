"""Gibbs kernels and chain driver for the weighted-hinge pseudo-posterior.

Three prior variants share the same data-augmented Gaussian core. The
sufficient statistics are kept in the canonical per-observation form

    precision_data = sum_i (w_i^2 / lam_i) x_i x_i'
    linear_data    = sum_i w_i (1 + w_i / lam_i) a_i x_i

which is what completing the square on
exp{-(w_i + lam_i - w_i a_i x_i'beta)^2 / (2 lam_i)} yields; both
treatment arms are carried by the weights w_i, so no arm-partitioned
matrices are needed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .distributions import MvnParams, _gig_half_draw_vec, _invgauss_draw, sample_mvn
from .pseudo_model import (
    Dataset,
    ExponentialPowerPrior,
    NormalPrior,
    PriorSpec,
    SpikeSlabPrior,
    owl_weights,
    resolve_prior,
)
from .rng import substream

BETA_ZERO_TOL = 1e-12


class GibbsNumericalError(RuntimeError):
    """Numerical failure inside a chain, annotated with where it happened."""

    def __init__(self, message: str, chain: int, iteration: int):
        super().__init__(f"chain {chain}, iteration {iteration}: {message}")
        self.chain = chain
        self.iteration = iteration


@dataclass
class ChainState:
    """Current augmented state of one chain.

    lam is the per-observation scale augmentation; omega only exists under
    the exponential-power prior, gamma only under spike-and-slab (where
    beta_j = 0 exactly when gamma_j = 0).
    """

    beta: np.ndarray
    lam: np.ndarray
    omega: np.ndarray | None = None
    gamma: np.ndarray | None = None


@dataclass
class SuffStats:
    precision_data: np.ndarray  # p x p, symmetric PSD
    linear_data: np.ndarray  # length p


@dataclass(frozen=True)
class GibbsConfig:
    n_draws: int = 500
    burn_in: int = 150
    n_chains: int = 1
    seed: int = 0
    init: str = "zeros"  # or "ridge"

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError("n_draws must be positive")
        if not (0 <= self.burn_in < self.n_draws):
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_draws")
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")
        if self.init not in ("zeros", "ridge"):
            raise ValueError(f"unknown init rule {self.init!r}")


@dataclass
class PosteriorDraws:
    """Retained draws: beta has shape (n_chains, n_draws - burn_in, p)."""

    beta: np.ndarray
    config: GibbsConfig
    chain_seeds: list[tuple[int, int]]
    gamma: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def stacked_beta(self) -> np.ndarray:
        """All retained draws across chains, shape (chains * kept, p)."""
        return self.beta.reshape(-1, self.beta.shape[-1])

    @property
    def stacked_gamma(self) -> np.ndarray | None:
        if self.gamma is None:
            return None
        return self.gamma.reshape(-1, self.gamma.shape[-1])

    def posterior_mean(self) -> np.ndarray:
        return self.stacked_beta.mean(axis=0)


def draw_lambda(beta: np.ndarray, data: Dataset, rng: np.random.Generator) -> np.ndarray:
    """Sample lam_i ~ GIG(1/2, 1, w_i^2 (1 - a_i x_i'beta)^2) independently."""
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    w = owl_weights(data)
    margins = 1.0 - data.actions * (data.features @ beta)
    chi = (w * margins) ** 2
    return _gig_half_draw_vec(1.0, chi, rng)


def build_suffstats(lam: np.ndarray, data: Dataset) -> SuffStats:
    """Accumulate the canonical sufficient statistics for the beta draw.

    Observations are first put into a canonical lexicographic order so
    the accumulated sums are bit-identical under any permutation of the
    input rows (fixed summation order policy).
    """
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.shape != (data.n,):
        raise ValueError(f"lam has length {lam.size}, expected {data.n}")
    if data.n == 0:
        return SuffStats(np.zeros((data.p, data.p)), np.zeros(data.p))
    if not np.all(lam > 0):
        raise ValueError("lam must be strictly positive")

    keys = (lam, data.rewards, data.actions) + tuple(
        data.features[:, j] for j in range(data.p - 1, -1, -1)
    )
    order = np.lexsort(keys)
    x = data.features[order]
    a = data.actions[order]
    w = owl_weights(data)[order]
    lam_o = lam[order]

    precision = x.T @ ((w**2 / lam_o)[:, None] * x)
    precision = 0.5 * (precision + precision.T)
    linear = x.T @ (w * (1.0 + w / lam_o) * a)
    return SuffStats(precision, linear)


def _gaussian_from_natural(b_inv: np.ndarray, b_vec: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    params = MvnParams(np.linalg.solve(b_inv, b_vec), b_inv)
    return sample_mvn(params, rng)


def draw_beta_normal(suff: SuffStats, prior: NormalPrior, rng: np.random.Generator) -> np.ndarray:
    """beta ~ N(B1 b1, B1), B1^{-1} = precision_data + I/sigma0_sq."""
    p = suff.linear_data.size
    b_inv = suff.precision_data + np.eye(p) / prior.sigma0_sq
    b_vec = suff.linear_data + prior.mu0_vector(p) / prior.sigma0_sq
    return _gaussian_from_natural(b_inv, b_vec, rng)


def draw_beta_ep(
    suff: SuffStats, omega: np.ndarray, prior: ExponentialPowerPrior, rng: np.random.Generator
) -> np.ndarray:
    """beta ~ N(B2 b2, B2), B2^{-1} = precision_data + diag(1/(nu^2 sigma_j^2 omega_j))."""
    omega = np.asarray(omega, dtype=float).ravel()
    if not np.all(omega > 0):
        raise ValueError("omega must be strictly positive")
    sigma_sq = np.asarray(prior.sigma_j, dtype=float) ** 2
    b_inv = suff.precision_data + np.diag(1.0 / (prior.nu**2 * sigma_sq * omega))
    return _gaussian_from_natural(b_inv, suff.linear_data, rng)


def draw_omega(beta: np.ndarray, prior: ExponentialPowerPrior, rng: np.random.Generator) -> np.ndarray:
    """omega_j = 1 / u_j with u_j ~ IG(nu sigma_j / |beta_j|, 1).

    Coordinates with beta_j numerically zero fall back to the prior,
    an Exponential with mean 2.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    sigma = np.asarray(prior.sigma_j, dtype=float)
    abs_beta = np.abs(beta)
    out = np.empty_like(beta)
    degenerate = abs_beta < BETA_ZERO_TOL
    if degenerate.any():
        out[degenerate] = rng.exponential(2.0, size=int(degenerate.sum()))
    proper = ~degenerate
    if proper.any():
        mu = prior.nu * sigma[proper] / abs_beta[proper]
        out[proper] = 1.0 / _invgauss_draw(mu, 1.0, rng)
    return out


def _active_set_logdet_quad(
    precision_data: np.ndarray,
    linear_data: np.ndarray,
    prior_prec: np.ndarray,
    active: np.ndarray,
) -> float:
    """Data-dependent part of the log marginal with beta integrated out.

    Returns (1/2)[sum log prior_prec - log|B^{-1}| + b' B b] over the active
    coordinates; zero for an empty active set (all constants shared by the
    gamma configurations cancel in the Bernoulli ratio).
    """
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return 0.0
    b_inv = precision_data[np.ix_(idx, idx)] + np.diag(prior_prec[idx])
    chol = np.linalg.cholesky(b_inv)
    half_logdet = float(np.sum(np.log(np.diag(chol))))
    u = solve_triangular(chol, linear_data[idx], lower=True)
    quad = float(u @ u)
    return 0.5 * float(np.sum(np.log(prior_prec[idx]))) - half_logdet + 0.5 * quad


def draw_gamma_and_beta_ss(
    state: ChainState, data: Dataset, prior: SpikeSlabPrior, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Nested single-site sweep over inclusion indicators, then the slab draw.

    For each coordinate j, the Bernoulli odds compare the beta-integrated
    log marginals of the augmented model under gamma_j = 0 vs 1 holding the
    rest fixed. After the sweep, beta on the active set is drawn from its
    conditional Gaussian and the inactive coordinates are exactly zero.
    """
    suff = build_suffstats(state.lam, data)
    p = data.p
    sigma_sq = np.asarray(prior.sigma_j, dtype=float) ** 2
    prior_prec = 1.0 / (prior.nu**2 * sigma_sq)
    log_pi = math.log(prior.pi_incl)
    log_one_minus_pi = math.log1p(-prior.pi_incl)

    gamma = np.asarray(state.gamma, dtype=np.int8).copy()
    active = gamma.astype(bool)
    current_part = _active_set_logdet_quad(suff.precision_data, suff.linear_data, prior_prec, active)

    for j in range(p):
        flipped = active.copy()
        flipped[j] = not flipped[j]
        flipped_part = _active_set_logdet_quad(
            suff.precision_data, suff.linear_data, prior_prec, flipped
        )
        if active[j]:
            log_w1, log_w0 = current_part + log_pi, flipped_part + log_one_minus_pi
        else:
            log_w1, log_w0 = flipped_part + log_pi, current_part + log_one_minus_pi
        prob_include = 1.0 / (1.0 + math.exp(min(log_w0 - log_w1, 700.0)))
        include = rng.uniform() < prob_include
        if include != active[j]:
            active[j] = include
            current_part = flipped_part

    beta = np.zeros(p)
    idx = np.flatnonzero(active)
    if idx.size > 0:
        b_inv = suff.precision_data[np.ix_(idx, idx)] + np.diag(prior_prec[idx])
        beta[idx] = _gaussian_from_natural(b_inv, suff.linear_data[idx], rng)
    return active.astype(np.int8), beta


def _ridge_warm_start(data: Dataset) -> np.ndarray:
    # Weighted ridge regression of the observed action on the features.
    if data.n == 0:
        return np.zeros(data.p)
    w = owl_weights(data)
    xtx = data.features.T @ (w[:, None] * data.features) + np.eye(data.p)
    return np.linalg.solve(xtx, data.features.T @ (w * data.actions))


def _init_state(data: Dataset, prior: PriorSpec, config: GibbsConfig) -> ChainState:
    beta = _ridge_warm_start(data) if config.init == "ridge" else np.zeros(data.p)
    lam = np.ones(data.n)
    omega = np.ones(data.p) if isinstance(prior, ExponentialPowerPrior) else None
    gamma = np.ones(data.p, dtype=np.int8) if isinstance(prior, SpikeSlabPrior) else None
    return ChainState(beta=beta, lam=lam, omega=omega, gamma=gamma)


def _run_single_chain(
    data: Dataset, prior: PriorSpec, config: GibbsConfig, chain_index: int
) -> tuple[np.ndarray, np.ndarray | None]:
    rng = substream(config.seed, chain_index)
    state = _init_state(data, prior, config)
    kept = config.n_draws - config.burn_in
    beta_out = np.empty((kept, data.p))
    gamma_out = np.empty((kept, data.p), dtype=np.int8) if state.gamma is not None else None

    for g in range(config.n_draws):
        try:
            if isinstance(prior, NormalPrior):
                suff = build_suffstats(state.lam, data)
                state.beta = draw_beta_normal(suff, prior, rng)
                state.lam = draw_lambda(state.beta, data, rng)
            elif isinstance(prior, ExponentialPowerPrior):
                suff = build_suffstats(state.lam, data)
                state.beta = draw_beta_ep(suff, state.omega, prior, rng)
                state.lam = draw_lambda(state.beta, data, rng)
                state.omega = draw_omega(state.beta, prior, rng)
            elif isinstance(prior, SpikeSlabPrior):
                state.lam = draw_lambda(state.beta, data, rng)
                state.gamma, state.beta = draw_gamma_and_beta_ss(state, data, prior, rng)
            else:
                raise TypeError(f"unknown prior type {type(prior)!r}")
        except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
            raise GibbsNumericalError(str(exc), chain_index, g) from exc

        assert np.all(np.isfinite(state.beta)), f"non-finite beta at iteration {g}"
        assert np.all(state.lam > 0), f"nonpositive lam at iteration {g}"
        assert state.omega is None or np.all(state.omega > 0), f"nonpositive omega at iteration {g}"

        if g >= config.burn_in:
            beta_out[g - config.burn_in] = state.beta
            if gamma_out is not None:
                gamma_out[g - config.burn_in] = state.gamma
    return beta_out, gamma_out


def _chain_worker(args) -> tuple[int, np.ndarray, np.ndarray | None]:
    data, prior, config, chain_index = args
    beta, gamma = _run_single_chain(data, prior, config, chain_index)
    return chain_index, beta, gamma


def run_chain(
    data: Dataset, prior: PriorSpec, config: GibbsConfig, jobs: int = 1, meta: dict | None = None
) -> PosteriorDraws:
    """Run n_chains independent Gibbs chains and collect retained draws.

    Each chain derives its own substream from (seed, chain_index), so the
    result is identical whether chains run sequentially or in parallel;
    assembly is always ordered by chain index.
    """
    prior = resolve_prior(prior, data.features)
    results: list[tuple[np.ndarray, np.ndarray | None]] = [None] * config.n_chains
    if jobs > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, config.n_chains)) as pool:
            for idx, beta, gamma in pool.map(
                _chain_worker, [(data, prior, config, c) for c in range(config.n_chains)]
            ):
                results[idx] = (beta, gamma)
    else:
        for c in range(config.n_chains):
            results[c] = _run_single_chain(data, prior, config, c)

    beta = np.stack([r[0] for r in results])
    gamma = None
    if isinstance(prior, SpikeSlabPrior):
        gamma = np.stack([r[1] for r in results])
    return PosteriorDraws(
        beta=beta,
        config=config,
        chain_seeds=[(config.seed, c) for c in range(config.n_chains)],
        gamma=gamma,
        meta=dict(meta or {}),
    )
