"""Self-contained numerical checks behind `bowl verify`.

Each check compares a sampler or density against an independent route:
adaptive quadrature for the scale-mixture identity, closed-form moments
for the latent-scale draws, direct linear solves for the Gaussian
conditionals, and a long random-walk Metropolis chain for the full
Gibbs kernel. The test suite reuses these for the acceptance gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.stats import ks_2samp

from .distributions import _gig_half_draw_vec
from .gibbs import GibbsConfig, build_suffstats, draw_beta_ep, draw_beta_normal, run_chain
from .pseudo_model import (
    Dataset,
    ExponentialPowerPrior,
    NormalPrior,
    log_pseudo_likelihood,
)
from .rng import substream

IDENTITY_U_GRID = (-3.0, -1.0, -0.25, 0.0, 0.25, 1.0, 3.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def scale_mixture_gap(u: float) -> float:
    """Absolute error of the latent-scale integral against exp(-2 max(u, 0)).

    The integrand is the Gaussian-kernel mixture (2 pi lam)^{-1/2}
    exp{-(u + lam)^2 / (2 lam)}; its integral over lam in (0, inf) should
    close the hinge exponential exactly.
    """

    def integrand(lam: float) -> float:
        return math.exp(-((u + lam) ** 2) / (2.0 * lam)) / math.sqrt(2.0 * math.pi * lam)

    total = 0.0
    for lo, hi in ((0.0, 1.0), (1.0, np.inf)):
        val, _ = quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return abs(total - math.exp(-2.0 * max(u, 0.0)))


def check_scale_mixture_identity(tol: float = 1e-6) -> CheckResult:
    errors = [scale_mixture_gap(u) for u in IDENTITY_U_GRID]
    worst = max(errors)
    return CheckResult(
        "scale-mixture identity",
        worst < tol,
        f"max |quadrature - closed form| = {worst:.3e} over u in {IDENTITY_U_GRID} (tol {tol:g})",
    )


def check_gig_moments(seed: int = 0, n_draws: int = 100_000) -> CheckResult:
    """E[1/lam] for the half-order GIG against its reciprocal-IG mean."""
    rng = substream(seed, 401)
    failures = []
    details = []
    for chi in (0.25, 1.0, 4.0):
        draws = _gig_half_draw_vec(1.0, np.full(n_draws, chi), rng)
        recip_mean = float(np.mean(1.0 / draws))
        target = chi**-0.5
        se = math.sqrt(chi**-1.5 / n_draws)  # Var of the reciprocal is mu^3 here
        ok = abs(recip_mean - target) < 3.0 * se
        details.append(f"chi={chi:g}: |{recip_mean:.4f}-{target:.4f}|/SE={abs(recip_mean - target) / se:.2f}")
        if not ok:
            failures.append(chi)
    # chi = 0 degenerates to a chi-square(1) draw with mean 1, variance 2.
    zero_draws = _gig_half_draw_vec(1.0, np.zeros(n_draws), rng)
    zero_mean = float(zero_draws.mean())
    zero_se = math.sqrt(2.0 / n_draws)
    ok_zero = abs(zero_mean - 1.0) < 3.0 * zero_se
    details.append(f"chi=0: mean={zero_mean:.4f}")
    if not ok_zero:
        failures.append(0.0)
    return CheckResult(
        "half-order GIG moments",
        not failures,
        "; ".join(details) + ("" if not failures else f" (failed at chi={failures})"),
    )


def _moment_instance(seed: int):
    rng = substream(seed, 402)
    n, p = 6, 3
    features = rng.uniform(-1.0, 1.0, size=(n, p))
    data = Dataset(
        features=features,
        actions=np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0),
        rewards=rng.uniform(0.5, 3.0, size=n),
        rho=0.5,
    )
    lam = rng.uniform(0.5, 2.0, size=n)
    return data, lam


def check_beta_conditional_moments(seed: int = 0, n_draws: int = 100_000) -> CheckResult:
    """Empirical mean/covariance of the Gaussian conditionals vs direct solves."""
    data, lam = _moment_instance(seed)
    suff = build_suffstats(lam, data)
    rng = substream(seed, 403)
    details = []
    ok = True

    prior_n = NormalPrior(mu0=0.25, sigma0_sq=1.5)
    b_inv = suff.precision_data + np.eye(data.p) / prior_n.sigma0_sq
    b_vec = suff.linear_data + prior_n.mu0_vector(data.p) / prior_n.sigma0_sq
    cov = np.linalg.inv(b_inv)
    mean = cov @ b_vec
    draws = np.array([draw_beta_normal(suff, prior_n, rng) for _ in range(n_draws)])
    mean_err = np.abs(draws.mean(axis=0) - mean) / np.sqrt(np.diag(cov) / n_draws)
    cov_err = np.linalg.norm(np.cov(draws.T) - cov) / np.linalg.norm(cov)
    ok &= bool(mean_err.max() < 3.0 and cov_err < 0.10)
    details.append(f"normal: max|mean err|/SE={mean_err.max():.2f}, cov rel err={cov_err:.3f}")

    rng_ep = substream(seed, 404)
    omega = substream(seed, 405).uniform(0.5, 2.0, size=data.p)
    prior_ep = ExponentialPowerPrior(nu=0.8, sigma_j=np.full(data.p, 0.6))
    b_inv = suff.precision_data + np.diag(1.0 / (prior_ep.nu**2 * prior_ep.sigma_j**2 * omega))
    cov = np.linalg.inv(b_inv)
    mean = cov @ suff.linear_data
    draws = np.array([draw_beta_ep(suff, omega, prior_ep, rng_ep) for _ in range(n_draws)])
    mean_err = np.abs(draws.mean(axis=0) - mean) / np.sqrt(np.diag(cov) / n_draws)
    cov_err = np.linalg.norm(np.cov(draws.T) - cov) / np.linalg.norm(cov)
    ok &= bool(mean_err.max() < 3.0 and cov_err < 0.10)
    details.append(f"shrinkage: max|mean err|/SE={mean_err.max():.2f}, cov rel err={cov_err:.3f}")
    return CheckResult("beta conditional moments", ok, "; ".join(details))


def oracle_instance() -> tuple[Dataset, NormalPrior]:
    """Fixed two-observation, one-feature instance with an interior optimum."""
    data = Dataset(
        features=np.array([[1.0], [0.8]]),
        actions=np.array([1.0, -1.0]),
        rewards=np.array([1.2, 2.0]),
        rho=0.5,
    )
    return data, NormalPrior(mu0=0.0, sigma0_sq=1.0)


def metropolis_beta_samples(
    data: Dataset,
    prior: NormalPrior,
    n_steps: int,
    seed: int,
    thin: int = 40,
) -> np.ndarray:
    """Random-walk Metropolis on beta targeting the lam-marginal pseudo-posterior.

    An independent route to the same distribution the Gibbs chain targets:
    the augmented scale integrates out exactly, so the target is
    log_pseudo_likelihood + normal prior log density.
    """
    if data.p != 1:
        raise ValueError("the oracle is one-dimensional")
    w = data.rewards / np.where(data.actions == 1.0, data.rho, 1.0 - data.rho)
    ax = data.actions * data.features[:, 0]
    mu0 = float(prior.mu0_vector(1)[0])
    inv_two_var = 0.5 / prior.sigma0_sq
    w_list = w.tolist()
    ax_list = ax.tolist()

    def log_target(b: float) -> float:
        total = 0.0
        for wi, axi in zip(w_list, ax_list):
            margin = 1.0 - axi * b
            if margin > 0.0:
                total -= 2.0 * wi * margin
        return total - (b - mu0) ** 2 * inv_two_var

    rng = substream(seed, 406)
    # Short pilot to scale the proposal near a healthy acceptance rate.
    step = 0.5
    beta = 0.0
    lp = log_target(beta)
    for phase in range(10):
        accepted = 0
        pilot = 2000
        for _ in range(pilot):
            prop = beta + step * rng.standard_normal()
            lp_prop = log_target(prop)
            if math.log(rng.uniform()) < lp_prop - lp:
                beta, lp = prop, lp_prop
                accepted += 1
        rate = accepted / pilot
        if 0.3 < rate < 0.6:
            break
        step *= 1.6 if rate > 0.6 else 0.6

    kept = np.empty(n_steps // thin)
    idx = 0
    normals = None
    uniforms = None
    block = 100_000
    pos = block  # force a refill on the first step
    for t in range(n_steps):
        if pos == block:
            normals = rng.standard_normal(block)
            uniforms = np.log(rng.uniform(size=block))
            pos = 0
        prop = beta + step * normals[pos]
        lp_prop = log_target(prop)
        if uniforms[pos] < lp_prop - lp:
            beta, lp = prop, lp_prop
        pos += 1
        if (t + 1) % thin == 0:
            kept[idx] = beta
            idx += 1
    return kept[:idx]


def check_gibbs_vs_metropolis(
    seed: int = 0,
    metropolis_steps: int = 2_000_000,
    gibbs_draws: int = 50_000,
    ks_threshold: float = 0.03,
) -> CheckResult:
    data, prior = oracle_instance()
    oracle = metropolis_beta_samples(data, prior, metropolis_steps, seed)
    config = GibbsConfig(n_draws=gibbs_draws, burn_in=gibbs_draws // 10, seed=seed + 17)
    gibbs = run_chain(data, prior, config).stacked_beta[:, 0]
    stat = float(ks_2samp(oracle, gibbs).statistic)
    return CheckResult(
        "Gibbs vs Metropolis oracle",
        stat < ks_threshold,
        f"two-sample KS = {stat:.4f} (threshold {ks_threshold:g}, "
        f"{oracle.size} oracle / {gibbs.size} Gibbs samples)",
    )


def run_all(tol: float = 1e-6, quick: bool = False, seed: int = 0) -> list[CheckResult]:
    checks = [
        check_scale_mixture_identity(tol),
        check_gig_moments(seed),
        check_beta_conditional_moments(seed),
    ]
    if not quick:
        checks.append(check_gibbs_vs_metropolis(seed))
    return checks
