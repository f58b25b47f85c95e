"""Dataset representation, the weighted-hinge objective, and its pseudo-posterior.

The "likelihood" here is not generative: exp of minus twice the weighted
hinge loss, so that maximizing it is the same problem as minimizing the
outcome-weighted classification objective. All functions are pure and
safe to evaluate concurrently.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class Dataset:
    """Trial data: features (n x p), actions in {-1,+1}, positive rewards.

    rho is the known randomization probability P(A = +1). n = 0 is allowed
    (prior-recovery runs); the CSV loader requires at least one row.
    """

    features: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    rho: float

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.actions = np.asarray(self.actions, dtype=float).ravel()
        self.rewards = np.asarray(self.rewards, dtype=float).ravel()
        if self.features.size == 0:
            self.features = self.features.reshape(0, max(self.features.shape[-1], 1))
        n, p = self.features.shape
        if p < 1:
            raise DataError("need at least one feature column")
        if self.actions.shape != (n,) or self.rewards.shape != (n,):
            raise DataError("features, actions and rewards disagree on n")
        if not (0.0 < self.rho < 1.0):
            raise DataError(f"rho must lie in (0, 1), got {self.rho}")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain NaN or Inf")
        if n > 0:
            if not np.all(np.isin(self.actions, (-1.0, 1.0))):
                raise DataError("actions must be -1 or +1")
            if not np.all(np.isfinite(self.rewards)) or not np.all(self.rewards > 0):
                raise DataError("rewards must be finite and positive (apply reward_transform first)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass
class ItrCoefficients:
    """Linear-rule coefficients; `intercept` marks a constant-1 leading column."""

    beta: np.ndarray
    intercept: bool = False

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("coefficients must be finite")


@dataclass(frozen=True)
class NormalPrior:
    """Independent N(mu0_j, sigma0_sq) on each coefficient."""

    mu0: float | np.ndarray = 0.0
    sigma0_sq: float = 1.0
    sigma_j: np.ndarray | None = None  # unused by this prior, kept for the shared surface

    def __post_init__(self):
        if not (self.sigma0_sq > 0):
            raise ValueError("sigma0_sq must be positive")

    def mu0_vector(self, p: int) -> np.ndarray:
        mu0 = np.asarray(self.mu0, dtype=float)
        return np.full(p, float(mu0)) if mu0.ndim == 0 else mu0


@dataclass(frozen=True)
class ExponentialPowerPrior:
    """Double-exponential shrinkage prior (power index fixed at 1).

    Mixing representation: beta_j | omega_j ~ N(0, nu^2 sigma_j^2 omega_j)
    with omega_j ~ Exponential(mean 2).
    """

    nu: float = 0.8
    sigma_j: np.ndarray | None = None
    alpha: int = 1

    def __post_init__(self):
        if not (self.nu > 0):
            raise ValueError("nu must be positive")
        if self.alpha != 1:
            raise ValueError("only the double-exponential case alpha = 1 is supported")


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Point mass at zero vs N(0, nu^2 sigma_j^2) slab, inclusion prob pi_incl."""

    nu: float = 0.8
    pi_incl: float = 0.5
    sigma_j: np.ndarray | None = None

    def __post_init__(self):
        if not (self.nu > 0):
            raise ValueError("nu must be positive")
        if not (0.0 < self.pi_incl < 1.0):
            raise ValueError("pi_incl must lie in (0, 1)")


PriorSpec = NormalPrior | ExponentialPowerPrior | SpikeSlabPrior


def feature_scales(features: np.ndarray) -> np.ndarray:
    """Per-column population standard deviations, computed once at fit start.

    Zero-variance columns (the constant intercept column in particular)
    get scale 1 so the shrinkage priors stay proper.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    sd = features.std(axis=0) if features.shape[0] > 0 else np.zeros(features.shape[1])
    return np.where(sd > 0, sd, 1.0)


def resolve_prior(prior: PriorSpec, features: np.ndarray) -> PriorSpec:
    """Fill in sigma_j from the training features if not already set."""
    if prior.sigma_j is not None:
        return prior
    return replace(prior, sigma_j=feature_scales(features))


def add_intercept(features: np.ndarray) -> np.ndarray:
    """Prepend a constant-1 column (the optional affine term of the rule)."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    return np.hstack([np.ones((features.shape[0], 1)), features])


def _beta_vector(beta) -> np.ndarray:
    if isinstance(beta, ItrCoefficients):
        return beta.beta
    return np.asarray(beta, dtype=float).ravel()


def owl_weight(a: float, r: float, rho: float) -> float:
    """Inverse-propensity reward weight r / (a*rho + (1-a)/2)."""
    if not (r > 0):
        raise ValueError(f"reward must be positive, got {r}")
    return r / rho if a == 1 else r / (1.0 - rho)


def owl_weights(data: Dataset) -> np.ndarray:
    """Vector of per-observation weights."""
    return data.rewards / np.where(data.actions == 1.0, data.rho, 1.0 - data.rho)


def _check_dims(beta: np.ndarray, data: Dataset) -> None:
    if beta.shape != (data.p,):
        raise ValueError(f"beta has length {beta.size}, expected {data.p}")


def hinge_losses(beta, data: Dataset) -> np.ndarray:
    """Per-observation hinge terms max(1 - a_i x_i'beta, 0)."""
    b = _beta_vector(beta)
    _check_dims(b, data)
    return np.maximum(1.0 - data.actions * (data.features @ b), 0.0)


def owl_objective(beta, data: Dataset) -> float:
    """(1/n) sum_i w_i max(1 - a_i x_i'beta, 0)."""
    if data.n == 0:
        return 0.0
    return float(np.mean(owl_weights(data) * hinge_losses(beta, data)))


def log_pseudo_likelihood(beta, data: Dataset) -> float:
    """-2 sum_i w_i max(1 - a_i x_i'beta, 0); equals -2n * owl_objective."""
    if data.n == 0:
        return 0.0
    return float(-2.0 * np.sum(owl_weights(data) * hinge_losses(beta, data)))


def log_pseudo_posterior(state, data: Dataset, prior: PriorSpec) -> float:
    """Joint log density of the augmented state, up to an additive constant.

    `state` carries beta and the positive scale augmentation lam (length n),
    plus omega (exponential-power prior) or gamma (spike-and-slab). The data
    part is the scale-mixture-of-normals form whose lam-marginal recovers
    exp(log_pseudo_likelihood) exactly.
    """
    beta = _beta_vector(state.beta)
    _check_dims(beta, data)
    lam = np.asarray(state.lam, dtype=float).ravel()
    if lam.shape != (data.n,):
        raise ValueError(f"lam has length {lam.size}, expected {data.n}")
    if data.n > 0 and not np.all(lam > 0):
        raise ValueError("lam must be strictly positive")

    total = 0.0
    if data.n > 0:
        w = owl_weights(data)
        resid = w + lam - w * data.actions * (data.features @ beta)
        total += float(-0.5 * np.sum(np.log(lam) + resid**2 / lam))

    if isinstance(prior, NormalPrior):
        mu0 = prior.mu0_vector(data.p)
        total += float(-0.5 * np.sum((beta - mu0) ** 2) / prior.sigma0_sq)
    elif isinstance(prior, ExponentialPowerPrior):
        omega = np.asarray(state.omega, dtype=float).ravel()
        if omega.shape != beta.shape or not np.all(omega > 0):
            raise ValueError("omega must be positive and length p")
        sigma_sq = np.asarray(prior.sigma_j, dtype=float) ** 2
        total += float(
            -0.5 * np.sum(np.log(omega) + beta**2 / (prior.nu**2 * sigma_sq * omega) + omega)
        )
    elif isinstance(prior, SpikeSlabPrior):
        gamma = np.asarray(state.gamma).astype(bool).ravel()
        if gamma.shape != beta.shape:
            raise ValueError("gamma must be length p")
        if np.any(beta[~gamma] != 0.0):
            raise ValueError("beta must be exactly zero where gamma is zero")
        sigma_sq = np.asarray(prior.sigma_j, dtype=float) ** 2
        active = gamma
        slab_var = prior.nu**2 * sigma_sq[active]
        total += float(
            -0.5 * np.sum(np.log(2.0 * math.pi * slab_var) + beta[active] ** 2 / slab_var)
        )
        total += float(np.sum(np.where(gamma, math.log(prior.pi_incl), math.log1p(-prior.pi_incl))))
    else:
        raise TypeError(f"unknown prior type {type(prior)!r}")
    return total


@dataclass(frozen=True)
class RewardShift:
    """Record of the distance-preserving shift applied to make rewards positive."""

    shift: float


def reward_transform(raw_rewards: np.ndarray) -> tuple[np.ndarray, RewardShift]:
    """Shift rewards into the positive half-line if needed.

    Rewards already strictly positive pass through unchanged. Otherwise
    every reward is shifted by -min + eps with eps = 1e-3 * (max - min),
    or 1e-3 when the range is degenerate. A constant shift preserves all
    pairwise reward distances.
    """
    raw = np.asarray(raw_rewards, dtype=float).ravel()
    if raw.size == 0:
        raise DataError("cannot transform an empty reward vector")
    if not np.all(np.isfinite(raw)):
        raise DataError("rewards contain NaN or Inf")
    lo = float(raw.min())
    if lo > 0:
        return raw.copy(), RewardShift(0.0)
    spread = float(raw.max()) - lo
    eps = 1e-3 * spread if spread > 0 else 1e-3
    shift = -lo + eps
    return raw + shift, RewardShift(shift)


def load_dataset_csv(path, rho: float) -> tuple[Dataset, RewardShift]:
    """Read a dataset from CSV with header x1..xp,a,r (in that order).

    Actions must be -1 or +1; all values must be finite. Raw rewards may be
    nonpositive: the reward shift is applied here and returned for reporting.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    expected_tail = ["a", "r"]
    if len(header) < 3 or header[-2:] != expected_tail:
        missing = [c for c in expected_tail if c not in header]
        if missing:
            raise DataError(f"{path}: missing required column(s) {', '.join(missing)}")
        raise DataError(f"{path}: header must end with columns a, r")
    x_cols = header[:-2]
    if x_cols != [f"x{j}" for j in range(1, len(x_cols) + 1)]:
        raise DataError(f"{path}: feature columns must be named x1..xp in order, got {x_cols}")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in row] for row in body], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from exc
    if values.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: NaN or Inf values are not allowed")
    features = values[:, :-2]
    actions = values[:, -2]
    if not np.all(np.isin(actions, (-1.0, 1.0))):
        raise DataError(f"{path}: column a must contain only -1 or 1")
    rewards, record = reward_transform(values[:, -1])
    return Dataset(features=features, actions=actions, rewards=rewards, rho=rho), record
