"""Posterior-predictive treatment recommendations and certainty maps.

The predictive probability of recommending +1 for features x is the
probit average over retained coefficient draws, (1/G) sum_g Phi(x'b_g).
The scale augmentation never enters: Phi(x'beta) is free of it, so the
integral over the full augmented posterior collapses to the beta-marginal
average. Features are passed in raw form; the intercept column is applied
here exactly as during training (draws.meta["intercept"]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gibbs import PosteriorDraws


@dataclass(frozen=True)
class Recommendation:
    """Recommended action with the posterior-predictive certainty.

    certainty = max(prob_plus, 1 - prob_plus) is the predictive probability
    of the action actually recommended; ties at 0.5 go to +1.
    """

    action: int
    prob_plus: float
    certainty: float


def _design_vector(draws: PosteriorDraws, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if draws.meta.get("intercept", False):
        x = np.concatenate([[1.0], x])
    p = draws.beta.shape[-1]
    if x.shape != (p,):
        raise ValueError(f"feature vector has length {x.size}, expected {p - int(draws.meta.get('intercept', False))}")
    return x


def predictive_prob(draws: PosteriorDraws, x: np.ndarray) -> float:
    """Average of Phi(x'beta) over all retained draws."""
    xd = _design_vector(draws, x)
    return float(np.mean(ndtr(draws.stacked_beta @ xd)))


def recommend(draws: PosteriorDraws, x: np.ndarray) -> Recommendation:
    prob = predictive_prob(draws, x)
    action = 1 if prob >= 0.5 else -1
    return Recommendation(action=action, prob_plus=prob, certainty=max(prob, 1.0 - prob))


@dataclass(frozen=True)
class GridSpec:
    """A k x k lattice over two raw feature coordinates (0-based indices)."""

    dims: tuple[int, int] = (0, 1)
    lo: float = -1.0
    hi: float = 1.0
    resolution: int = 33


def certainty_grid(
    draws: PosteriorDraws, grid_spec: GridSpec, fill: float = 0.0
) -> tuple[np.ndarray, np.ndarray, list[Recommendation]]:
    """Evaluate recommendations on the lattice.

    Returns (node coordinates (k*k, 2), k x k certainty matrix,
    recommendations in row-major order with the second grid dimension
    varying fastest).
    """
    k = grid_spec.resolution
    if k < 2:
        raise ValueError("grid resolution must be at least 2")
    j1, j2 = grid_spec.dims
    n_raw = draws.beta.shape[-1] - int(draws.meta.get("intercept", False))
    if not (0 <= j1 < n_raw and 0 <= j2 < n_raw and j1 != j2):
        raise ValueError(f"grid dims {grid_spec.dims} invalid for {n_raw} features")

    ticks = np.linspace(grid_spec.lo, grid_spec.hi, k)
    coords = np.empty((k * k, 2))
    certainty = np.empty((k, k))
    recs: list[Recommendation] = []
    base = np.full(n_raw, float(fill))
    for i1, v1 in enumerate(ticks):
        for i2, v2 in enumerate(ticks):
            x = base.copy()
            x[j1] = v1
            x[j2] = v2
            rec = recommend(draws, x)
            recs.append(rec)
            coords[i1 * k + i2] = (v1, v2)
            certainty[i1, i2] = rec.certainty
    return coords, certainty, recs


def coefficient_magnitudes(draws: PosteriorDraws, include_intercept: bool = False) -> np.ndarray:
    """Absolute posterior mean per coordinate (intercept dropped by default)."""
    if draws.stacked_beta.shape[0] == 0:
        raise ValueError("no retained draws")
    mags = np.abs(draws.posterior_mean())
    if draws.meta.get("intercept", False) and not include_intercept:
        mags = mags[1:]
    return mags
