"""Frequentist linear-kernel baseline: weighted hinge loss by subgradient descent."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pseudo_model import Dataset, owl_weights
from .rng import substream


@dataclass
class OwlFit:
    beta: np.ndarray
    # Best regularized objective achieved by an epoch-end averaged iterate so
    # far; nonincreasing by construction.
    objective_trace: np.ndarray
    reg_strength: float


def _regularized_objective(beta: np.ndarray, data: Dataset, w: np.ndarray, reg: float) -> float:
    hinge = np.maximum(1.0 - data.actions * (data.features @ beta), 0.0)
    return float(np.mean(w * hinge) + 0.5 * reg * (beta @ beta))


def fit_owl_linear(
    data: Dataset,
    reg_strength: float = 1e-3,
    epochs: int = 80,
    seed: int = 0,
    step_scale: float | None = None,
) -> OwlFit:
    """Minimize (1/n) sum_i w_i (1 - a_i x_i'beta)_+ + (reg/2)||beta||^2.

    Deterministic-shuffle stochastic subgradient descent with step size
    c/sqrt(t); the returned coefficients are the average of the iterates
    over the last half of all steps (suffix averaging). The per-epoch
    trace records the best objective reached at the running average of
    all iterates, which decays far more smoothly than the raw iterate.
    """
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    if reg_strength < 0:
        raise ValueError("reg_strength must be nonnegative")
    rng = substream(seed)
    n, p = data.features.shape
    if n == 0:
        return OwlFit(np.zeros(p), np.zeros(0), reg_strength)
    w = owl_weights(data)
    x = data.features
    a = data.actions

    if step_scale is None:
        # Scale steps to the average subgradient magnitude so rules of
        # unit-order norm are reachable within the first few epochs.
        gbar = float(np.mean(w * np.linalg.norm(x, axis=1))) + reg_strength
        step_scale = 1.0 / gbar

    total_steps = epochs * n
    suffix_start = total_steps // 2
    beta = np.zeros(p)
    run_sum = np.zeros(p)
    suffix_sum = np.zeros(p)
    suffix_count = 0
    trace = np.empty(epochs)
    t = 0
    for epoch in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = step_scale / math.sqrt(t)
            xi = x[i]
            if 1.0 - a[i] * (xi @ beta) > 0.0:
                beta = (1.0 - eta * reg_strength) * beta + (eta * w[i] * a[i]) * xi
            else:
                beta = (1.0 - eta * reg_strength) * beta
            run_sum += beta
            if t > suffix_start:
                suffix_sum += beta
                suffix_count += 1
        value = _regularized_objective(run_sum / t, data, w, reg_strength)
        trace[epoch] = value if epoch == 0 else min(value, trace[epoch - 1])
    return OwlFit(suffix_sum / suffix_count, trace, reg_strength)


def owl_objective_at(fit: OwlFit, data: Dataset) -> float:
    """Regularized objective of the fit on the given data."""
    return _regularized_objective(fit.beta, data, owl_weights(data), fit.reg_strength)


def predict_owl(fit: OwlFit, x: np.ndarray) -> int:
    """sign(x'beta) with ties sent to +1."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != fit.beta.shape:
        raise ValueError(f"feature vector has length {x.size}, expected {fit.beta.size}")
    return 1 if float(x @ fit.beta) >= 0.0 else -1


def predict_owl_batch(fit: OwlFit, features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != fit.beta.size:
        raise ValueError("feature matrix width does not match the fit")
    return np.where(features @ fit.beta >= 0.0, 1, -1)


def flipped_owl_dataset(
    features: np.ndarray, actions: np.ndarray, raw_rewards: np.ndarray, rho: float
) -> Dataset:
    """Weighted-classification representation of possibly nonpositive rewards.

    A negative reward says the observed action was worse than its
    alternative, which at the zero-one level is exactly a unit of evidence
    for the opposite label: w * 1(a != f) = const + |w| * 1(-a != f) for
    w < 0. The hinge fit therefore uses weights |r| with labels a*sign(r);
    zero-reward rows carry no information and are dropped. This keeps the
    baseline's weights at the raw outcome scale instead of inflating every
    weight by a positivity shift.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    actions = np.asarray(actions, dtype=float).ravel()
    raw = np.asarray(raw_rewards, dtype=float).ravel()
    keep = raw != 0.0
    return Dataset(
        features=features[keep],
        actions=actions[keep] * np.sign(raw[keep]),
        rewards=np.abs(raw[keep]),
        rho=rho,
    )
