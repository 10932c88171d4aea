"""Trust region, expected improvement, candidate proposal, and discarding.

The trust region is the cube [-beta, beta]^d in the transformed space, so the
incumbent (pinned at the origin) is always inside it.  Proposals maximize
expected improvement over a uniform random batch intersected with the
objective-space box bounds; observations left behind by the moving region are
discarded oldest-first down to a floor of ``rho * d`` retained points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gp import GpSurrogate, predict, predict_batch
from .transform import ObservationSet, TransformState

EI_SIGMA_FLOOR = 1e-12    # below this the prediction counts as deterministic
SAMPLES_PER_DIM = 10      # candidate batch size is SAMPLES_PER_DIM * d
MAX_REDRAWS = 10          # fresh batches drawn before the clamping fallback


@dataclass(frozen=True)
class TrustRegion:
    """Half side length of the proposal cube in transformed space."""

    beta: float

    def __post_init__(self):
        if not (self.beta > 0.0):
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class Proposal:
    x_prime: np.ndarray      # transformed-space candidate
    x_objective: np.ndarray  # objective-space image, within bounds
    ei_value: float


def _ei_values(means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Expected improvement against an incumbent of 0 in transformed outputs."""
    sigma = np.sqrt(variances)
    ei = np.where(means < 0.0, -means, 0.0)
    live = sigma >= EI_SIGMA_FLOOR
    if np.any(live):
        z = -means[live] / sigma[live]
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        ei[live] = sigma[live] * (z * ndtr(z) + pdf)
    return np.maximum(ei, 0.0)


def expected_improvement(gp: GpSurrogate, x_prime) -> float:
    """EI at one transformed point; the incumbent best output is 0 by invariant."""
    mean, var = predict(gp, np.asarray(x_prime, dtype=float))
    return float(_ei_values(np.array([mean]), np.array([var]))[0])


def propose(
    gp: GpSurrogate,
    tr: TrustRegion,
    state: TransformState,
    bounds,
    rng: np.random.Generator,
) -> Proposal:
    """Pick the EI-maximizing candidate inside the trust region and the bounds.

    Draws ``SAMPLES_PER_DIM * d`` uniform points in the trust region, rejecting
    any whose objective-space image leaves the bounds box.  Empty batches are
    redrawn up to ``MAX_REDRAWS`` times; if every batch is infeasible the last
    batch is clamped onto the bounds box so a proposal always exists.  Ties in
    EI resolve to the first candidate in draw order.
    """
    arr = np.asarray(bounds, dtype=float)
    lo, hi = arr[:, 0], arr[:, 1]
    d = state.dim
    n_cand = SAMPLES_PER_DIM * d

    candidates = objective = None
    for _ in range(1 + MAX_REDRAWS):
        batch = rng.uniform(-tr.beta, tr.beta, size=(d, n_cand))
        images = state.to_objective_batch(batch)
        inside = np.all((images >= lo[:, None]) & (images <= hi[:, None]), axis=0)
        if inside.any():
            candidates = batch[:, inside]
            objective = images[:, inside]
            break
    else:
        clamped = np.clip(images, lo[:, None], hi[:, None])
        candidates = state.from_objective_batch(clamped)
        objective = clamped

    means, variances = predict_batch(gp, candidates)
    ei = _ei_values(means, variances)
    best = int(np.argmax(ei))
    return Proposal(
        x_prime=candidates[:, best].copy(),
        x_objective=objective[:, best].copy(),
        ei_value=float(ei[best]),
    )


def discard(obs: ObservationSet, tr: TrustRegion, rho: int, d: int) -> None:
    """Drop observations outside the trust region, oldest first.

    Nothing happens while ``n <= rho * d``.  Otherwise outside points are
    removed in increasing age order until the count reaches ``rho * d`` or no
    outside point remains; the incumbent minimum (at the origin, hence inside
    the region) is never removed.
    """
    if rho < 1 or d < 1:
        raise ValueError("rho and d must be positive")
    cap = rho * d
    if obs.n <= cap:
        return
    outside = np.max(np.abs(obs.inputs), axis=0) > tr.beta
    outside[obs.min_index] = False
    candidates = np.flatnonzero(outside)
    if candidates.size == 0:
        return
    n_remove = min(candidates.size, obs.n - cap)
    oldest = candidates[np.argsort(obs.ages[candidates], kind="stable")][:n_remove]
    removed = np.zeros(obs.n, dtype=bool)
    removed[oldest] = True
    obs.keep(np.flatnonzero(~removed))
