"""Invertible affine mapping between objective space and the working space.

Inputs and outputs are stored in a transformed representation related to the
objective space by ``X = R S X' + c 1^T`` and ``y = a y' + b`` with orthogonal
``R``, positive diagonal ``S``, and ``a > 0``.  Each optimizer iteration
re-establishes four invariants through the pipeline
normalize -> recenter -> rotate -> rescale:

  (i)   the incumbent minimum sits at the origin of the transformed inputs,
  (ii)  the most likely GP length-scales on the transformed data are unity,
  (iii) the transformed outputs are min-max normalized to [0, 1],
  (iv)  the output-weighted principal components of the inputs are axis-aligned
        (up to reflection).

Every update rewrites the stored data together with the transform parameters
so the underlying objective-space observations never change; the test suite
checks these reconstruction identities numerically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANGE_FLOOR = 1e-300       # absolute floor for the output range
ORTHO_DRIFT_LIMIT = 1e-8   # re-orthogonalize R when ||R^T R - I||_F exceeds this


class DegenerateOutputs(Exception):
    """All stored outputs coincide; min-max normalization is undefined."""


@dataclass
class TransformState:
    """Parameters (R, S, c, a, b) of the objective <-> transformed mapping."""

    rotation: np.ndarray    # (d, d) orthogonal
    scale: np.ndarray       # (d,) positive diagonal entries of S
    offset: np.ndarray      # (d,) objective-space offset c
    out_scale: float        # a > 0
    out_offset: float       # b

    @property
    def dim(self) -> int:
        return self.offset.size

    def to_objective(self, x_prime) -> np.ndarray:
        """Map a transformed point to objective space: R S x' + c."""
        x_prime = np.asarray(x_prime, dtype=float)
        return self.rotation @ (self.scale * x_prime) + self.offset

    def from_objective(self, x) -> np.ndarray:
        """Inverse map: S^-1 R^T (x - c)."""
        x = np.asarray(x, dtype=float)
        return (self.rotation.T @ (x - self.offset)) / self.scale

    def to_objective_batch(self, x_primes: np.ndarray) -> np.ndarray:
        """Column-wise :meth:`to_objective` for a (d, m) matrix."""
        return self.rotation @ (self.scale[:, None] * x_primes) + self.offset[:, None]

    def from_objective_batch(self, xs: np.ndarray) -> np.ndarray:
        return (self.rotation.T @ (xs - self.offset[:, None])) / self.scale[:, None]

    def output_to_objective(self, y_prime: float) -> float:
        """Map a transformed output back to objective units: a y' + b."""
        return self.out_scale * float(y_prime) + self.out_offset

    def orthogonality_drift(self) -> float:
        gram = self.rotation.T @ self.rotation
        return float(np.linalg.norm(gram - np.eye(self.dim)))


@dataclass
class ObservationSet:
    """Paired transformed inputs/outputs with insertion ages and the incumbent index."""

    inputs: np.ndarray    # (d, n)
    outputs: np.ndarray   # (n,)
    ages: np.ndarray      # (n,) monotone insertion counters
    min_index: int

    @property
    def n(self) -> int:
        return self.outputs.size

    def append(self, x_prime: np.ndarray, y_prime: float, age: int) -> None:
        """Append one observation; the incumbent moves only on strict improvement."""
        self.inputs = np.column_stack([self.inputs, np.asarray(x_prime, dtype=float)])
        self.outputs = np.append(self.outputs, float(y_prime))
        self.ages = np.append(self.ages, int(age))
        if y_prime < self.outputs[self.min_index]:
            self.min_index = self.outputs.size - 1

    def keep(self, indices: np.ndarray) -> None:
        """Retain the given sorted positions, remapping the incumbent index."""
        indices = np.asarray(indices, dtype=int)
        new_min = int(np.searchsorted(indices, self.min_index))
        if new_min >= indices.size or indices[new_min] != self.min_index:
            raise ValueError("the incumbent minimum cannot be removed")
        self.inputs = self.inputs[:, indices]
        self.outputs = self.outputs[indices]
        self.ages = self.ages[indices]
        self.min_index = new_min


def validate_bounds(bounds) -> np.ndarray:
    """Coerce bounds into a (d, 2) float array with finite lo < hi rows."""
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ValueError(f"bounds must be (d, 2), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("bounds must be finite")
    if not np.all(arr[:, 0] < arr[:, 1]):
        raise ValueError("each lower bound must be strictly below its upper bound")
    return arr


def init_from_bounds(x0: np.ndarray, y0: np.ndarray, bounds) -> tuple[ObservationSet, TransformState]:
    """Build the initial transformed representation from the box bounds.

    The offset is the per-dimension midpoint and the scale the half-width, so
    the bounds map onto [-1, 1]^d; the rotation starts as the identity and the
    outputs are min-max normalized.  The incumbent-at-origin invariant does not
    hold yet; the first pipeline pass establishes it.
    """
    arr = validate_bounds(bounds)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    y0 = np.asarray(y0, dtype=float).ravel()
    d, n = x0.shape
    if n < 2:
        raise ValueError("need at least two initial observations")
    if arr.shape[0] != d:
        raise ValueError("bounds dimension does not match the design")

    lo, hi = arr[:, 0], arr[:, 1]
    offset = (lo + hi) / 2.0
    scale = (hi - lo) / 2.0
    y_min = float(np.min(y0))
    y_max = float(np.max(y0))
    if y_max - y_min < RANGE_FLOOR:
        raise DegenerateOutputs("all initial outputs are equal")

    state = TransformState(
        rotation=np.eye(d),
        scale=scale,
        offset=offset,
        out_scale=y_max - y_min,
        out_offset=y_min,
    )
    obs = ObservationSet(
        inputs=(x0 - offset[:, None]) / scale[:, None],
        outputs=(y0 - y_min) / (y_max - y_min),
        ages=np.arange(n, dtype=int),
        min_index=int(np.argmin(y0)),
    )
    return obs, state


def normalize_outputs(state: TransformState, obs: ObservationSet) -> None:
    """Min-max normalize the stored outputs, folding the shift into (a, b)."""
    if obs.n < 2:
        raise ValueError("need at least two observations to normalize")
    y_min = float(np.min(obs.outputs))
    y_max = float(np.max(obs.outputs))
    span = y_max - y_min
    if span < RANGE_FLOOR:
        raise DegenerateOutputs("stored output range collapsed")
    state.out_offset = state.out_offset + y_min * state.out_scale
    state.out_scale = state.out_scale * span
    obs.outputs = (obs.outputs - y_min) / span


def recenter(state: TransformState, obs: ObservationSet) -> None:
    """Shift the incumbent minimum to the origin, absorbing the shift into c."""
    x_min = obs.inputs[:, obs.min_index].copy()
    obs.inputs = obs.inputs - x_min[:, None]
    state.offset = state.offset + state.rotation @ (state.scale * x_min)


def _fix_column_signs(u: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive (ties: lowest row)."""
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0.0:
            u[:, j] = -u[:, j]
    return u


def rotate(state: TransformState, obs: ObservationSet) -> None:
    """Align the output-weighted principal components with the coordinate axes.

    Weights are 1 - y' (incumbent weight 1, worst point weight 0).  The SVD is
    taken in the intermediate space S X' W so the rotation composes with the
    existing scale without disturbing the objective-space mapping; rank
    deficiency is covered by the full SVD, whose unconstrained directions are
    an arbitrary orthonormal completion under the sign convention.
    """
    weights = 1.0 - obs.outputs
    intermediate = state.scale[:, None] * obs.inputs
    u, _, _ = np.linalg.svd(intermediate * weights[None, :], full_matrices=True)
    u = _fix_column_signs(u)
    obs.inputs = (u.T @ intermediate) / state.scale[:, None]
    state.rotation = state.rotation @ u
    if state.orthogonality_drift() > ORTHO_DRIFT_LIMIT:
        ru, _, rvt = np.linalg.svd(state.rotation)
        state.rotation = ru @ rvt


def rescale(state: TransformState, obs: ObservationSet, lengthscales) -> None:
    """Divide each input row by its length-scale, folding the factor into S.

    After this update a GP refit on the stored inputs with unit length-scales
    is equivalent to the pre-update GP with length-scales ``lengthscales``.
    """
    ell = np.asarray(lengthscales, dtype=float).ravel()
    if np.any(ell <= 0.0) or not np.all(np.isfinite(ell)):
        raise ValueError("lengthscales must be strictly positive and finite")
    obs.inputs = obs.inputs / ell[:, None]
    state.scale = state.scale * ell
