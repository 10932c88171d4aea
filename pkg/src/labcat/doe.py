"""Latin hypercube design for the initial evaluations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transform import validate_bounds


@dataclass(frozen=True)
class Design:
    """Initial evaluation points, column-wise in objective space."""

    points: np.ndarray  # (d, n)


def latin_hypercube(bounds, n_points: int, rng: np.random.Generator) -> Design:
    """Stratified design: per dimension, one uniform sample in each of n strata.

    Each dimension draws an independent random permutation of the strata, so
    every 1-D projection of the design occupies all n equal-width cells.
    """
    arr = validate_bounds(bounds)
    if n_points < 1:
        raise ValueError("n_points must be positive")
    d = arr.shape[0]
    points = np.empty((d, n_points))
    for i in range(d):
        perm = rng.permutation(n_points)
        offsets = rng.uniform(size=n_points)
        lo, hi = arr[i]
        points[i] = lo + (perm + offsets) / n_points * (hi - lo)
    return Design(points=points)
