"""Gaussian process surrogate with an anisotropic squared-exponential kernel.

The surrogate works on inputs stored column-wise (a ``d x n`` matrix) in the
optimizer's transformed space.  Inference is exact through a Cholesky
factorization of the Gram matrix.  The log marginal likelihood is augmented
with a Gaussian prior on the log length-scales, and analytic first and second
derivatives with respect to the log length-scales drive a damped Newton (or
gradient-ascent) update used once per optimizer iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

SIGMA_F_FLOOR = 1e-8       # signal std when all targets coincide
NUGGET_FACTOR = 1e-6       # sigma_n^2 = NUGGET_FACTOR * sigma_f^2
NUGGET_CEILING = 1e-2      # escalation stops at NUGGET_CEILING * sigma_f^2
VARIANCE_CLIP = 1e-12      # predictive variances below this collapse to zero
LOG_ELL_BOUND = 10.0       # |ln l_i| hard clamp during the length-scale update
NEGDEF_TOL = 1e-12         # "negative definite" means max eigenvalue < -NEGDEF_TOL

LINESEARCH_SHRINK = 0.5
LINESEARCH_ARMIJO = 1e-4
LINESEARCH_MAX_SHRINKS = 20


class CholeskyFailure(Exception):
    """Gram matrix stayed indefinite after exhausting nugget escalation."""


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the anisotropic squared-exponential kernel."""

    lengthscales: np.ndarray   # (d,), strictly positive
    signal_variance: float     # sigma_f^2 > 0
    noise_variance: float      # sigma_n^2 >= 0

    def __post_init__(self):
        ell = np.asarray(self.lengthscales, dtype=float)
        if ell.ndim != 1 or ell.size == 0:
            raise ValueError("lengthscales must be a non-empty 1-D vector")
        if not np.all(np.isfinite(ell)) or np.any(ell <= 0.0):
            raise ValueError("lengthscales must be strictly positive and finite")
        if not (self.signal_variance > 0.0):
            raise ValueError("signal_variance must be positive")
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be non-negative")
        object.__setattr__(self, "lengthscales", ell)


@dataclass(frozen=True)
class GpSurrogate:
    """Fitted GP: inputs (d x n), targets (n,), constant mean and factored Gram.

    ``chol`` is the lower-triangular Cholesky factor of K and ``alpha`` caches
    K^-1 (y - m); both are reused by every prediction.  Instances are immutable
    after :func:`fit` and safe to share read-only.
    """

    inputs: np.ndarray
    targets: np.ndarray
    mean_const: float
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.targets.size

    @property
    def dim(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class LikelihoodDerivatives:
    """Augmented log-likelihood value with its Jacobian/Hessian in log length-scale space."""

    value: float
    jacobian: np.ndarray   # (d,)
    hessian: np.ndarray    # (d, d), symmetric


def kernel_se_ard(xp, xq, params: KernelParams, same_index: bool = False) -> float:
    """Squared-exponential ARD kernel between two points.

    k(xp, xq) = sigma_f^2 * exp(-1/2 * sum_i (xp_i - xq_i)^2 / l_i^2),
    plus sigma_n^2 when ``same_index`` marks a diagonal (p == q) entry.
    """
    xp = np.asarray(xp, dtype=float).ravel()
    xq = np.asarray(xq, dtype=float).ravel()
    r = (xp - xq) / params.lengthscales
    value = params.signal_variance * math.exp(-0.5 * float(r @ r))
    if same_index:
        value += params.noise_variance
    return value


def _scaled_sq_dists(inputs: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """Pairwise sum_i (xp_i - xq_i)^2 / l_i^2; exactly symmetric by construction."""
    scaled = inputs / lengthscales[:, None]
    diff = scaled[:, :, None] - scaled[:, None, :]
    return np.einsum("kij,kij->ij", diff, diff)


def _gram_se(inputs: np.ndarray, params: KernelParams) -> np.ndarray:
    """Gram matrix of the SE-ARD part only (no nugget on the diagonal)."""
    return params.signal_variance * np.exp(-0.5 * _scaled_sq_dists(inputs, params.lengthscales))


def fit(
    inputs,
    targets,
    lengthscales,
    *,
    signal_variance: float | None = None,
    noise_variance: float | None = None,
    mean: float | None = None,
) -> GpSurrogate:
    """Fit the GP to column-wise inputs and targets at the given length-scales.

    Defaults follow the per-iteration refit convention: the mean is the target
    mean, sigma_f is the population standard deviation of the targets (floored
    at ``SIGMA_F_FLOOR``), and the nugget is ``NUGGET_FACTOR * sigma_f^2`` so it
    stays invariant under output rescaling.  If the Cholesky factorization
    fails, the nugget is escalated tenfold up to ``NUGGET_CEILING * sigma_f^2``
    before :class:`CholeskyFailure` is raised.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    ell = np.asarray(lengthscales, dtype=float).ravel()
    n = targets.size
    if n < 1:
        raise ValueError("need at least one observation")
    if inputs.shape[1] != n:
        raise ValueError(f"inputs must be (d, n) with n={n}, got {inputs.shape}")
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")

    m = float(np.mean(targets)) if mean is None else float(mean)
    if signal_variance is None:
        sigma_f = float(np.std(targets))
        if sigma_f < SIGMA_F_FLOOR:
            sigma_f = SIGMA_F_FLOOR
        signal_variance = sigma_f * sigma_f
    if noise_variance is None:
        noise_variance = NUGGET_FACTOR * signal_variance

    params = KernelParams(ell, float(signal_variance), float(noise_variance))
    gram_se = _gram_se(inputs, params)
    ceiling = NUGGET_CEILING * signal_variance
    nugget = float(noise_variance)
    diag = np.arange(n)
    while True:
        gram = gram_se.copy()
        gram[diag, diag] += nugget
        try:
            chol = np.linalg.cholesky(gram)
            break
        except np.linalg.LinAlgError:
            if nugget >= ceiling:
                raise CholeskyFailure(
                    f"Gram matrix indefinite at nugget {nugget:.3e} "
                    f"(ceiling {ceiling:.3e}, n={n})"
                ) from None
            nugget = min(ceiling, max(nugget * 10.0, 1e-12 * signal_variance))

    if nugget != noise_variance:
        params = KernelParams(ell, float(signal_variance), nugget)
    alpha = cho_solve((chol, True), targets - m)
    return GpSurrogate(inputs.copy(), targets.copy(), m, params, chol, alpha)


def _cross_kernel(gp: GpSurrogate, x_star: np.ndarray) -> np.ndarray:
    """Nugget-free kernel vector k(X, x*); x_star may be (d,) or (d, m)."""
    ell = gp.params.lengthscales
    scaled_train = gp.inputs / ell[:, None]
    scaled_star = np.atleast_2d(x_star.T).T / ell[:, None]
    diff = scaled_train[:, :, None] - scaled_star[:, None, :]
    sq = np.einsum("kij,kij->ij", diff, diff)
    return gp.params.signal_variance * np.exp(-0.5 * sq)


def predict(gp: GpSurrogate, x_star) -> tuple[float, float]:
    """Posterior mean and variance at one point (latent, nugget-free variance)."""
    x = np.asarray(x_star, dtype=float).ravel()
    mean, var = predict_batch(gp, x[:, None])
    return float(mean[0]), float(var[0])


def predict_batch(gp: GpSurrogate, x_stars: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior over points given column-wise, shape (d, m)."""
    k_star = _cross_kernel(gp, x_stars)                 # (n, m)
    mean = gp.mean_const + k_star.T @ gp.alpha
    v = solve_triangular(gp.chol, k_star, lower=True)   # (n, m)
    var = gp.params.signal_variance - np.einsum("ij,ij->j", v, v)
    var[var < VARIANCE_CLIP] = 0.0
    return mean, var


def _log_prior(lengthscales: np.ndarray, sigma_prior: float) -> float:
    if math.isinf(sigma_prior):
        return 0.0
    log_ell = np.log(lengthscales)
    return -float(log_ell @ log_ell) / (2.0 * sigma_prior * sigma_prior)


def log_likelihood(gp: GpSurrogate, sigma_prior: float) -> float:
    """Log marginal likelihood plus the Gaussian log length-scale prior term.

    -1/2 (y-m)^T K^-1 (y-m) - 1/2 log|K| - n/2 log(2 pi)
    - sum_i (ln l_i)^2 / (2 sigma_prior^2)
    """
    resid = gp.targets - gp.mean_const
    quad = float(resid @ gp.alpha)
    logdet = 2.0 * float(np.sum(np.log(np.diag(gp.chol))))
    data = -0.5 * quad - 0.5 * logdet - 0.5 * gp.n * math.log(2.0 * math.pi)
    return data + _log_prior(gp.params.lengthscales, sigma_prior)


def likelihood_derivatives(gp: GpSurrogate, sigma_prior: float) -> LikelihoodDerivatives:
    """Analytic Jacobian and Hessian of :func:`log_likelihood` in log length-scale space.

    Uses dk/d(ln l_i) = k * r_i^2 / l_i^2 with r_i the coordinate difference;
    the mixed second derivative is the product of the two first-order factors
    and the diagonal one carries the extra (r_i^2/l_i^2 - 2) factor.  The
    nugget does not depend on the length-scales, so all derivative matrices are
    built from the nugget-free kernel.
    """
    ell = gp.params.lengthscales
    d = ell.size
    n = gp.n
    gram_se = _gram_se(gp.inputs, gp.params)
    k_inv = cho_solve((gp.chol, True), np.eye(n))
    alpha = gp.alpha

    # D[i] holds the pairwise (xp_i - xq_i)^2 / l_i^2 factors for dimension i.
    scaled = gp.inputs / ell[:, None]
    D = (scaled[:, :, None] - scaled[:, None, :]) ** 2
    dK = gram_se[None, :, :] * D

    inv_sp2 = 0.0 if math.isinf(sigma_prior) else 1.0 / (sigma_prior * sigma_prior)
    log_ell = np.log(ell)

    jac = np.empty(d)
    A = np.empty((d, n, n))
    B = np.empty((d, n))
    for i in range(d):
        A[i] = k_inv @ dK[i]
        B[i] = dK[i] @ alpha
        jac[i] = 0.5 * float(alpha @ B[i]) - 0.5 * float(np.trace(A[i])) - log_ell[i] * inv_sp2

    hess = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            if i == j:
                d2K = dK[i] * (D[i] - 2.0)
            else:
                d2K = gram_se * D[i] * D[j]
            term = -float(B[j] @ cho_solve((gp.chol, True), B[i]))
            term += 0.5 * float(alpha @ (d2K @ alpha))
            term += 0.5 * float(np.sum(A[j] * A[i].T))
            term -= 0.5 * float(np.sum(k_inv * d2K))
            hess[i, j] = term
            hess[j, i] = term
    hess[np.arange(d), np.arange(d)] -= inv_sp2

    return LikelihoodDerivatives(log_likelihood(gp, sigma_prior), jac, hess)


def _ascent_direction(jacobian: np.ndarray, hessian: np.ndarray) -> np.ndarray:
    """Newton step when the Hessian is negative definite, else the gradient."""
    eigvals = np.linalg.eigvalsh(hessian)
    if eigvals.max() < -NEGDEF_TOL:
        return np.linalg.solve(hessian, -jacobian)
    return jacobian.copy()


def hyperparameter_step(gp: GpSurrogate, sigma_prior: float, n_steps: int) -> np.ndarray:
    """Advance the length-scales by ``n_steps`` damped Newton/gradient updates.

    Each step works in log length-scale space, is scaled by a backtracking
    (Armijo) line search on the augmented log-likelihood, and is clamped to
    ``[-LOG_ELL_BOUND, LOG_ELL_BOUND]``.  The GP is refit after every accepted
    step; a failed line search leaves the length-scales unchanged.  The
    augmented log-likelihood never decreases.
    """
    current = gp
    for _ in range(n_steps):
        derivs = likelihood_derivatives(current, sigma_prior)
        direction = _ascent_direction(derivs.jacobian, derivs.hessian)
        slope = float(derivs.jacobian @ direction)
        if not np.isfinite(slope) or slope <= 0.0:
            break
        log_ell = np.log(current.params.lengthscales)
        step = 1.0
        accepted = None
        for _ in range(LINESEARCH_MAX_SHRINKS + 1):
            candidate = np.clip(log_ell + step * direction, -LOG_ELL_BOUND, LOG_ELL_BOUND)
            try:
                trial = fit(
                    current.inputs,
                    current.targets,
                    np.exp(candidate),
                    signal_variance=current.params.signal_variance,
                    noise_variance=current.params.noise_variance,
                    mean=current.mean_const,
                )
                trial_ll = log_likelihood(trial, sigma_prior)
            except CholeskyFailure:
                trial_ll = -math.inf
            if trial_ll >= derivs.value + LINESEARCH_ARMIJO * step * slope:
                accepted = trial
                break
            step *= LINESEARCH_SHRINK
        if accepted is None:
            break
        current = accepted
    return current.params.lengthscales.copy()
