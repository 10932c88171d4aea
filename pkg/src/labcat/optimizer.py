"""Main optimization loop: DoE, transform maintenance, GP refits, proposals.

One iteration renormalizes the outputs, recenters on the incumbent, rotates
onto the weighted principal components, fits the GP at unit length-scales,
takes the length-scale update step, rescales, discards stale observations,
refits on the reduced set, and proposes the next evaluation by expected
improvement over the trust region.  Internal terminations (collapsed output
range, irreparably ill-conditioned Gram matrix) trigger an independent restart
with the remaining budget; the RNG stream continues across restarts so whole
runs stay deterministic for a given seed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .acquisition import TrustRegion, discard, propose
from .doe import latin_hypercube
from .gp import CholeskyFailure, fit, hyperparameter_step
from .transform import (
    DegenerateOutputs,
    ObservationSet,
    TransformState,
    init_from_bounds,
    normalize_outputs,
    recenter,
    rescale,
    rotate,
    validate_bounds,
)


class InvalidBounds(Exception):
    """Bounds are malformed: wrong shape, non-finite, or lo >= hi."""


class ObjectiveNonFinite(Exception):
    """The objective returned NaN or +/-inf; carries the partial trace."""

    def __init__(self, message, x=None, eval_index=None, trace=None):
        super().__init__(message)
        self.x = x
        self.eval_index = eval_index
        self.trace = trace if trace is not None else []


class ProtocolViolation(Exception):
    """ask/tell called out of order, or tell echoed a different point."""


class Termination(Enum):
    TARGET_REACHED = "TargetReached"
    RANGE_COLLAPSED = "RangeCollapsed"
    BUDGET_EXHAUSTED = "BudgetExhausted"


def default_beta(dim: int) -> float:
    """Trust-region half-width heuristic 1/d, clamped to [0.1, 1]."""
    return max(0.1, min(1.0, 1.0 / dim))


def default_doe_size(dim: int) -> int:
    return 2 * dim + 1


@dataclass(frozen=True)
class LabcatConfig:
    """Run parameters; ``beta`` and ``doe_size`` of None resolve per dimension."""

    beta: float | None = None
    rho: int = 7
    sigma_prior: float = 0.1
    hyper_steps: int = 1
    doe_size: int | None = None
    max_evals: int = 150
    target_value: float | None = None
    range_tolerance: float = 1e-12
    seed: int = 0
    rotation_enabled: bool = True
    uniform_lengthscale_prior: bool = False

    def resolve(self, dim: int) -> "LabcatConfig":
        """Fill dimension-dependent defaults and validate."""
        cfg = replace(
            self,
            beta=self.beta if self.beta is not None else default_beta(dim),
            doe_size=self.doe_size if self.doe_size is not None else default_doe_size(dim),
        )
        if not (cfg.beta > 0.0):
            raise ValueError("beta must be positive")
        if cfg.rho < 1:
            raise ValueError("rho must be a positive integer")
        if not (cfg.sigma_prior > 0.0):
            raise ValueError("sigma_prior must be positive")
        if cfg.hyper_steps < 1:
            raise ValueError("hyper_steps must be a positive integer")
        if cfg.doe_size < 1:
            raise ValueError("doe_size must be a positive integer")
        if cfg.max_evals < 1:
            raise ValueError("max_evals must be a positive integer")
        if cfg.range_tolerance < 0.0:
            raise ValueError("range_tolerance must be non-negative")
        return cfg


@dataclass(frozen=True)
class RunRecord:
    """One objective evaluation: where, what came back, and the running best."""

    eval_index: int
    x: np.ndarray          # objective space
    y: float
    best_y: float
    wall_ns: int


@dataclass(frozen=True)
class OptResult:
    best_x: np.ndarray
    best_y: float
    n_evals: int
    n_restarts: int
    trace: tuple[RunRecord, ...]
    termination: Termination


def check_termination(
    best_y: float,
    n_evals: int,
    config: LabcatConfig,
    out_scale: float | None = None,
    out_offset: float | None = None,
) -> Termination | None:
    """First applicable stop reason, or None to continue.

    The output-range test compares ``a`` against a tolerance relative to the
    magnitude of the incumbent value ``b``; it is skipped when no transform
    state is supplied (before initialization, or right after an evaluation
    while the stored range is stale).
    """
    if config.target_value is not None and best_y <= config.target_value:
        return Termination.TARGET_REACHED
    if out_scale is not None:
        floor = config.range_tolerance * max(1.0, abs(out_offset))
        if out_scale < floor:
            return Termination.RANGE_COLLAPSED
    if n_evals >= config.max_evals:
        return Termination.BUDGET_EXHAUSTED
    return None


@dataclass
class _EngineView:
    """Mutable introspection shared between the engine generator and its session."""

    n_evals: int = 0
    n_restarts: int = 0
    best_x: np.ndarray | None = None
    best_y: float = math.inf
    termination: Termination | None = None
    obs: ObservationSet | None = None
    state: TransformState | None = None


def _engine(bounds: np.ndarray, config: LabcatConfig, view: _EngineView):
    """Generator yielding objective-space points and receiving their values."""
    d = bounds.shape[0]
    rng = np.random.default_rng(config.seed)
    sigma_prior = math.inf if config.uniform_lengthscale_prior else config.sigma_prior
    tr = TrustRegion(config.beta)

    while True:
        # Fresh episode: design, evaluate, initialize the transform from the bounds.
        design = latin_hypercube(bounds, config.doe_size, rng)
        x0_cols: list[np.ndarray] = []
        y0_vals: list[float] = []
        for j in range(config.doe_size):
            if view.n_evals >= config.max_evals:
                view.termination = Termination.BUDGET_EXHAUSTED
                return
            y = yield design.points[:, j].copy()
            x0_cols.append(design.points[:, j])
            y0_vals.append(y)
            reason = check_termination(view.best_y, view.n_evals, config)
            if reason is not None and reason is not Termination.RANGE_COLLAPSED:
                view.termination = reason
                return
        try:
            obs, state = init_from_bounds(np.column_stack(x0_cols), np.array(y0_vals), bounds)
        except DegenerateOutputs:
            # A flat design signals a flat objective; restarting cannot help.
            view.termination = Termination.RANGE_COLLAPSED
            return
        view.obs, view.state = obs, state
        age_counter = config.doe_size

        restart = False
        while not restart:
            if view.n_evals >= config.max_evals:
                view.termination = Termination.BUDGET_EXHAUSTED
                return
            try:
                normalize_outputs(state, obs)
            except DegenerateOutputs:
                restart = True
                break
            reason = check_termination(
                view.best_y, view.n_evals, config, state.out_scale, state.out_offset
            )
            if reason is Termination.RANGE_COLLAPSED:
                restart = True
                break
            if reason is not None:
                view.termination = reason
                return

            recenter(state, obs)
            if config.rotation_enabled:
                rotate(state, obs)
            try:
                gp = fit(obs.inputs, obs.outputs, np.ones(d))
                lengthscales = hyperparameter_step(gp, sigma_prior, config.hyper_steps)
            except CholeskyFailure:
                restart = True
                break
            rescale(state, obs, lengthscales)
            discard(obs, tr, config.rho, d)
            try:
                gp = fit(obs.inputs, obs.outputs, np.ones(d))
            except CholeskyFailure:
                restart = True
                break

            proposal = propose(gp, tr, state, bounds, rng)
            y = yield proposal.x_objective.copy()
            y_prime = (y - state.out_offset) / state.out_scale
            obs.append(proposal.x_prime, y_prime, age_counter)
            age_counter += 1
            reason = check_termination(view.best_y, view.n_evals, config)
            if reason is not None and reason is not Termination.RANGE_COLLAPSED:
                view.termination = reason
                return

        view.n_restarts += 1


class Session:
    """Stateful ask/tell handle; drives the same engine as :func:`minimize`.

    ``ask`` returns the next point to evaluate (the design points first, then
    the trust-region proposals) and ``tell`` hands back the objective value for
    exactly that point.  Interleaving them with an external evaluation loop
    reproduces the evaluation sequence of :func:`minimize` for the same seed.
    """

    def __init__(self, bounds, config: LabcatConfig | None = None):
        try:
            self._bounds = validate_bounds(bounds)
        except ValueError as exc:
            raise InvalidBounds(str(exc)) from None
        base = config if config is not None else LabcatConfig()
        self._config = base.resolve(self._bounds.shape[0])
        self._view = _EngineView()
        self._trace: list[RunRecord] = []
        self._gen = _engine(self._bounds, self._config, self._view)
        self._clock = time.perf_counter_ns()
        self._pending: np.ndarray | None = None
        self._aborted = False
        try:
            self._pending = next(self._gen)
        except StopIteration:
            self._pending = None

    @property
    def config(self) -> LabcatConfig:
        return self._config

    @property
    def bounds(self) -> np.ndarray:
        return self._bounds.copy()

    @property
    def finished(self) -> bool:
        return self._pending is None or self._aborted

    @property
    def n_evals(self) -> int:
        return self._view.n_evals

    @property
    def n_obs(self) -> int:
        return 0 if self._view.obs is None else self._view.obs.n

    @property
    def rotation(self) -> np.ndarray | None:
        """Current rotation matrix R, for introspection; None before init."""
        return None if self._view.state is None else self._view.state.rotation.copy()

    @property
    def trace(self) -> tuple[RunRecord, ...]:
        return tuple(self._trace)

    def ask(self) -> np.ndarray:
        if self._aborted:
            raise ProtocolViolation("session aborted after a non-finite objective value")
        if self._pending is None:
            raise ProtocolViolation("session finished; no further points to evaluate")
        return self._pending.copy()

    def tell(self, x, y: float) -> None:
        if self._aborted:
            raise ProtocolViolation("session aborted after a non-finite objective value")
        if self._pending is None:
            raise ProtocolViolation("tell without a pending ask")
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != self._pending.shape or not np.array_equal(x, self._pending):
            raise ProtocolViolation("tell must echo the most recent ask's point")
        y = float(y)
        if not math.isfinite(y):
            self._aborted = True
            raise ObjectiveNonFinite(
                f"objective returned {y!r} at evaluation {self._view.n_evals}",
                x=x,
                eval_index=self._view.n_evals,
                trace=list(self._trace),
            )

        view = self._view
        view.n_evals += 1
        if y < view.best_y:
            view.best_y = y
            view.best_x = x.copy()
        now = time.perf_counter_ns()
        self._trace.append(
            RunRecord(
                eval_index=view.n_evals - 1,
                x=x.copy(),
                y=y,
                best_y=view.best_y,
                wall_ns=now - self._clock,
            )
        )
        self._clock = now
        try:
            self._pending = self._gen.send(y)
        except StopIteration:
            self._pending = None

    def best(self) -> tuple[np.ndarray, float]:
        if self._view.best_x is None:
            raise ProtocolViolation("no evaluations recorded yet")
        return self._view.best_x.copy(), self._view.best_y

    def result(self) -> OptResult:
        if not self.finished:
            raise ProtocolViolation("session is still running")
        termination = self._view.termination
        if termination is None:
            termination = Termination.BUDGET_EXHAUSTED
        best_x, best_y = self.best()
        return OptResult(
            best_x=best_x,
            best_y=best_y,
            n_evals=self._view.n_evals,
            n_restarts=self._view.n_restarts,
            trace=self.trace,
            termination=termination,
        )


def ask_tell_session(bounds, config: LabcatConfig | None = None) -> Session:
    """Create an ask/tell handle for an external evaluation loop."""
    return Session(bounds, config)


def minimize(objective, bounds, config: LabcatConfig | None = None) -> OptResult:
    """Minimize a deterministic objective over box bounds.

    The objective is called synchronously with one objective-space point per
    evaluation; a NaN or infinite return aborts the run with the partial trace
    attached to the raised :class:`ObjectiveNonFinite`.
    """
    session = Session(bounds, config)
    while not session.finished:
        x = session.ask()
        y = objective(x)
        session.tell(x, y)
    return session.result()
