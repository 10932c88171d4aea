"""Trust-region Bayesian optimization with a locally adaptive transformed space.

The optimizer keeps its observations in a working representation that is
recentered on the incumbent, rotated onto the output-weighted principal
components, and rescaled by the GP length-scales at every iteration, so the
local surrogate stays well-conditioned while the induced trust region adapts
its shape to the objective.
"""
from .acquisition import Proposal, TrustRegion, discard, expected_improvement, propose
from .bench import (
    BenchReport,
    DimensionMismatch,
    FUNCTION_NAMES,
    IoFailure,
    TestFunction,
    eval_testfn,
    get_function,
    run_benchmark,
    write_report,
)
from .doe import Design, latin_hypercube
from .gp import (
    CholeskyFailure,
    GpSurrogate,
    KernelParams,
    LikelihoodDerivatives,
    fit,
    hyperparameter_step,
    kernel_se_ard,
    likelihood_derivatives,
    log_likelihood,
    predict,
)
from .optimizer import (
    InvalidBounds,
    LabcatConfig,
    ObjectiveNonFinite,
    OptResult,
    ProtocolViolation,
    RunRecord,
    Session,
    Termination,
    ask_tell_session,
    check_termination,
    minimize,
)
from .transform import (
    DegenerateOutputs,
    ObservationSet,
    TransformState,
    init_from_bounds,
    normalize_outputs,
    recenter,
    rescale,
    rotate,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "CholeskyFailure",
    "DegenerateOutputs",
    "Design",
    "DimensionMismatch",
    "FUNCTION_NAMES",
    "GpSurrogate",
    "InvalidBounds",
    "IoFailure",
    "KernelParams",
    "LabcatConfig",
    "LikelihoodDerivatives",
    "ObjectiveNonFinite",
    "ObservationSet",
    "OptResult",
    "Proposal",
    "ProtocolViolation",
    "RunRecord",
    "Session",
    "Termination",
    "TestFunction",
    "TransformState",
    "TrustRegion",
    "ask_tell_session",
    "check_termination",
    "discard",
    "eval_testfn",
    "expected_improvement",
    "fit",
    "get_function",
    "hyperparameter_step",
    "init_from_bounds",
    "kernel_se_ard",
    "latin_hypercube",
    "likelihood_derivatives",
    "log_likelihood",
    "minimize",
    "normalize_outputs",
    "predict",
    "propose",
    "recenter",
    "rescale",
    "rotate",
    "run_benchmark",
    "write_report",
]
