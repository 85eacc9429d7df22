"""Pipelined Bayesian optimization with mid-experiment parameter updates.

Experiments that consist of K sequential processes are staggered so P*K of
them run at once; results from finished experiments re-optimize the not yet
committed process parameters of the ones still running. The package bundles
the scheduler, sequential and frozen-parameter baselines, native benchmark
functions, regret metrics, and a deterministic experiment harness.
"""

__version__ = "0.1.0"

from .acquisition import (
    AcquisitionContext,
    InnerOptBudgets,
    local_penalizer,
    make_context,
    maximize_acquisition,
    penalized_value,
    penalized_values,
    ucb,
)
from .benchmarks import (
    SUPPORTED_FUNCTIONS,
    BenchmarkInstance,
    SubprocessObjective,
    evaluate,
    make_function,
    maximization_objective,
)
from .engine import (
    STRATEGIES,
    EngineConfig,
    ExperimentalSet,
    PipelineProblem,
    init_sets,
    run,
)
from .gp import (
    GPModel,
    Observation,
    estimate_lipschitz,
    fit_gp,
    posterior,
    posterior_mean_gradient,
)
from .metrics import (
    RunTrace,
    aggregate,
    simple_regret,
    steps_to_reach,
    superiority_ratio,
)

__all__ = [
    "__version__",
    "AcquisitionContext",
    "BenchmarkInstance",
    "EngineConfig",
    "ExperimentalSet",
    "GPModel",
    "InnerOptBudgets",
    "Observation",
    "PipelineProblem",
    "RunTrace",
    "STRATEGIES",
    "SUPPORTED_FUNCTIONS",
    "SubprocessObjective",
    "aggregate",
    "estimate_lipschitz",
    "evaluate",
    "fit_gp",
    "init_sets",
    "local_penalizer",
    "make_context",
    "make_function",
    "maximization_objective",
    "maximize_acquisition",
    "penalized_value",
    "penalized_values",
    "posterior",
    "posterior_mean_gradient",
    "run",
    "simple_regret",
    "steps_to_reach",
    "superiority_ratio",
    "ucb",
]
