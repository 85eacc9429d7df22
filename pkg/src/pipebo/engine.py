"""Step-clocked pipeline scheduler: the pipelined strategy, the no-update
variant, and the sequential baseline.

An experiment is split into K sequential processes; its parameter vector is
partitioned into K segments and segment i becomes immutable when process i
starts. A set of P experiments sharing a process (an experimental set) moves
through the pipeline one process per step, so K sets are in flight at once.
Each step the oldest set finishes, its results refresh the surrogate, the
still-running sets get their uncommitted segments re-optimized (holding the
committed prefix fixed, penalized away from each other), and a new set is
proposed.

The sequential baseline occupies the pipeline exclusively: one set per K
steps, proposed by the plain confidence-bound argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .acquisition import (
    AcquisitionContext,
    DEFAULT_BUDGETS,
    InnerOptBudgets,
    add_penalizer,
    make_context,
    maximize_acquisition,
    penalized_value,
)
from .gp import (
    DEFAULT_RESTARTS,
    Observation,
    estimate_lipschitz,
    fit_gp,
)
from .metrics import RunTrace

__all__ = [
    "STRATEGIES",
    "PipelineProblem",
    "ExperimentalSet",
    "EngineConfig",
    "EngineState",
    "init_sets",
    "init_state",
    "update_inflight",
    "propose_next",
    "pipebo_step",
    "noupdate_step",
    "vanilla_step",
    "run",
]

STRATEGIES = ("pipebo", "noupdate", "vanilla")

DEFAULT_LOWER = -5.0
DEFAULT_UPPER = 5.0


@dataclass(frozen=True)
class PipelineProblem:
    """Problem geometry: per-process segment sizes, parallel width, box, budget."""

    process_dims: tuple[int, ...]
    parallelism: int = 1
    bounds: Optional[np.ndarray] = None
    budget_steps: int = 200

    def __post_init__(self):
        dims = tuple(int(n) for n in self.process_dims)
        object.__setattr__(self, "process_dims", dims)
        if len(dims) < 1 or any(n < 1 for n in dims):
            raise ValueError("process_dims must be >= 1 positive integers")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.budget_steps < len(dims):
            raise ValueError("budget_steps must be >= number of processes")
        if self.bounds is None:
            b = np.tile([DEFAULT_LOWER, DEFAULT_UPPER], (sum(dims), 1))
        else:
            b = np.asarray(self.bounds, dtype=float)
            if b.shape != (sum(dims), 2):
                raise ValueError(f"bounds must have shape ({sum(dims)}, 2)")
        object.__setattr__(self, "bounds", b)

    @property
    def n_processes(self) -> int:
        return len(self.process_dims)

    @property
    def d(self) -> int:
        return sum(self.process_dims)

    def segment_offset(self, segment_count: int) -> int:
        """Number of leading coordinates covered by the first ``segment_count`` segments."""
        return sum(self.process_dims[:segment_count])


@dataclass
class ExperimentalSet:
    """P parameter vectors moving through the pipeline together.

    ``committed_segments[j]`` counts the leading segments of point j whose
    coordinates are frozen (their processes have started). ``results`` is
    filled exactly once, when the set's final process completes.
    """

    index: int
    points: np.ndarray
    committed_segments: np.ndarray
    results: Optional[np.ndarray] = None

    @property
    def parallelism(self) -> int:
        return self.points.shape[0]


def init_sets(problem: PipelineProblem, rng: np.random.Generator) -> list[ExperimentalSet]:
    """Draw the K warm-up sets, staggered so set n has K-n+1 segments committed.

    The commit counts reflect the state at the first scheduler iteration
    (after K steps): the first set is fully executed and each later set has
    begun one process fewer.
    """
    K, P, d = problem.n_processes, problem.parallelism, problem.d
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    sets = []
    for n in range(1, K + 1):
        points = rng.uniform(lo, hi, (P, d))
        committed = np.full(P, K - n + 1, dtype=int)
        sets.append(ExperimentalSet(index=n, points=points, committed_segments=committed))
    return sets


@dataclass(frozen=True)
class EngineConfig:
    """Engine knobs; defaults match the reference evaluation protocol."""

    kappa: float = 2.0
    budgets: InnerOptBudgets = DEFAULT_BUDGETS
    lipschitz_samples: int = 500
    gp_restarts: int = DEFAULT_RESTARTS
    # minimum penalized-acquisition gain before an in-flight suffix is replaced
    update_tolerance: float = 1e-9


@dataclass
class EngineState:
    """Mutable state of one run; strictly sequential."""

    problem: PipelineProblem
    objective: Callable[[np.ndarray], float]
    rng: np.random.Generator
    config: EngineConfig
    t: int
    inflight: list[ExperimentalSet]
    completed: list[ExperimentalSet] = field(default_factory=list)
    observations: list[Observation] = field(default_factory=list)
    best: float = float("nan")
    trace: Optional[np.ndarray] = None
    warm_params: Optional[np.ndarray] = None
    next_index: int = 0
    last_inner_penalizers: int = 0

    def __post_init__(self):
        if self.trace is None:
            self.trace = np.full(self.problem.budget_steps, np.nan)


def _record_results(state: EngineState, finished: ExperimentalSet) -> None:
    values = []
    for x in finished.points:
        y = float(state.objective(x))
        if not np.isfinite(y):
            raise RuntimeError(
                f"objective returned non-finite value {y!r} at x={x!r} "
                f"(set {finished.index})"
            )
        values.append(y)
        state.observations.append(Observation(x=x.copy(), y=y))
    finished.results = np.asarray(values)
    state.completed.append(finished)
    batch_best = max(values)
    if not (state.best >= batch_best):  # NaN-safe running max
        state.best = batch_best


def _build_context(state: EngineState) -> AcquisitionContext:
    cfg = state.config
    fit_seed = int(state.rng.integers(2**63))
    model = fit_gp(
        state.observations,
        seed=fit_seed,
        warm_start=state.warm_params,
        n_restarts=cfg.gp_restarts,
    )
    state.warm_params = model.log_params()
    L_hat = estimate_lipschitz(
        model, state.problem.bounds, state.rng, n_samples=cfg.lipschitz_samples
    )
    M_hat = float(np.max(model.y_std))
    return make_context(model, cfg.kappa, L_hat, M_hat)


def update_inflight(
    exp_set: ExperimentalSet,
    fixed_segment_count: int,
    ctx: AcquisitionContext,
    problem: PipelineProblem,
    rng: np.random.Generator,
    *,
    budgets: InnerOptBudgets = DEFAULT_BUDGETS,
    update_tolerance: float = 1e-9,
    reoptimize: bool = True,
) -> tuple[ExperimentalSet, AcquisitionContext]:
    """Re-optimize the uncommitted suffix of each point in the set.

    The first ``fixed_segment_count`` segments stay bitwise fixed. A point's
    suffix is replaced only when the re-optimized point improves the penalized
    acquisition beyond ``update_tolerance`` (ties keep the current suffix).
    Each point is appended to the context's penalizer set after it is
    processed, so later points of the same set are pushed away from it.
    With ``reoptimize=False`` the points are left untouched and only
    accumulated as penalizers (the frozen-parameter variant).
    """
    K = problem.n_processes
    m = problem.segment_offset(fixed_segment_count)
    new_points = exp_set.points.copy()

    for j in range(exp_set.parallelism):
        if reoptimize and fixed_segment_count < K:
            current = new_points[j]
            current_value = penalized_value(ctx, current)
            candidate = maximize_acquisition(
                ctx,
                problem.bounds,
                fixed_prefix=current[:m],
                rng=rng,
                budgets=budgets,
                anchors=current[None, :],
            )
            gain = penalized_value(ctx, candidate) - current_value
            if gain > update_tolerance * max(1.0, abs(current_value)):
                new_points[j] = candidate
        ctx = add_penalizer(ctx, new_points[j])

    if fixed_segment_count >= K:
        # nothing left to change; the set itself is returned as-is
        return exp_set, ctx
    updated = replace(
        exp_set,
        points=new_points,
        committed_segments=np.full(exp_set.parallelism, fixed_segment_count, dtype=int),
    )
    return updated, ctx


def propose_next(
    ctx: AcquisitionContext,
    problem: PipelineProblem,
    rng: np.random.Generator,
    *,
    index: int,
    budgets: InnerOptBudgets = DEFAULT_BUDGETS,
) -> tuple[ExperimentalSet, AcquisitionContext]:
    """Propose the next set greedily: each point maximizes the penalized
    acquisition and then joins the penalizer set before the next is chosen."""
    P, d = problem.parallelism, problem.d
    points = np.empty((P, d))
    for j in range(P):
        points[j] = maximize_acquisition(
            ctx, problem.bounds, rng=rng, budgets=budgets
        )
        ctx = add_penalizer(ctx, points[j])
    new_set = ExperimentalSet(
        index=index,
        points=points,
        committed_segments=np.zeros(P, dtype=int),
    )
    return new_set, ctx


def _pipeline_step(state: EngineState, reoptimize: bool) -> EngineState:
    cfg = state.config
    K = state.problem.n_processes
    t_new = state.t + 1

    finished = state.inflight.pop(0)
    _record_results(state, finished)

    ctx = _build_context(state)
    for i, exp_set in enumerate(state.inflight):
        fixed = K - (i + 1)
        state.inflight[i], ctx = update_inflight(
            exp_set,
            fixed,
            ctx,
            state.problem,
            state.rng,
            budgets=cfg.budgets,
            update_tolerance=cfg.update_tolerance,
            reoptimize=reoptimize,
        )
    state.last_inner_penalizers = len(ctx.penalizers)

    new_set, _ = propose_next(
        ctx, state.problem, state.rng, index=state.next_index, budgets=cfg.budgets
    )
    state.next_index += 1
    state.inflight.append(new_set)

    state.trace[t_new - 1] = state.best
    state.t = t_new
    return state


def pipebo_step(state: EngineState) -> EngineState:
    """One scheduler iteration: record the finished set, refresh the surrogate,
    re-optimize every in-flight suffix, and propose the next set."""
    return _pipeline_step(state, reoptimize=True)


def noupdate_step(state: EngineState) -> EngineState:
    """Like ``pipebo_step`` but in-flight parameters stay frozen at proposal
    time; they are still accumulated as penalizers."""
    return _pipeline_step(state, reoptimize=False)


def vanilla_step(state: EngineState) -> EngineState:
    """One step of the sequential baseline.

    The running set occupies the pipeline for K steps; at every K-th step its
    results are recorded and the next set is proposed by the plain
    confidence-bound argmax (empty penalizer set).
    """
    cfg = state.config
    K = state.problem.n_processes
    t_new = state.t + 1

    if t_new % K == 0:
        finished = state.inflight.pop(0)
        _record_results(state, finished)
        ctx = _build_context(state)
        new_set, _ = propose_next(
            ctx, state.problem, state.rng, index=state.next_index, budgets=cfg.budgets
        )
        new_set.committed_segments[:] = K  # all parameters locked at launch
        state.next_index += 1
        state.inflight.append(new_set)

    state.trace[t_new - 1] = state.best
    state.t = t_new
    return state


def init_state(
    strategy: str,
    problem: PipelineProblem,
    objective: Callable[[np.ndarray], float],
    seed: int,
    config: Optional[EngineConfig] = None,
) -> tuple[EngineState, Callable[[EngineState], EngineState]]:
    """Build the warmed-up state for a run and return it with its step function."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    cfg = config or EngineConfig()
    rng = np.random.default_rng(seed)
    K = problem.n_processes

    if strategy == "vanilla":
        lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
        first = ExperimentalSet(
            index=1,
            points=rng.uniform(lo, hi, (problem.parallelism, problem.d)),
            committed_segments=np.full(problem.parallelism, K, dtype=int),
        )
        state = EngineState(
            problem=problem, objective=objective, rng=rng, config=cfg,
            t=0, inflight=[first], next_index=2,
        )
        return state, vanilla_step
    state = EngineState(
        problem=problem, objective=objective, rng=rng, config=cfg,
        t=K - 1, inflight=init_sets(problem, rng), next_index=K + 1,
    )
    return state, (pipebo_step if strategy == "pipebo" else noupdate_step)


def run(
    strategy: str,
    problem: PipelineProblem,
    objective: Callable[[np.ndarray], float],
    seed: int,
    *,
    f_star: Optional[float] = None,
    config: Optional[EngineConfig] = None,
) -> RunTrace:
    """Execute one seeded run and return its per-step best/regret trace.

    ``f_star`` defaults to the objective's own ``f_star`` attribute when it
    has one; without either, the regret column is NaN.
    """
    state, step = init_state(strategy, problem, objective, seed, config)
    while state.t < problem.budget_steps:
        step(state)

    if f_star is None:
        f_star = getattr(objective, "f_star", float("nan"))
    best = state.trace.copy()
    regret = np.maximum(f_star - best, 0.0)
    return RunTrace(best_values=best, regret=regret, seed=seed, strategy=strategy)
