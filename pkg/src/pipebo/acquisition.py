"""Confidence-bound acquisition, the in-flight local penalizer, and the inner maximizer.

The acquisition is mu(x) + kappa * sigma(x) in the model's standardized output
space. Points belonging to experiments still in progress multiply it by a
penalizer in (0, 1) that suppresses proposals near them; the inner maximizer
supports freezing a leading block of coordinates so an experiment's already
committed process parameters stay fixed while its remaining ones move.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import erfc

from .gp import GPModel, posterior, posterior_batch

__all__ = [
    "AcquisitionContext",
    "InnerOptBudgets",
    "make_context",
    "add_penalizer",
    "ucb",
    "ucb_batch",
    "penalizer_factor",
    "local_penalizer",
    "penalized_value",
    "penalized_values",
    "maximize_acquisition",
]

_VAR_FLOOR = 1e-12
# open-interval clamp: double-precision erfc saturates for large arguments
_PHI_LO = np.finfo(float).tiny
_PHI_HI = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True, eq=False)
class _Penalizer:
    """An in-flight point with its posterior statistics frozen at context build time."""

    point: np.ndarray
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class AcquisitionContext:
    """Everything needed to evaluate the penalized acquisition.

    ``L_hat`` is the estimated maximum posterior-mean slope, ``M_hat`` the best
    observed standardized output. Contexts are immutable; ``add_penalizer``
    returns a new one.
    """

    model: GPModel
    kappa: float
    L_hat: float
    M_hat: float
    penalizers: tuple[_Penalizer, ...] = ()

    @property
    def penalizer_points(self) -> list[np.ndarray]:
        return [p.point for p in self.penalizers]


@dataclass(frozen=True)
class InnerOptBudgets:
    """Candidate/refinement budgets for the inner maximizer."""

    candidates: int = 2000
    refine_top: int = 10
    refine_iters: int = 100
    tol: float = 1e-6


DEFAULT_BUDGETS = InnerOptBudgets()


def make_context(
    model: GPModel,
    kappa: float,
    L_hat: float,
    M_hat: float,
    penalizer_points: Optional[list[np.ndarray]] = None,
) -> AcquisitionContext:
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    if L_hat <= 0:
        raise ValueError("L_hat must be > 0")
    ctx = AcquisitionContext(model=model, kappa=kappa, L_hat=L_hat, M_hat=M_hat)
    for p in penalizer_points or []:
        ctx = add_penalizer(ctx, p)
    return ctx


def add_penalizer(ctx: AcquisitionContext, x: np.ndarray) -> AcquisitionContext:
    """Return a context that additionally penalizes proposals near ``x``."""
    x = np.array(x, dtype=float).ravel()
    mean, var = posterior(ctx.model, x)
    pen = _Penalizer(point=x, mean=mean, variance=var)
    return replace(ctx, penalizers=ctx.penalizers + (pen,))


def ucb_batch(ctx: AcquisitionContext, X: np.ndarray) -> np.ndarray:
    mean, var = posterior_batch(ctx.model, X)
    return mean + ctx.kappa * np.sqrt(var)


def ucb(ctx: AcquisitionContext, x: np.ndarray) -> float:
    mean, var = posterior(ctx.model, x)
    return float(mean + ctx.kappa * np.sqrt(var))


def penalizer_factor(
    distance: np.ndarray | float,
    mean_lp: float,
    variance_lp: float,
    L_hat: float,
    M_hat: float,
) -> np.ndarray | float:
    """Penalizer value as a function of distance to the in-flight point.

    0.5 * erfc( -(L_hat * distance - M_hat + mean_lp) / (2 * variance_lp) ),
    with the variance clamped away from zero. Output is clipped to the open
    unit interval at float resolution.
    """
    var = max(float(variance_lp), _VAR_FLOOR)
    z = (L_hat * np.asarray(distance, dtype=float) - M_hat + mean_lp) / (2.0 * var)
    phi = np.clip(0.5 * erfc(-z), _PHI_LO, _PHI_HI)
    return float(phi) if np.ndim(distance) == 0 else phi


def local_penalizer(
    ctx: AcquisitionContext, x: np.ndarray, x_lp: np.ndarray
) -> float:
    """Penalizer at ``x`` for a single in-flight point ``x_lp``."""
    x = np.asarray(x, dtype=float).ravel()
    x_lp = np.asarray(x_lp, dtype=float).ravel()
    mean, var = posterior(ctx.model, x_lp)
    dist = float(np.linalg.norm(x_lp - x))
    return penalizer_factor(dist, mean, var, ctx.L_hat, ctx.M_hat)


def penalized_values(ctx: AcquisitionContext, X: np.ndarray) -> np.ndarray:
    """Acquisition times the product of all penalizers, batched over rows of X.

    The product over an empty penalizer set is 1, so the value reduces to the
    plain confidence bound.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals = ucb_batch(ctx, X)
    if not ctx.penalizers:
        return vals
    pts = np.stack([p.point for p in ctx.penalizers])
    means = np.array([p.mean for p in ctx.penalizers])
    variances = np.maximum([p.variance for p in ctx.penalizers], _VAR_FLOOR)
    dists = cdist(X, pts)
    z = (ctx.L_hat * dists - ctx.M_hat + means[None, :]) / (2.0 * variances[None, :])
    phi = np.clip(0.5 * erfc(-z), _PHI_LO, _PHI_HI)
    return vals * np.prod(phi, axis=1)


def penalized_value(ctx: AcquisitionContext, x: np.ndarray) -> float:
    return float(penalized_values(ctx, np.asarray(x, dtype=float).ravel()[None, :])[0])


def _compass_refine(
    ctx: AcquisitionContext,
    points: np.ndarray,
    values: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    n_fixed: int,
    budgets: InnerOptBudgets,
) -> tuple[np.ndarray, np.ndarray]:
    """Bounded pattern search over the trailing free coordinates, batched over points.

    Each candidate polls +/- one step along every free coordinate; the best
    strictly-improving poll is accepted (doubling the step, capped), otherwise
    the step halves. Stops at step scale < tol or after refine_iters
    iterations. Deterministic; fixed leading coordinates are never touched.
    """
    pts = points.copy()
    vals = values.copy()
    k, d = pts.shape
    n_free = d - n_fixed
    widths = hi[n_fixed:] - lo[n_fixed:]
    eye = np.eye(n_free)
    dirs = np.vstack([eye, -eye]) * widths[None, :]
    scale = np.full(k, 0.1)
    active = np.ones(k, dtype=bool)

    for _ in range(budgets.refine_iters):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        base = pts[idx]
        trials = np.repeat(base[:, None, :], 2 * n_free, axis=1)
        poll = base[:, None, n_fixed:] + scale[idx, None, None] * dirs[None, :, :]
        np.clip(poll, lo[n_fixed:], hi[n_fixed:], out=poll)
        trials[:, :, n_fixed:] = poll

        tvals = penalized_values(ctx, trials.reshape(-1, d)).reshape(
            idx.size, 2 * n_free
        )
        best_j = np.argmax(tvals, axis=1)
        best_v = tvals[np.arange(idx.size), best_j]

        improved = best_v > vals[idx]
        moved = idx[improved]
        pts[moved] = trials[improved, best_j[improved]]
        vals[moved] = best_v[improved]
        scale[moved] = np.minimum(scale[moved] * 2.0, 0.2)
        stalled = idx[~improved]
        scale[stalled] *= 0.5
        active[stalled] = scale[stalled] >= budgets.tol
    return pts, vals


def maximize_acquisition(
    ctx: AcquisitionContext,
    bounds: np.ndarray,
    fixed_prefix: Optional[np.ndarray] = None,
    *,
    rng: np.random.Generator,
    budgets: InnerOptBudgets = DEFAULT_BUDGETS,
    anchors: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Maximize the penalized acquisition over the box.

    With ``fixed_prefix`` the first m coordinates are pinned to the given
    values and only the remaining ones are searched. Seeded uniform candidates
    over the free coordinates are ranked, the best ``refine_top`` are polished
    by bounded pattern search, and ties go to the lowest candidate index.
    ``anchors`` are optional full points prepended to the candidate pool (and
    therefore winning all ties), used to keep an incumbent in the race.
    """
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    lo, hi = bounds[:, 0], bounds[:, 1]

    m = 0
    if fixed_prefix is not None:
        fixed_prefix = np.asarray(fixed_prefix, dtype=float).ravel()
        m = fixed_prefix.shape[0]
        if m >= d:
            raise ValueError("nothing to optimize: all coordinates fixed")

    n_rand = budgets.candidates
    cand = np.empty((n_rand, d))
    if m > 0:
        cand[:, :m] = fixed_prefix
    cand[:, m:] = rng.uniform(lo[m:], hi[m:], (n_rand, d - m))
    if anchors is not None:
        anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        cand = np.vstack([anchors, cand])

    vals = penalized_values(ctx, cand)
    top = np.argsort(-vals, kind="stable")[: budgets.refine_top]
    top = np.sort(top)  # refine in candidate-index order so ties resolve low
    ref_pts, ref_vals = _compass_refine(ctx, cand[top], vals[top], lo, hi, m, budgets)

    best = 0
    for j in range(1, ref_pts.shape[0]):
        if ref_vals[j] > ref_vals[best]:
            best = j
    return ref_pts[best]
