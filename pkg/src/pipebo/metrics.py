"""Simple regret, cross-run aggregation, steps-to-reach, and the superiority ratio.

Traces carry one entry per step of the unit clock. Steps before the first
completed experiment hold NaN; every comparison here treats NaN as "no data",
so such steps never count as reaching a target and never win a superiority
comparison. Censored steps-to-reach values are represented as +inf and
rendered as a dash by the reporting layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "RunTrace",
    "StepsToReach",
    "simple_regret",
    "aggregate",
    "steps_to_reach",
    "superiority_ratio",
    "CENSORED",
]

CENSORED = math.inf


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Per-step best observed value and simple regret for one seeded run."""

    best_values: np.ndarray
    regret: np.ndarray
    seed: int
    strategy: str
    function_id: str = ""
    preset: str = ""

    @property
    def steps(self) -> int:
        return self.best_values.shape[0]


def simple_regret(f_star: float, best_so_far: float) -> float:
    """Distance of the best value found so far from the optimum, clamped at >= 0."""
    return max(f_star - best_so_far, 0.0)


def _regret_matrix(traces: Sequence[RunTrace]) -> np.ndarray:
    if len(traces) == 0:
        raise ValueError("no traces")
    lengths = {t.steps for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"trace length mismatch: {sorted(lengths)}")
    return np.vstack([t.regret for t in traces])


def aggregate(
    traces: Sequence[RunTrace],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-step (median, q25, q75) of the regret traces.

    Median is the average of the middle two for even counts; quartiles use
    linear interpolation. Steps where the traces hold NaN aggregate to NaN.
    """
    arr = _regret_matrix(traces)
    q25, med, q75 = np.quantile(arr, [0.25, 0.5, 0.75], axis=0)
    return med, q25, q75


def _quantile_with_inf(sorted_vals: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile that keeps +inf exact instead of producing NaN."""
    n = sorted_vals.shape[0]
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    t = pos - lo
    if t == 0.0:
        return float(sorted_vals[lo])
    a, b = float(sorted_vals[lo]), float(sorted_vals[lo + 1])
    if math.isinf(b):
        return math.inf
    return a + (b - a) * t


@dataclass(frozen=True)
class StepsToReach:
    """Censored order statistics of first-passage steps; inf means censored."""

    median: float
    iqr: float
    reached_fraction: float

    @property
    def censored(self) -> bool:
        return math.isinf(self.median)


def first_step_reaching(trace: RunTrace, reference_regret: float) -> float:
    """1-based first step whose regret is <= the reference, or +inf if never."""
    hit = np.nonzero(trace.regret <= reference_regret)[0]
    return float(hit[0] + 1) if hit.size else CENSORED


def steps_to_reach(
    traces: Sequence[RunTrace], reference_regret: float
) -> StepsToReach:
    """Median and IQR of the first step at which each run reaches the reference regret.

    Runs that never reach it enter the order statistics as +inf (censored past
    the budget): the median is censored whenever half or more of the runs are,
    and the IQR is reported only while the 75th percentile stays uncensored.
    """
    if reference_regret < 0:
        raise ValueError("reference_regret must be >= 0")
    vals = np.sort([first_step_reaching(t, reference_regret) for t in traces])
    median = _quantile_with_inf(vals, 0.5)
    q75 = _quantile_with_inf(vals, 0.75)
    q25 = _quantile_with_inf(vals, 0.25)
    iqr = q75 - q25 if math.isfinite(q75) else CENSORED
    reached = float(np.mean(np.isfinite(vals)))
    return StepsToReach(median=median, iqr=iqr, reached_fraction=reached)


def superiority_ratio(median_a: np.ndarray, median_b: np.ndarray) -> float:
    """Fraction of steps where series a is strictly below series b.

    Ties (and steps where either side is NaN) count to neither; the
    denominator is the total number of steps.
    """
    a = np.asarray(median_a, dtype=float)
    b = np.asarray(median_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a < b)) / a.shape[0]
