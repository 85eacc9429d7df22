"""Black-box benchmark functions on the [-5, 5]^d box, plus an external-objective hook.

A representative subset of the standard black-box optimization benchmarking
functions is implemented natively in minimization form with f_opt = 0: each
instance draws its own optimum location (and rotation, where one applies)
from an instance seed. Arbitrary objectives can be plugged in through a
line-oriented subprocess protocol.
"""

from __future__ import annotations

import logging
import subprocess
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SUPPORTED_FUNCTIONS",
    "FUNCTION_NAMES",
    "BenchmarkInstance",
    "make_function",
    "evaluate",
    "MaximizationObjective",
    "maximization_objective",
    "SubprocessObjective",
]

log = logging.getLogger(__name__)

FUNCTION_NAMES = {
    "F1": "Sphere",
    "F2": "Separable Ellipsoidal",
    "F3": "Rastrigin",
    "F5": "Linear Slope",
    "F8": "Rosenbrock",
    "F10": "Rotated Ellipsoidal",
    "F12": "Bent Cigar",
    "F14": "Different Powers",
}
SUPPORTED_FUNCTIONS = tuple(FUNCTION_NAMES)

DEFAULT_LOWER = -5.0
DEFAULT_UPPER = 5.0


@dataclass
class BenchmarkInstance:
    """One seeded instance of a benchmark function (minimization form).

    Immutable apart from the evaluation counters; instances must not be shared
    across runs.
    """

    function_id: str
    d: int
    x_opt: np.ndarray
    f_opt: float
    rotation: Optional[np.ndarray]
    instance_seed: int
    evaluations: int = 0
    clipped_queries: int = 0

    @property
    def name(self) -> str:
        return FUNCTION_NAMES[self.function_id]


def _ellipsoid_weights(d: int) -> np.ndarray:
    if d == 1:
        return np.ones(1)
    return 10.0 ** (6.0 * np.arange(d) / (d - 1))


def _power_exponents(d: int) -> np.ndarray:
    if d == 1:
        return np.array([2.0])
    return 2.0 + 4.0 * np.arange(d) / (d - 1)


def _slope_coeffs(x_opt: np.ndarray) -> np.ndarray:
    d = x_opt.shape[0]
    mag = 10.0 ** (np.arange(d) / (d - 1)) if d > 1 else np.ones(1)
    return np.sign(x_opt) * mag


def _rotation_matrix(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    # fix the factorization's sign ambiguity so the matrix is seed-unique
    return q * np.sign(np.diag(r))


def make_function(function_id: str, d: int, instance_seed: int) -> BenchmarkInstance:
    """Build a seeded instance; the optimum location varies with the seed."""
    if function_id not in FUNCTION_NAMES:
        raise ValueError(
            f"unsupported function {function_id!r}; supported: "
            + ", ".join(SUPPORTED_FUNCTIONS)
        )
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if function_id == "F8" and d < 2:
        raise ValueError("F8 requires dimension >= 2")

    rng = np.random.default_rng(instance_seed)
    if function_id == "F5":
        x_opt = np.where(rng.uniform(-1.0, 1.0, d) >= 0.0, 5.0, -5.0)
    else:
        x_opt = rng.uniform(-4.0, 4.0, d)
    rotation = _rotation_matrix(d, rng) if function_id in ("F10", "F12") else None
    return BenchmarkInstance(
        function_id=function_id,
        d=d,
        x_opt=x_opt,
        f_opt=0.0,
        rotation=rotation,
        instance_seed=instance_seed,
    )


def _value(inst: BenchmarkInstance, x: np.ndarray) -> float:
    z = x - inst.x_opt
    fid = inst.function_id
    if fid == "F1":
        return float(z @ z)
    if fid == "F2":
        return float(_ellipsoid_weights(inst.d) @ (z * z))
    if fid == "F3":
        return float(10.0 * (inst.d - np.sum(np.cos(2.0 * np.pi * z))) + z @ z)
    if fid == "F5":
        s = _slope_coeffs(inst.x_opt)
        zi = np.where(x * inst.x_opt < 25.0, x, inst.x_opt)
        return float(np.sum(5.0 * np.abs(s) - s * zi))
    if fid == "F8":
        w = z + 1.0
        return float(
            np.sum(100.0 * (w[:-1] ** 2 - w[1:]) ** 2 + (w[:-1] - 1.0) ** 2)
        )
    if fid == "F10":
        zr = inst.rotation @ z
        return float(_ellipsoid_weights(inst.d) @ (zr * zr))
    if fid == "F12":
        zr = inst.rotation @ z
        return float(zr[0] ** 2 + 1e6 * np.sum(zr[1:] ** 2))
    if fid == "F14":
        return float(np.sum(np.abs(z) ** _power_exponents(inst.d)))
    raise AssertionError(f"unreachable function id {fid}")


def evaluate(inst: BenchmarkInstance, x: np.ndarray) -> float:
    """Evaluate the instance (minimization form) and count the call.

    Queries outside the box are clamped to it and flagged rather than
    rejected, so inner-optimizer numeric slop cannot kill a run.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != inst.d:
        raise ValueError(
            f"dimension mismatch: query has {x.shape[0]} coordinates, expected {inst.d}"
        )
    clipped = np.clip(x, DEFAULT_LOWER, DEFAULT_UPPER)
    if not np.array_equal(clipped, x):
        inst.clipped_queries += 1
        log.debug("query outside box clamped: %s", x)
        x = clipped
    inst.evaluations += 1
    return _value(inst, x)


class MaximizationObjective:
    """Sign-flipped view of a minimization-form objective for the engine.

    ``f_star`` is the best achievable value in maximization space.
    """

    def __init__(self, fn: Callable[[np.ndarray], float], f_opt: float = 0.0):
        self.fn = fn
        self.f_star = -f_opt

    def __call__(self, x: np.ndarray) -> float:
        return -self.fn(x)


def maximization_objective(inst: BenchmarkInstance) -> MaximizationObjective:
    return MaximizationObjective(lambda x: evaluate(inst, x), inst.f_opt)


class SubprocessObjective:
    """External objective served by a child process.

    Protocol: the child reads one whitespace-separated coordinate line per
    query on stdin and writes one value per line on stdout. Values are in
    minimization form, matching the native benchmark functions.
    """

    def __init__(self, command: Sequence[str], d: int, f_opt: float = 0.0):
        self.command = list(command)
        self.d = d
        self.f_opt = f_opt
        self.evaluations = 0
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.d:
            raise ValueError(
                f"dimension mismatch: query has {x.shape[0]} coordinates, expected {self.d}"
            )
        if self._proc.poll() is not None:
            raise RuntimeError(
                f"external objective {self.command} exited with {self._proc.returncode}"
            )
        self._proc.stdin.write(" ".join(repr(float(c)) for c in x) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError(f"external objective {self.command} closed its output")
        self.evaluations += 1
        return float(line.strip())

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "SubprocessObjective":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
