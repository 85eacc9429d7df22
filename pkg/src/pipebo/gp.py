"""Gaussian process regression on a Matern 5/2 kernel.

Outputs are standardized (zero mean, unit variance) before fitting and every
posterior quantity is reported in that standardized space; the confidence
bound and the local penalizer both operate there. De-standardization is left
to callers that report raw objective values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

__all__ = [
    "Observation",
    "GPModel",
    "GPFitError",
    "fit_gp",
    "posterior",
    "posterior_batch",
    "posterior_mean_gradient",
    "posterior_mean_gradient_batch",
    "estimate_lipschitz",
]

_SQRT5 = math.sqrt(5.0)

LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_VARIANCE_BOUNDS = (1e-4, 1e4)
NOISE_VARIANCE_BOUNDS = (1e-8, 1e-1)
DEFAULT_RESTARTS = 5

# Slope reported for a numerically flat posterior mean.
FLAT_POSTERIOR_SLOPE = 10.0
_FLAT_SLOPE_CUTOFF = 1e-7

_JITTER_FIRST = 1e-10
_JITTER_LAST = 1e-4


class GPFitError(RuntimeError):
    """Kernel matrix could not be factorized even after jitter escalation."""


@dataclass(frozen=True)
class Observation:
    """One evaluated parameter vector and its (maximization-space) outcome."""

    x: np.ndarray
    y: float


@dataclass(frozen=True, eq=False)
class GPModel:
    """Fitted GP state.

    Immutable after fitting; safe to read from multiple threads. ``chol`` is
    the lower-triangular factor of the regularized kernel matrix
    K + (noise_variance + jitter) I, and ``alpha`` / ``K_inv`` are the solves
    reused by the batched posterior.
    """

    X: np.ndarray
    y_std: np.ndarray
    y_mean: float
    y_scale: float
    signal_variance: float
    lengthscale: float
    noise_variance: float
    chol: np.ndarray
    alpha: np.ndarray
    K_inv: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def log_params(self) -> np.ndarray:
        return np.log(
            [self.signal_variance, self.lengthscale, self.noise_variance]
        )

    def destandardize(self, mean_std: float) -> float:
        return float(mean_std) * self.y_scale + self.y_mean


def _matern52_from_t(t: np.ndarray) -> np.ndarray:
    """Correlation as a function of t = sqrt(5) * r / lengthscale."""
    return (1.0 + t + t * t / 3.0) * np.exp(-t)


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    if y.shape[0] == 1:
        return np.zeros(1), float(y[0]), 1.0
    mean = float(np.mean(y))
    scale = float(np.std(y))
    if scale < 1e-12:
        # constant outputs: centering alone maps everything to 0
        scale = 1.0
    return (y - mean) / scale, mean, scale


def _factorize(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky with jitter escalation 1e-10 -> x10 per retry -> 1e-4."""
    jitter = 0.0
    while True:
        try:
            Kj = K if jitter == 0.0 else K + jitter * np.eye(K.shape[0])
            return cholesky(Kj, lower=True), jitter
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = _JITTER_FIRST
            elif jitter < _JITTER_LAST:
                jitter = min(jitter * 10.0, _JITTER_LAST)
            else:
                raise GPFitError(
                    "kernel matrix not positive definite at jitter "
                    f"{_JITTER_LAST:g}"
                ) from None


def _nll_and_grad(
    log_params: np.ndarray, dists: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient in log-parameter space."""
    n = y.shape[0]
    sv, ell, nv = np.exp(log_params)
    t = (_SQRT5 / ell) * dists
    damp = np.exp(-t)
    corr = (1.0 + t + t * t / 3.0) * damp
    K = sv * corr
    K[np.diag_indices(n)] += nv
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros(3)
    alpha = cho_solve((L, True), y)
    nll = (
        0.5 * float(y @ alpha)
        + float(np.sum(np.log(np.diag(L))))
        + 0.5 * n * math.log(2.0 * math.pi)
    )
    inner = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    # d/dlog(theta) pulls a factor theta into each kernel derivative
    d_ell = sv * (t * t / 3.0) * (1.0 + t) * damp
    grad = -0.5 * np.array(
        [
            float(np.sum(inner * (sv * corr))),
            float(np.sum(inner * d_ell)),
            nv * float(np.trace(inner)),
        ]
    )
    return nll, grad


def _optimize_hyperparameters(
    dists: np.ndarray,
    y: np.ndarray,
    seed: int,
    warm_start: Optional[np.ndarray],
    n_restarts: int,
) -> np.ndarray:
    log_bounds = np.log(
        [SIGNAL_VARIANCE_BOUNDS, LENGTHSCALE_BOUNDS, NOISE_VARIANCE_BOUNDS]
    )
    rng = np.random.default_rng(seed)
    starts = []
    if warm_start is not None:
        starts.append(np.clip(warm_start, log_bounds[:, 0], log_bounds[:, 1]))
    starts.extend(
        rng.uniform(log_bounds[:, 0], log_bounds[:, 1]) for _ in range(n_restarts)
    )

    best_val = np.inf
    best = starts[0]
    for x0 in starts:
        res = minimize(
            _nll_and_grad,
            x0,
            args=(dists, y),
            jac=True,
            method="L-BFGS-B",
            bounds=log_bounds,
            options={"maxiter": 80},
        )
        if res.fun < best_val:
            best_val = res.fun
            best = res.x
    return best


def fit_gp(
    data: Sequence[Observation],
    *,
    seed: int = 0,
    warm_start: Optional[np.ndarray] = None,
    n_restarts: int = DEFAULT_RESTARTS,
    fixed: Optional[tuple[float, float, float]] = None,
) -> GPModel:
    """Fit a GP to the observations.

    Hyperparameters (signal variance, lengthscale, noise variance) maximize
    the log marginal likelihood over bounded ranges via multi-start bounded
    local search, deterministically for a fixed ``seed``. ``warm_start`` adds
    the previous model's log-parameters as an extra start. ``fixed`` skips the
    search and uses the given (signal_variance, lengthscale, noise_variance),
    which the oracle tests rely on.
    """
    if len(data) == 0:
        raise ValueError("no observations")
    X = np.asarray([np.asarray(o.x, dtype=float).ravel() for o in data])
    y_raw = np.asarray([o.y for o in data], dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y_raw))):
        raise ValueError("invalid observation")

    y, y_mean, y_scale = _standardize(y_raw)
    dists = cdist(X, X)

    if fixed is not None:
        sv, ell, nv = (float(v) for v in fixed)
    else:
        log_best = _optimize_hyperparameters(dists, y, seed, warm_start, n_restarts)
        sv, ell, nv = (float(v) for v in np.exp(log_best))

    K = sv * _matern52_from_t((_SQRT5 / ell) * dists)
    K[np.diag_indices(X.shape[0])] += nv
    L, jitter = _factorize(K)
    alpha = cho_solve((L, True), y)
    K_inv = cho_solve((L, True), np.eye(X.shape[0]))
    return GPModel(
        X=X,
        y_std=y,
        y_mean=y_mean,
        y_scale=y_scale,
        signal_variance=sv,
        lengthscale=ell,
        noise_variance=nv,
        chol=L,
        alpha=alpha,
        K_inv=K_inv,
        jitter=jitter,
    )


def _check_query(model: GPModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.d:
        raise ValueError(
            f"dimension mismatch: query has {x.shape[0]} coordinates, model has {model.d}"
        )
    return x


def posterior_batch(model: GPModel, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance (standardized space) at each row of Xq."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != model.d:
        raise ValueError(
            f"dimension mismatch: query has {Xq.shape[1]} coordinates, model has {model.d}"
        )
    t = (_SQRT5 / model.lengthscale) * cdist(Xq, model.X)
    Ks = model.signal_variance * _matern52_from_t(t)
    mean = Ks @ model.alpha
    var = model.signal_variance - np.einsum("ij,ij->i", Ks @ model.K_inv, Ks)
    return mean, np.maximum(var, 0.0)


def posterior(model: GPModel, x: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at a single point; variance clamped at >= 0."""
    x = _check_query(model, x)
    mean, var = posterior_batch(model, x[None, :])
    return float(mean[0]), float(var[0])


def posterior_mean_gradient_batch(model: GPModel, Xq: np.ndarray) -> np.ndarray:
    """Analytic gradient of the posterior mean at each row of Xq."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != model.d:
        raise ValueError(
            f"dimension mismatch: query has {Xq.shape[1]} coordinates, model has {model.d}"
        )
    diffs = Xq[:, None, :] - model.X[None, :, :]
    r = np.sqrt(np.einsum("mnd,mnd->mn", diffs, diffs))
    a = _SQRT5 / model.lengthscale
    # d/dx of the Matern 5/2 kernel is -(sv a^2/3)(1 + a r) e^{-a r} (x - x_i),
    # smooth through r = 0
    w = model.alpha[None, :] * (1.0 + a * r) * np.exp(-a * r)
    coef = -model.signal_variance * (a * a / 3.0)
    return coef * np.einsum("mn,mnd->md", w, diffs)


def posterior_mean_gradient(model: GPModel, x: np.ndarray) -> np.ndarray:
    x = _check_query(model, x)
    return posterior_mean_gradient_batch(model, x[None, :])[0]


def estimate_lipschitz(
    model: GPModel,
    bounds: np.ndarray,
    rng: np.random.Generator,
    n_samples: int = 500,
) -> float:
    """Largest posterior-mean slope over uniform box samples plus the training inputs.

    Falls back to ``FLAT_POSTERIOR_SLOPE`` when the posterior mean is
    numerically flat everywhere probed.
    """
    bounds = np.asarray(bounds, dtype=float)
    pts = [model.X]
    if n_samples > 0:
        pts.append(rng.uniform(bounds[:, 0], bounds[:, 1], (n_samples, model.d)))
    grads = posterior_mean_gradient_batch(model, np.vstack(pts))
    slope = float(np.max(np.linalg.norm(grads, axis=1)))
    if slope < _FLAT_SLOPE_CUTOFF:
        return FLAT_POSTERIOR_SLOPE
    return slope
