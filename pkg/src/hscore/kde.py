"""Gaussian kernel density estimates of a predictive density and its
first two log-derivatives, for models whose measurement density cannot be
differentiated in ``y``.

With draws ``yhat_i`` and bandwidth ``h``,

    p(y) = (n h)^-1 sum_i phi((y - yhat_i) / h)

and, writing ``u_i = (y - yhat_i) / h`` and ``w_i`` for the normalized
kernel values at ``y``,

    p'/p  = -sum_i w_i u_i / h
    p''/p = sum_i w_i (u_i^2 - 1) / h^2

so everything is computed from log kernel values and never from ``p``
itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .scoring import DensityDerivatives, ScoreIncrement, hscore_increment_from_posterior

# log of the smallest normal double: below this p(y) is treated as zero
LOG_UNDERFLOW = math.log(np.finfo(float).tiny)
UNRELIABLE_FRACTION = 0.1


class KdeUnderflowError(ValueError):
    """The estimated density underflows at the evaluation point."""


@dataclass(frozen=True)
class KdeEstimate:
    draws: np.ndarray
    bandwidth: float

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=float).ravel()
        if d.size < 1:
            raise ValueError("need at least one draw")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "draws", d)


def kde_log_derivs(draws, h, y):
    """Batched version: ``draws`` has shape ``(..., n)``.

    Returns ``(log_p, d1, d2)`` with the batch shape, where ``d1`` and
    ``d2`` are the first and second derivatives of ``log p`` at ``y``.
    """
    draws = np.asarray(draws, dtype=float)
    n = draws.shape[-1]
    u = (y - draws) / h
    log_k = -0.5 * u**2
    lse = logsumexp(log_k, axis=-1, keepdims=True)
    w = np.exp(log_k - lse)
    log_p = lse[..., 0] - math.log(n * h) - 0.5 * math.log(2.0 * math.pi)
    d1 = -np.sum(w * u, axis=-1) / h
    ratio2 = np.sum(w * (u**2 - 1.0), axis=-1) / h**2
    return log_p, d1, ratio2 - d1**2


def kde_logdensity_and_derivs(est: KdeEstimate, y: float) -> DensityDerivatives:
    log_p, d1, d2 = kde_log_derivs(est.draws, est.bandwidth, float(y))
    if log_p < LOG_UNDERFLOW:
        raise KdeUnderflowError(f"kernel density underflows at y={y}")
    return DensityDerivatives(float(log_p), np.array([d1]), float(d2))


@dataclass(frozen=True)
class KdeIncrement:
    increment: ScoreIncrement
    n_excluded: int
    unreliable: bool


def kde_hscore_increment(per_theta_draws, theta_weights, y_t, bandwidth) -> KdeIncrement:
    """H-score increment from one set of predictive draws per parameter particle.

    ``per_theta_draws`` is ``(N, n)`` (or a sequence of ``KdeEstimate``
    sharing ``bandwidth``). Particles whose density underflows at ``y_t``
    are dropped and the remaining weights renormalized; the row is marked
    unreliable when more than 10% of the weight-carrying particles are
    dropped.
    """
    if len(per_theta_draws) and isinstance(per_theta_draws[0], KdeEstimate):
        per_theta_draws = np.stack([e.draws for e in per_theta_draws])
    draws = np.asarray(per_theta_draws, dtype=float)
    w = np.asarray(theta_weights, dtype=float)
    if draws.ndim != 2 or draws.shape[0] != w.shape[0]:
        raise ValueError("need one row of draws per weight")
    log_p, d1, d2 = kde_log_derivs(draws, bandwidth, float(y_t))
    active = w > 0
    ok = active & (log_p >= LOG_UNDERFLOW)
    n_excluded = int(np.sum(active & ~ok))
    if not ok.any():
        raise KdeUnderflowError("kernel density underflows for every particle")
    wk = w[ok] / w[ok].sum()
    inc = hscore_increment_from_posterior(d1[ok], d2[ok], wk)
    return KdeIncrement(inc, n_excluded, n_excluded > UNRELIABLE_FRACTION * int(active.sum()))
