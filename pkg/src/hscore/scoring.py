"""Scoring rules: Hyvarinen score (continuous and discrete), log score, and
closed-form divergence gaps for the two Normal benchmark models.

The continuous Hyvarinen score of a density ``p`` at ``y`` is

    H(y, p) = 2 * Laplacian_y log p(y) + |grad_y log p(y)|^2

and smaller is better. It only depends on log-derivatives, so multiplying
``p`` by a positive constant leaves it unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class ScoringError(ValueError):
    """Raised on invalid input to a scoring rule."""


@dataclass(frozen=True)
class DensityDerivatives:
    """Log-density of a predictive at one point with its y-derivatives.

    ``lap_log`` is the Laplacian (sum of the second partials), not the
    per-coordinate second derivatives.
    """

    log_density: float
    grad_log: np.ndarray
    lap_log: float

    def __post_init__(self):
        object.__setattr__(self, "grad_log", np.atleast_1d(np.asarray(self.grad_log, dtype=float)))


@dataclass(frozen=True)
class ScoreIncrement:
    """One summand of the prequential H-score.

    Attributes
    ----------
    per_dim_d1 : ndarray, shape (d_y,)
        First log-derivatives of the predictive along each coordinate.
    per_dim_d2 : ndarray, shape (d_y,)
        Second log-derivatives of the predictive along each coordinate.
    value : float
        ``sum_k 2 * d2_k + d1_k ** 2``.
    """

    per_dim_d1: np.ndarray
    per_dim_d2: np.ndarray
    value: float

    @classmethod
    def from_derivatives(cls, d1, d2) -> "ScoreIncrement":
        d1 = np.atleast_1d(np.asarray(d1, dtype=float))
        d2 = np.atleast_1d(np.asarray(d2, dtype=float))
        return cls(d1, d2, float(np.sum(2.0 * d2 + d1**2)))


@dataclass(frozen=True)
class DiscreteSupport:
    """Product of integer intervals [a_k, b_k]; ``None`` marks an open end."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ScoringError("lower and upper bounds differ in length")
        for a, b in zip(self.lower, self.upper):
            if a is not None and b is not None and not a < b:
                raise ScoringError(f"empty or degenerate coordinate range [{a}, {b}]")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, y) -> bool:
        for yk, a, b in zip(y, self.lower, self.upper):
            if (a is not None and yk < a) or (b is not None and yk > b):
                return False
        return True


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ScoringError("non-finite input to scoring rule")


def hyvarinen_point(derivs: DensityDerivatives) -> float:
    """Hyvarinen score ``2 * lap_log + |grad_log|^2``."""
    _check_finite(derivs.grad_log, derivs.lap_log)
    return float(2.0 * derivs.lap_log + np.dot(derivs.grad_log, derivs.grad_log))


def log_score_point(log_density: float) -> float:
    """Logarithmic score ``-log p(y)``."""
    _check_finite(log_density)
    return -float(log_density)


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=float)
    if n == 0:
        raise ScoringError("empty sample set")
    if w.shape != (n,):
        raise ScoringError(f"expected {n} weights, got shape {w.shape}")
    if abs(w.sum() - 1.0) > 1e-10:
        raise ScoringError(f"weights sum to {w.sum()!r}, not 1")
    return w


def _as_samples(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def hscore_increment_from_posterior(d1_samples, d2_samples, weights) -> ScoreIncrement:
    """Monte Carlo H-score increment from weighted parameter draws.

    Parameters
    ----------
    d1_samples, d2_samples : array_like, shape (N,) or (N, d_y)
        First and second y-log-derivatives of ``p(y_t | y_{1:t-1}, theta_i)``
        at the observed ``y_t``, one row per draw ``theta_i`` from
        ``p(theta | y_{1:t})``.
    weights : array_like, shape (N,)
        Normalized weights of the draws.

    Returns
    -------
    ScoreIncrement
        Per coordinate, the predictive log-derivatives ``E[d1]`` and
        ``E[d2 + d1^2] - E[d1]^2``; the value is
        ``sum_k 2 E[d2_k + d1_k^2] - E[d1_k]^2``.
    """
    d1 = _as_samples(d1_samples)
    d2 = _as_samples(d2_samples)
    if d1.shape != d2.shape:
        raise ScoringError("d1 and d2 sample shapes differ")
    w = _check_weights(weights, d1.shape[0])
    _check_finite(d1, d2)
    m1 = w @ d1
    m2 = w @ (d2 + d1**2)
    return ScoreIncrement.from_derivatives(m1, m2 - m1**2)


def hscore_increment_variance_form(h_samples, d1_samples, weights) -> float:
    """Same increment written as posterior mean of the plug-in score plus the
    posterior variance of the first log-derivative (summed over coordinates).

    ``h_samples[i]`` is the Hyvarinen score of ``p(. | y_{1:t-1}, theta_i)``
    at ``y_t``.
    """
    h = np.asarray(h_samples, dtype=float)
    d1 = _as_samples(d1_samples)
    if h.shape != (d1.shape[0],):
        raise ScoringError("h and d1 sample counts differ")
    w = _check_weights(weights, h.shape[0])
    _check_finite(h, d1)
    m1 = w @ d1
    var = w @ (d1 - m1) ** 2
    return float(w @ h + var.sum())


def _log_pmf_checked(log_pmf, z, support):
    if not support.contains(z):
        return -math.inf
    return float(log_pmf(z))


def discrete_hscore(y, log_pmf: Callable, support: DiscreteSupport) -> float:
    """Discrete analogue of the Hyvarinen score using central differences.

    With ``D_k(z) = (p(z + e_k) - p(z - e_k)) / (2 p(z))`` the interior term
    is ``D_k(y + e_k) - D_k(y - e_k) + D_k(y)^2``. Near the ends of
    ``[a_k, b_k]`` the term becomes ``D_k(y+e_k)`` at ``a_k``,
    ``D_k(y+e_k) + D_k(y)^2`` at ``a_k + 1``, ``-D_k(y-e_k) + D_k(y)^2`` at
    ``b_k - 1`` and ``-D_k(y-e_k)`` at ``b_k``.

    ``log_pmf`` may be unnormalized. Points outside the support have pmf 0.
    For ranges with ``b_k - a_k < 3`` the offset cases that collide are
    dropped; the score is only guaranteed proper when ``b_k - a_k >= 3``.
    """
    y = np.asarray(y, dtype=np.int64).ravel()
    if y.size != support.dim:
        raise ScoringError("observation dimension does not match support")
    if not support.contains(y):
        raise ScoringError(f"observation {y.tolist()} outside support")

    cache = {}

    def logp(z):
        key = tuple(z)
        if key not in cache:
            cache[key] = _log_pmf_checked(log_pmf, z, support)
        return cache[key]

    def ratio_to(z, ref_logp):
        # p(z) / p(ref) computed in log space
        lz = logp(z)
        return 0.0 if lz == -math.inf else math.exp(lz - ref_logp)

    def D(z, k):
        lz = logp(z)
        if not np.isfinite(lz):
            raise ScoringError(f"pmf is zero or undefined at {z.tolist()} inside the support")
        e = np.zeros_like(z)
        e[k] = 1
        return 0.5 * (ratio_to(z + e, lz) - ratio_to(z - e, lz))

    total = 0.0
    for k in range(y.size):
        a, b = support.lower[k], support.upper[k]
        e = np.zeros_like(y)
        e[k] = 1
        yk = int(y[k])
        at_a = a is not None and yk == a
        at_b = b is not None and yk == b
        near_a = a is not None and yk == a + 1
        near_b = b is not None and yk == b - 1
        if at_a:
            term = D(y + e, k)
        elif at_b:
            term = -D(y - e, k)
        elif near_a and near_b:
            term = 0.0
        elif near_a:
            term = D(y + e, k) + D(y, k) ** 2
        elif near_b:
            term = -D(y - e, k) + D(y, k) ** 2
        else:
            term = D(y + e, k) - D(y - e, k) + D(y, k) ** 2
        total += term
    if not math.isfinite(total):
        raise ScoringError("discrete score is not finite")
    return total


def _check_variance(sigma2_star):
    if not sigma2_star > 0:
        raise ScoringError("variance must be positive")


def fisher_divergence_gap_normal(mu_star: float, sigma2_star: float) -> float:
    """Asymptotic H-factor slope ``D_H(p*, M2) - D_H(p*, M1)`` for data from
    N(mu*, sigma2*), where M1 is N(theta, 1) and M2 is N(0, theta)."""
    _check_variance(sigma2_star)
    m2 = mu_star**2
    return m2 / (sigma2_star * (m2 + sigma2_star)) - (sigma2_star - 1.0) ** 2 / sigma2_star


def kl_gap_normal(mu_star: float, sigma2_star: float) -> float:
    """Asymptotic log-Bayes-factor slope ``KL(p*, M2) - KL(p*, M1)``."""
    _check_variance(sigma2_star)
    return 0.5 * math.log((mu_star**2 + sigma2_star) / sigma2_star) - (
        (sigma2_star - 1.0) - math.log(sigma2_star)
    ) / 2.0


def divergence_boundaries(sigma2_star: float) -> tuple[float, float]:
    """Values of ``|mu*|`` where the H and KL gaps change sign.

    The H boundary is ``+inf`` for ``sigma2* >= 2``.
    """
    _check_variance(sigma2_star)
    if sigma2_star < 2.0:
        b_h = abs(sigma2_star - 1.0) / math.sqrt(2.0 - sigma2_star)
    else:
        b_h = math.inf
    b_kl = math.sqrt(max(math.exp(sigma2_star - 1.0) - sigma2_star, 0.0))
    return b_h, b_kl
