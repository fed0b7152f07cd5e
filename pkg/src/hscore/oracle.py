"""Closed-form references: conjugate Normal predictives, the Kalman filter,
and quadrature over a scalar parameter for the linear Gaussian model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .scoring import DensityDerivatives, ScoreIncrement, hscore_increment_from_posterior
from .trace import PrequentialTrace, TraceRow

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianPredictive:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("predictive variance must be positive")

    def logpdf(self, y):
        return -0.5 * (LOG_2PI + math.log(self.variance)) - 0.5 * (y - self.mean) ** 2 / self.variance

    def derivatives(self, y) -> DensityDerivatives:
        g = -(y - self.mean) / self.variance
        return DensityDerivatives(self.logpdf(y), np.array([g]), -1.0 / self.variance)


def conjugate_m1_predictive(y_prefix, sigma0_sq: float) -> GaussianPredictive:
    """Predictive of the next observation under N(theta, 1), theta ~ N(0, sigma0_sq).

    ``sigma0_sq = inf`` is the flat-prior limit and needs a non-empty prefix.
    """
    y = np.asarray(y_prefix, dtype=float).ravel()
    if not sigma0_sq > 0:
        raise ValueError("sigma0_sq must be positive")
    precision = y.size + (0.0 if math.isinf(sigma0_sq) else 1.0 / sigma0_sq)
    if precision == 0.0:
        raise ValueError("flat prior with no data has no proper predictive")
    post_var = 1.0 / precision
    return GaussianPredictive(post_var * y.sum(), post_var + 1.0)


def _m2_posterior(y_prefix, nu0, s0_sq):
    y = np.asarray(y_prefix, dtype=float).ravel()
    nu = nu0 + y.size
    return nu, (nu0 * s0_sq + np.sum(y**2)) / nu


def conjugate_m2_predictive_logpdf_and_derivs(y_prefix, nu0: float, s0_sq: float, y: float) -> DensityDerivatives:
    """Student-t predictive of N(0, theta), theta ~ Inv-chi2(nu0, s0_sq).

    After ``n`` observations the posterior is Inv-chi2(nu0 + n, s_n^2) with
    ``s_n^2 = (nu0 s0_sq + sum y^2) / (nu0 + n)``, and the predictive is a
    t distribution with ``nu0 + n`` degrees of freedom and scale ``s_n``.
    """
    nu, s2 = _m2_posterior(y_prefix, nu0, s0_sq)
    q = nu * s2 + y**2
    logp = (
        gammaln(0.5 * (nu + 1.0))
        - gammaln(0.5 * nu)
        - 0.5 * math.log(nu * math.pi * s2)
        - 0.5 * (nu + 1.0) * math.log1p(y**2 / (nu * s2))
    )
    grad = -(nu + 1.0) * y / q
    lap = -(nu + 1.0) * (nu * s2 - y**2) / q**2
    return DensityDerivatives(float(logp), np.array([grad]), float(lap))


def _row(t, logp, grad, lap, flag=""):
    inc = ScoreIncrement.from_derivatives([grad], [lap])
    return TraceRow(t=t, log_evidence_inc=logp, h_inc=inc.value, grad_log=inc.per_dim_d1, hess_log=inc.per_dim_d2, flag=flag)


def exact_prequential_scores_m1_m2(data, sigma0_sq=10.0, nu0=0.1, s0_sq=1.0):
    """Exact log-evidence and H-score traces for the two Normal models.

    Returns ``(trace_m1, trace_m2)``. Under a flat prior on the M1 mean the
    first predictive is improper; its H increment is the finite limit 0 and
    its evidence increment is undefined (NaN).
    """
    y = np.asarray(data, dtype=float).ravel()
    m1 = PrequentialTrace("normal_m1")
    m2 = PrequentialTrace("normal_m2")
    flat = math.isinf(sigma0_sq)
    for t in range(y.size):
        yt = y[t]
        if flat and t == 0:
            m1.append(TraceRow(1.0, math.nan, 0.0, np.zeros(1), np.zeros(1), flag="improper"))
        else:
            d = conjugate_m1_predictive(y[:t], sigma0_sq).derivatives(yt)
            m1.append(_row(t + 1.0, d.log_density, d.grad_log[0], d.lap_log))
        d = conjugate_m2_predictive_logpdf_and_derivs(y[:t], nu0, s0_sq, yt)
        m2.append(_row(t + 1.0, d.log_density, d.grad_log[0], d.lap_log))
    return m1, m2


def exact_log_evidence_m1(data, sigma0_sq: float) -> float:
    y = np.asarray(data, dtype=float).ravel()
    return float(sum(conjugate_m1_predictive(y[:t], sigma0_sq).logpdf(y[t]) for t in range(y.size)))


def kalman_filter(phi, sigma_x, sigma_y, y, x1_mean=0.0, x1_var=None):
    """One-step predictive means and variances of ``y_t`` for every ``t``.

    ``phi`` may be an array; outputs then have shape ``phi.shape + (T,)``.
    ``x1_var`` defaults to the stationary variance.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x1_var is None:
        x1_var = sigma_x**2 / (1.0 - phi**2)
    m = np.broadcast_to(np.asarray(x1_mean, dtype=float), phi.shape).copy()
    p = np.broadcast_to(np.asarray(x1_var, dtype=float), phi.shape).copy()
    means = np.empty(phi.shape + (y.size,))
    variances = np.empty(phi.shape + (y.size,))
    for t in range(y.size):
        s = p + sigma_y**2
        means[..., t] = m
        variances[..., t] = s
        gain = p / s
        m = m + gain * (y[t] - m)
        p = (1.0 - gain) * p
        m = phi * m
        p = phi**2 * p + sigma_x**2
    return means, variances


def kalman_predictive(phi, sigma_x, sigma_y, y_prefix, x1_mean=0.0, x1_var=None) -> GaussianPredictive:
    """Exact predictive of the observation following ``y_prefix``."""
    y = np.asarray(y_prefix, dtype=float).ravel()
    means, variances = kalman_filter(phi, sigma_x, sigma_y, np.append(y, 0.0), x1_mean, x1_var)
    return GaussianPredictive(float(means[-1]), float(variances[-1]))


def kalman_loglik(phi, sigma_x, sigma_y, y, x1_mean=0.0, x1_var=None):
    means, variances = kalman_filter(phi, sigma_x, sigma_y, y, x1_mean, x1_var)
    y = np.asarray(y, dtype=float).ravel()
    return np.sum(-0.5 * (LOG_2PI + np.log(variances)) - 0.5 * (y - means) ** 2 / variances, axis=-1)


@dataclass
class QuadratureResult:
    trace: PrequentialTrace
    post_mean: np.ndarray
    post_var: np.ndarray


def lgssm_quadrature(data, sigma_x=1.0, sigma_y=1.0, phi_bounds=(-1.0, 1.0), n_grid=4000) -> QuadratureResult:
    """Prequential scores and posterior moments of ``phi`` for the linear
    Gaussian model with a uniform prior, by midpoint quadrature over ``phi``
    combined with exact Kalman predictives."""
    y = np.asarray(data, dtype=float).ravel()
    lo, hi = phi_bounds
    width = (hi - lo) / n_grid
    grid = lo + width * (np.arange(n_grid) + 0.5)
    means, variances = kalman_filter(grid, sigma_x, sigma_y, y)
    log_pred = -0.5 * (LOG_2PI + np.log(variances)) - 0.5 * (y - means) ** 2 / variances
    log_w = np.full(n_grid, math.log(width / (hi - lo)))
    trace = PrequentialTrace("lgssm")
    post_mean = np.empty(y.size)
    post_var = np.empty(y.size)
    for t in range(y.size):
        lp = log_w + log_pred[:, t]
        trace_inc = logsumexp(lp) - logsumexp(log_w)
        log_w = lp
        w = np.exp(log_w - logsumexp(log_w))
        w /= w.sum()
        d1 = -(y[t] - means[:, t]) / variances[:, t]
        d2 = -1.0 / variances[:, t]
        inc = hscore_increment_from_posterior(d1, d2, w)
        trace.append(TraceRow(t + 1.0, float(trace_inc), inc.value, inc.per_dim_d1, inc.per_dim_d2))
        post_mean[t] = w @ grid
        post_var[t] = w @ (grid - post_mean[t]) ** 2
    return QuadratureResult(trace, post_mean, post_var)
