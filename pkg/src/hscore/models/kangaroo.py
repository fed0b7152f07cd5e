"""Stochastic logistic-growth models for double transect counts.

Latent population size follows

    dX / X = (sigma^2 / 2 + r - b X) dt + sigma dW,

i.e. ``d log X = (r - b X) dt + sigma dW``, simulated by Euler-Maruyama on
``log X``. Each time point carries two counts, conditionally independent
negative binomials with mean ``X`` and variance ``X + tau X^2``.

Variants: ``M1`` (logistic, all of sigma, tau, b, r free), ``M2`` (b = 0)
and ``M3`` (b = r = 0). Only ``M1`` needs the Euler-Maruyama scheme; for
the other two the log-scale transition is exactly Gaussian.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..scoring import DiscreteSupport
from .base import StateSpaceModel

X_FLOOR = 1e-8
LOG_X_FLOOR = math.log(X_FLOOR)
LOG_X_CEIL = 700.0

_PARAMS = {
    "M1": ("sigma", "tau", "b", "r"),
    "M2": ("sigma", "tau", "r"),
    "M3": ("sigma", "tau"),
}


def nb_logpmf(k, mean, var):
    """Negative binomial log-pmf parametrized by mean and variance (var > mean).

    Uses ``r = mean^2 / (var - mean)`` and success probability
    ``p = (var - mean) / var``, which gives the stated mean and variance.
    """
    k = np.asarray(k, dtype=float)
    mean = np.asarray(mean, dtype=float)
    excess = np.asarray(var, dtype=float) - mean
    r = mean**2 / excess
    log_p = np.log(excess) - np.log(mean + excess)
    log_1mp = np.log(mean) - np.log(mean + excess)
    return gammaln(k + r) - gammaln(k + 1.0) - gammaln(r) + r * log_1mp + k * log_p


def _nb_logpmf_tau(k, log_x, tau):
    # NB(X, X + tau X^2): r = 1/tau, p = tau X / (1 + tau X)
    log_tx = np.log(tau) + log_x
    log1p_tx = np.logaddexp(0.0, log_tx)
    r = 1.0 / tau
    return gammaln(k + r) - gammaln(k + 1.0) - gammaln(r) - r * log1p_tx + k * (log_tx - log1p_tx)


def kangaroo_spec(variant: str = "M3", delta_t: float = 0.001, r_range: float = 10.0) -> StateSpaceModel:
    """Build one of the three population models.

    Parameters
    ----------
    variant : {"M1", "M2", "M3"}
    delta_t : float
        Euler-Maruyama step. Each gap between observations is split into
        ``ceil(gap / delta_t)`` equal substeps.
    r_range : float
        Half-width of the uniform prior on the growth rate ``r``.
    """
    if variant not in _PARAMS:
        raise ValueError(f"unknown kangaroo variant {variant!r}")
    if not delta_t > 0:
        raise ValueError("delta_t must be positive")
    names = _PARAMS[variant]
    d = len(names)
    lower = [0.0, 0.0] + ([0.0] if variant == "M1" else []) + ([-r_range] if variant != "M3" else [])
    upper = [10.0, 10.0] + ([10.0] if variant == "M1" else []) + ([r_range] if variant != "M3" else [])
    lower_a, upper_a = np.array(lower), np.array(upper)
    log_volume = float(np.sum(np.log(upper_a - lower_a)))

    def unpack(theta):
        sigma, tau = theta[:, 0], theta[:, 1]
        b = theta[:, 2] if variant == "M1" else np.zeros_like(sigma)
        r = theta[:, -1] if variant != "M3" else np.zeros_like(sigma)
        return sigma, tau, b, r

    def prior_logpdf(theta):
        inside = np.all((theta > lower_a) & (theta < upper_a), axis=1)
        return np.where(inside, -log_volume, -np.inf)

    def prior_sample(rng, n):
        return rng.uniform(lower_a, upper_a, size=(n, d))

    def init_sample(theta, n_x, rng):
        # LN(0, 5): log X_1 ~ N(0, variance 5)
        log_x = math.sqrt(5.0) * rng.standard_normal((theta.shape[0], n_x))
        return np.exp(np.clip(log_x, LOG_X_FLOOR, LOG_X_CEIL))[..., None]

    def transition_sample(x, theta, dt, rng):
        if variant != "M1":
            # without the density term, log X moves by an exact Gaussian step
            sigma, _, _, r = (p[:, None] for p in unpack(theta))
            log_x = np.log(x[..., 0]) + r * dt + sigma * math.sqrt(dt) * rng.standard_normal(x.shape[:2])
            return np.exp(np.clip(log_x, LOG_X_FLOOR, LOG_X_CEIL))[..., None]
        n_sub = max(1, math.ceil(dt / delta_t - 1e-9))
        h = dt / n_sub
        sigma, _, b, r = (p[:, None] for p in unpack(theta))
        log_x = np.log(x[..., 0])
        noise_sd = sigma * math.sqrt(h)
        for _ in range(n_sub):
            drift = r - b * np.exp(log_x)
            log_x = log_x + drift * h + noise_sd * rng.standard_normal(log_x.shape)
            np.clip(log_x, LOG_X_FLOOR, LOG_X_CEIL, out=log_x)
        return np.exp(log_x)[..., None]

    def meas_logpdf(y, x, theta):
        y = np.asarray(y, dtype=float).ravel()
        tau = theta[:, 1][:, None]
        log_x = np.log(x[..., 0])
        return _nb_logpmf_tau(y[0], log_x, tau) + _nb_logpmf_tau(y[1], log_x, tau)

    def meas_sample(x, theta, rng):
        tau = theta[:, 1][:, None, None]
        xx = np.broadcast_to(x[..., :1], x.shape[:-1] + (2,))
        # Gamma-Poisson mixture with shape 1/tau and scale tau X
        lam = rng.gamma(1.0 / tau, tau * xx)
        return rng.poisson(np.minimum(lam, 1e15)).astype(float)

    return StateSpaceModel(
        name=f"kangaroo_{variant.lower()}",
        param_names=names,
        dim_x=1,
        dim_y=2,
        prior_logpdf=prior_logpdf,
        prior_sample=prior_sample,
        init_sample=init_sample,
        transition_sample=transition_sample,
        meas_logpdf=meas_logpdf,
        meas_sample=meas_sample,
        support=DiscreteSupport(lower=(0, 0), upper=(None, None)),
        lower=tuple(lower),
        upper=tuple(upper),
    )
