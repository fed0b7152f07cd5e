"""The two Normal benchmark models: unknown mean, and unknown variance."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .base import IidModel

LOG_2PI = math.log(2.0 * math.pi)


def inv_chi2_logpdf(x, nu: float, s_sq: float):
    """Log-density of the scaled inverse chi-square ``Inv-chi2(nu, s^2)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            0.5 * nu * math.log(0.5 * nu)
            - gammaln(0.5 * nu)
            + 0.5 * nu * math.log(s_sq)
            - (0.5 * nu + 1.0) * np.log(x)
            - nu * s_sq / (2.0 * x)
        )
    return np.where(x > 0, out, -np.inf)


def sample_inv_chi2(rng, nu: float, s_sq: float, size):
    # 1 / Gamma(nu/2, rate nu s^2 / 2), drawn through log G so tiny shapes
    # do not underflow: G(a) = G(a + 1) * U^(1/a)
    a = 0.5 * nu
    log_g = np.log(rng.gamma(a + 1.0, size=size)) + np.log(rng.random(size)) / a
    log_theta = math.log(0.5 * nu * s_sq) - log_g
    return np.exp(np.minimum(log_theta, 700.0))


def normal_m1_spec(sigma0_sq: float = 10.0) -> IidModel:
    """``Y_t ~ N(theta, 1)`` with ``theta ~ N(0, sigma0_sq)``.

    ``sigma0_sq = inf`` gives the flat-prior limit, whose posterior becomes
    proper after one observation.
    """
    if not sigma0_sq > 0:
        raise ValueError("sigma0_sq must be positive")
    flat = math.isinf(sigma0_sq)

    def loglik(y, theta):
        y = np.asarray(y, dtype=float).reshape(-1)
        return -0.5 * LOG_2PI - 0.5 * (y[None, :] - theta[:, :1]) ** 2

    def loglik_derivs(y_t, theta):
        d1 = np.asarray(y_t, dtype=float).reshape(1, 1) - theta[:, :1]
        return -d1, -np.ones_like(d1)

    def prior_logpdf(theta):
        th = theta[:, 0]
        if flat:
            return np.zeros_like(th)
        return -0.5 * (LOG_2PI + math.log(sigma0_sq)) - 0.5 * th**2 / sigma0_sq

    def prior_sample(rng, n):
        return rng.normal(0.0, math.sqrt(sigma0_sq), size=(n, 1))

    def sample(theta, T, rng):
        return rng.normal(theta[0], 1.0, size=(T, 1))

    return IidModel(
        name="normal_m1",
        param_names=("theta1",),
        loglik=loglik,
        loglik_derivs=loglik_derivs,
        prior_logpdf=prior_logpdf,
        prior_sample=None if flat else prior_sample,
        sample=sample,
        first_proper_index=1 if flat else 0,
        lower=(-math.inf,),
        upper=(math.inf,),
    )


def normal_m2_spec(nu0: float = 0.1, s0_sq: float = 1.0) -> IidModel:
    """``Y_t ~ N(0, theta)`` with ``theta ~ Inv-chi2(nu0, s0_sq)``."""
    if not (nu0 > 0 and s0_sq > 0):
        raise ValueError("nu0 and s0_sq must be positive")

    def loglik(y, theta):
        y = np.asarray(y, dtype=float).reshape(-1)
        th = theta[:, :1]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -0.5 * (LOG_2PI + np.log(th)) - 0.5 * y[None, :] ** 2 / th
        return np.where(th > 0, out, -np.inf)

    def loglik_derivs(y_t, theta):
        th = theta[:, :1]
        y = np.asarray(y_t, dtype=float).reshape(1, 1)
        return -y / th, -1.0 / th

    def prior_logpdf(theta):
        return inv_chi2_logpdf(theta[:, 0], nu0, s0_sq)

    def prior_sample(rng, n):
        return sample_inv_chi2(rng, nu0, s0_sq, n)[:, None]

    def sample(theta, T, rng):
        return rng.normal(0.0, math.sqrt(theta[0]), size=(T, 1))

    return IidModel(
        name="normal_m2",
        param_names=("theta2",),
        loglik=loglik,
        loglik_derivs=loglik_derivs,
        prior_logpdf=prior_logpdf,
        prior_sample=prior_sample,
        sample=sample,
        lower=(0.0,),
        upper=(math.inf,),
    )
