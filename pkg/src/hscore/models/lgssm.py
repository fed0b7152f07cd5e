"""Linear Gaussian state-space model with unknown autoregressive coefficient.

    X_1 ~ N(0, sigma_x^2 / (1 - phi^2)),  X_{t+1} = phi X_t + sigma_x e_t,
    Y_t = X_t + sigma_y u_t,

with ``theta = (phi,)`` and a uniform prior on ``phi_bounds``. Everything is
available in closed form through the Kalman filter (see ``hscore.oracle``),
which makes it the reference model for testing SMC^2.
"""

from __future__ import annotations

import math

import numpy as np

from .base import StateSpaceModel

LOG_2PI = math.log(2.0 * math.pi)


def stationary_variance(phi, sigma_x):
    return sigma_x**2 / (1.0 - np.asarray(phi) ** 2)


def lgssm_spec(sigma_x: float = 1.0, sigma_y: float = 1.0, phi_bounds=(-1.0, 1.0)) -> StateSpaceModel:
    if sigma_x < 0 or sigma_y <= 0:
        raise ValueError("noise scales must be positive")
    lo, hi = phi_bounds
    if not -1.0 <= lo < hi <= 1.0:
        raise ValueError("phi_bounds must lie in [-1, 1]")
    log_width = math.log(hi - lo)

    def prior_logpdf(theta):
        phi = theta[:, 0]
        inside = (phi > lo) & (phi < hi)
        return np.where(inside, -log_width, -np.inf)

    def prior_sample(rng, n):
        return rng.uniform(lo, hi, size=(n, 1))

    def init_sample(theta, n_x, rng):
        sd = np.sqrt(stationary_variance(theta[:, 0], sigma_x))
        return (sd[:, None] * rng.standard_normal((theta.shape[0], n_x)))[..., None]

    def transition_sample(x, theta, dt, rng):
        phi = theta[:, 0][:, None, None]
        return phi * x + sigma_x * rng.standard_normal(x.shape)

    def meas_logpdf(y, x, theta):
        r = float(np.ravel(y)[0]) - x[..., 0]
        return -0.5 * LOG_2PI - math.log(sigma_y) - 0.5 * r**2 / sigma_y**2

    def meas_derivs(y, x, theta):
        r = float(np.ravel(y)[0]) - x
        return -r / sigma_y**2, np.full_like(r, -1.0 / sigma_y**2)

    def meas_sample(x, theta, rng):
        return x + sigma_y * rng.standard_normal(x.shape)

    return StateSpaceModel(
        name="lgssm",
        param_names=("phi",),
        dim_x=1,
        dim_y=1,
        prior_logpdf=prior_logpdf,
        prior_sample=prior_sample,
        init_sample=init_sample,
        transition_sample=transition_sample,
        meas_logpdf=meas_logpdf,
        meas_derivs=meas_derivs,
        meas_sample=meas_sample,
        lower=(lo,),
        upper=(hi,),
    )
