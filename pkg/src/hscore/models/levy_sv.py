"""Levy-driven stochastic volatility models (single and two-factor).

The volatility factor is a Gamma Ornstein-Uhlenbeck process driven by a
compound Poisson process with exponential jumps. Over one unit of time,
given the previous level ``Z_{t-1}``:

    k ~ Poisson(lambda xi^2 / omega^2)
    U_j ~ Unif(0, 1)          (time from jump j to the end of the interval)
    E_j ~ Exp(xi / omega^2)
    Z_t = exp(-lambda) Z_{t-1} + sum_j exp(-lambda U_j) E_j
    V_t = (Z_{t-1} - Z_t + sum_j E_j) / lambda

and the stationary law of ``Z`` is Gamma(xi^2/omega^2, xi/omega^2).
Returns are ``Y_t | V_t ~ N(mu + beta V_t, V_t)``.
"""

from __future__ import annotations

import math

import numpy as np

from .base import StateSpaceModel

LOG_2PI = math.log(2.0 * math.pi)

# Above this many jumps in one interval the two jump sums are drawn from
# their exact-moment bivariate Normal instead of jump by jump.
CLT_JUMPS = 500
MAX_POISSON_RATE = 1e15


def _jump_sums(k, lam, beta, rng):
    """Sums ``sum_j E_j`` and ``sum_j exp(-lam U_j) E_j`` per element."""
    size = k.size
    s1 = np.zeros(size)
    s2 = np.zeros(size)
    kf = k.ravel()
    lamf = lam.ravel()
    betaf = beta.ravel()

    exact = np.flatnonzero((kf > 0) & (kf <= CLT_JUMPS))
    if exact.size:
        counts = kf[exact]
        owner = np.repeat(exact, counts)
        e = rng.standard_exponential(owner.size) / betaf[owner]
        u = rng.random(owner.size)
        s1 += np.bincount(owner, weights=e, minlength=size)
        s2 += np.bincount(owner, weights=np.exp(-lamf[owner] * u) * e, minlength=size)

    big = np.flatnonzero(kf > CLT_JUMPS)
    if big.size:
        n = kf[big].astype(float)
        lb, bb = lamf[big], betaf[big]
        m1 = -np.expm1(-lb) / lb
        m2 = -np.expm1(-2.0 * lb) / (2.0 * lb)
        mean1, mean2 = n / bb, n * m1 / bb
        v1 = n / bb**2
        v2 = n * (2.0 * m2 - m1**2) / bb**2
        c12 = n * m1 / bb**2
        z1, z2 = rng.standard_normal((2, big.size))
        a = np.sqrt(v1)
        s1_big = mean1 + a * z1
        s2_big = mean2 + (c12 / a) * z1 + np.sqrt(np.maximum(v2 - c12**2 / v1, 0.0)) * z2
        s1_big = np.maximum(s1_big, 0.0)
        s1[big] = s1_big
        s2[big] = np.clip(s2_big, 0.0, s1_big)
    return s1.reshape(k.shape), s2.reshape(k.shape)


def levy_sv_transition(z_prev, lam, xi, omega_sq, rng):
    """One unit-time step of the Gamma-OU volatility recursion.

    Arguments broadcast against each other. Returns ``(v, z)``: integrated
    variance over the interval and the new factor level.
    """
    z_prev, lam, xi, omega_sq = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (z_prev, lam, xi, omega_sq))
    )
    if np.any(lam <= 0) or np.any(xi <= 0) or np.any(omega_sq <= 0):
        raise ValueError("lambda, xi and omega^2 must be positive")
    rate = np.minimum(lam * xi**2 / omega_sq, MAX_POISSON_RATE)
    k = rng.poisson(rate)
    beta = xi / omega_sq
    s1, s2 = _jump_sums(k, lam, beta, rng)
    decay = np.exp(-lam)
    z = decay * z_prev + s2
    # (Z_{t-1} - Z_t + sum E) / lambda, rearranged to avoid cancellation
    v = (-np.expm1(-lam) * z_prev + (s1 - s2)) / lam
    return np.maximum(v, 0.0), z


def _stationary_z(xi, omega_sq, rng):
    return rng.gamma(xi**2 / omega_sq) * omega_sq / xi


def _gaussian_meas(sum_v, mu_col, beta_col):
    def _mean(theta, v):
        return theta[:, mu_col][:, None] + theta[:, beta_col][:, None] * v

    def meas_logpdf(y, x, theta):
        v = sum_v(x)
        r = float(np.ravel(y)[0]) - _mean(theta, v)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = -0.5 * (LOG_2PI + np.log(v)) - 0.5 * r**2 / v
        return np.where(v > 0, out, -np.inf)

    def meas_derivs(y, x, theta):
        v = sum_v(x)
        r = float(np.ravel(y)[0]) - _mean(theta, v)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return (-r / v)[..., None], (-1.0 / v)[..., None]

    def meas_sample(x, theta, rng):
        v = sum_v(x)
        return (_mean(theta, v) + np.sqrt(v) * rng.standard_normal(v.shape))[..., None]

    return meas_logpdf, meas_derivs, meas_sample


def _exp_logpdf(x, rate):
    return np.where(x > 0, math.log(rate) - rate * x, -np.inf)


def _normal_logpdf(x, var):
    return -0.5 * (LOG_2PI + math.log(var)) - 0.5 * x**2 / var


def levy_sv_m1_spec() -> StateSpaceModel:
    """Single-factor model, ``theta = (lambda, xi, omega^2, mu, beta)``.

    Latent state ``x = (V_t, Z_t)``.
    """

    def prior_logpdf(theta):
        lam, xi, om, mu, beta = theta.T
        return (
            _exp_logpdf(lam, 1.0)
            + _exp_logpdf(xi, 0.2)
            + _exp_logpdf(om, 0.2)
            + _normal_logpdf(mu, 10.0)
            + _normal_logpdf(beta, 10.0)
        )

    def prior_sample(rng, n):
        return np.column_stack(
            [
                rng.exponential(1.0, n),
                rng.exponential(5.0, n),
                rng.exponential(5.0, n),
                rng.normal(0.0, math.sqrt(10.0), n),
                rng.normal(0.0, math.sqrt(10.0), n),
            ]
        )

    def _params(theta):
        return (theta[:, i][:, None] for i in range(3))

    def init_sample(theta, n_x, rng):
        lam, xi, om = _params(theta)
        z0 = _stationary_z(np.broadcast_to(xi, (theta.shape[0], n_x)), np.broadcast_to(om, (theta.shape[0], n_x)), rng)
        v, z = levy_sv_transition(z0, lam, xi, om, rng)
        return np.stack([v, z], axis=-1)

    def transition_sample(x, theta, dt, rng):
        lam, xi, om = _params(theta)
        v, z = levy_sv_transition(x[..., 1], lam, xi, om, rng)
        return np.stack([v, z], axis=-1)

    logpdf, derivs, sampler = _gaussian_meas(lambda x: x[..., 0], 3, 4)
    return StateSpaceModel(
        name="levy_sv_m1",
        param_names=("lambda", "xi", "omega2", "mu", "beta"),
        dim_x=2,
        dim_y=1,
        prior_logpdf=prior_logpdf,
        prior_sample=prior_sample,
        init_sample=init_sample,
        transition_sample=transition_sample,
        meas_logpdf=logpdf,
        meas_derivs=derivs,
        meas_sample=sampler,
        lower=(0.0, 0.0, 0.0, -math.inf, -math.inf),
        upper=(math.inf,) * 5,
    )


def levy_sv_m2_spec() -> StateSpaceModel:
    """Two-factor model, ``theta = (lambda1, lambda2, w, xi, omega^2, mu, beta)``.

    Factor ``i`` uses ``(lambda_i, xi w_i, omega w_i)`` with weights
    ``(w, 1 - w)``; the prior orders the rates through
    ``lambda2 - lambda1 ~ Exp(1/2)``. Latent state
    ``x = (V_1, V_2, Z_1, Z_2)``.
    """

    def prior_logpdf(theta):
        l1, l2, w, xi, om, mu, beta = theta.T
        in_unit = np.where((w > 0) & (w < 1), 0.0, -np.inf)
        return (
            _exp_logpdf(l1, 1.0)
            + _exp_logpdf(l2 - l1, 0.5)
            + in_unit
            + _exp_logpdf(xi, 0.2)
            + _exp_logpdf(om, 0.2)
            + _normal_logpdf(mu, 10.0)
            + _normal_logpdf(beta, 10.0)
        )

    def prior_sample(rng, n):
        l1 = rng.exponential(1.0, n)
        return np.column_stack(
            [
                l1,
                l1 + rng.exponential(2.0, n),
                rng.random(n),
                rng.exponential(5.0, n),
                rng.exponential(5.0, n),
                rng.normal(0.0, math.sqrt(10.0), n),
                rng.normal(0.0, math.sqrt(10.0), n),
            ]
        )

    def _factors(theta):
        l1, l2, w, xi, om = (theta[:, i][:, None] for i in range(5))
        return ((l1, xi * w, om * w**2), (l2, xi * (1 - w), om * (1 - w) ** 2))

    def init_sample(theta, n_x, rng):
        shape = (theta.shape[0], n_x)
        out = np.empty(shape + (4,))
        for i, (lam, xi, om) in enumerate(_factors(theta)):
            z0 = _stationary_z(np.broadcast_to(xi, shape), np.broadcast_to(om, shape), rng)
            out[..., i], out[..., 2 + i] = levy_sv_transition(z0, lam, xi, om, rng)
        return out

    def transition_sample(x, theta, dt, rng):
        out = np.empty_like(x)
        for i, (lam, xi, om) in enumerate(_factors(theta)):
            out[..., i], out[..., 2 + i] = levy_sv_transition(x[..., 2 + i], lam, xi, om, rng)
        return out

    logpdf, derivs, sampler = _gaussian_meas(lambda x: x[..., 0] + x[..., 1], 5, 6)
    return StateSpaceModel(
        name="levy_sv_m2",
        param_names=("lambda1", "lambda2", "w", "xi", "omega2", "mu", "beta"),
        dim_x=4,
        dim_y=1,
        prior_logpdf=prior_logpdf,
        prior_sample=prior_sample,
        init_sample=init_sample,
        transition_sample=transition_sample,
        meas_logpdf=logpdf,
        meas_derivs=derivs,
        meas_sample=sampler,
        lower=(0.0, 0.0, 0.0, 0.0, 0.0, -math.inf, -math.inf),
        upper=(math.inf, math.inf, 1.0, math.inf, math.inf, math.inf, math.inf),
    )
