"""Model containers shared by the SMC and SMC^2 samplers.

All callables are vectorized over parameter particles: ``theta`` has shape
``(N, d_theta)`` and latent states have shape ``(N, N_x, d_x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..scoring import DensityDerivatives, DiscreteSupport


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    names: tuple

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if values.shape != (len(self.names),):
            raise ValueError(f"expected {len(self.names)} values for {self.names}, got {values.shape}")
        object.__setattr__(self, "values", values)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True)
class IidModel:
    """Model with i.i.d. observations given ``theta``.

    Parameters
    ----------
    loglik : callable
        ``(y, theta) -> (N, T)`` log-densities for observations ``y`` of
        shape ``(T, d_y)``.
    loglik_derivs : callable
        ``(y_t, theta) -> (d1, d2)``, each ``(N, d_y)``: first and second
        y-derivatives of ``log p(y_t | theta)`` per coordinate.
    prior_logpdf : callable
        ``theta -> (N,)``; may be unnormalized or improper.
    first_proper_index : int
        Number of observations needed before the posterior is proper.
        Zero for a proper prior.
    lower, upper : tuple of float
        Box containing the parameter support, used to pick unconstrained
        coordinates for proposal fitting.
    """

    name: str
    param_names: tuple
    loglik: Callable
    loglik_derivs: Callable
    prior_logpdf: Callable
    prior_sample: Optional[Callable] = None
    sample: Optional[Callable] = None
    first_proper_index: int = 0
    lower: tuple = ()
    upper: tuple = ()
    dim_y: int = 1

    @property
    def dim_theta(self) -> int:
        return len(self.param_names)

    def likelihood_y_derivs(self, y, theta) -> DensityDerivatives:
        """Derivatives of ``log p(y | theta)`` at a single parameter value."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        d1, d2 = self.loglik_derivs(y, th)
        logp = self.loglik(y[None, :], th)[0, 0]
        return DensityDerivatives(logp, d1[0], float(d2[0].sum()))


@dataclass(frozen=True)
class StateSpaceModel:
    """Parametric state-space model that can only be simulated forward.

    ``transition_sample(x, theta, dt, rng)`` moves latent states across a
    gap of ``dt`` time units; no transition density is needed.
    ``meas_logpdf(y, x, theta)`` returns ``(N, N_x)``.
    ``meas_derivs(y, x, theta)`` returns per-coordinate first and second
    y-derivatives of ``log g(y | x)``, each ``(N, N_x, d_y)``.
    ``meas_sample(x, theta, rng)`` returns ``(N, N_x, d_y)`` draws.
    ``support`` is ``None`` for continuous observations.
    """

    name: str
    param_names: tuple
    dim_x: int
    dim_y: int
    prior_logpdf: Callable
    prior_sample: Callable
    init_sample: Callable
    transition_sample: Callable
    meas_logpdf: Callable
    meas_derivs: Optional[Callable] = None
    meas_sample: Optional[Callable] = None
    support: Optional[DiscreteSupport] = None
    lower: tuple = ()
    upper: tuple = ()
    first_proper_index: int = 0

    def __post_init__(self):
        if self.meas_derivs is None and self.meas_sample is None and self.support is None:
            raise ValueError("continuous model needs measurement derivatives or a measurement sampler")

    @property
    def dim_theta(self) -> int:
        return len(self.param_names)

    @property
    def is_discrete(self) -> bool:
        return self.support is not None


def simulate_dataset(model, theta, T: int, rng, times=None) -> np.ndarray:
    """Draw ``T`` observations from ``model`` at parameter ``theta``.

    For state-space models, ``times`` gives the observation times (unit
    spacing by default) and the model must have a measurement sampler.
    Returns an array of shape ``(T, d_y)``.
    """
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    if theta.shape != (model.dim_theta,):
        raise ValueError(f"theta must have length {model.dim_theta}")
    if not np.isfinite(model.prior_logpdf(theta[None, :])[0]):
        raise ValueError(f"theta {theta.tolist()} outside the prior support of {model.name}")
    if isinstance(model, IidModel):
        if T == 0:
            return np.empty((0, model.dim_y))
        if model.sample is None:
            raise ValueError(f"{model.name} has no sampler")
        return model.sample(theta, T, rng)

    if model.meas_sample is None:
        raise ValueError(f"{model.name} has no measurement sampler")
    out = np.empty((T, model.dim_y))
    if T == 0:
        return out
    times = np.arange(1.0, T + 1.0) if times is None else np.asarray(times, dtype=float)
    th = theta[None, :]
    x = model.init_sample(th, 1, rng)
    for t in range(T):
        if t > 0:
            x = model.transition_sample(x, th, times[t] - times[t - 1], rng)
        out[t] = model.meas_sample(x, th, rng)[0, 0]
    return out
