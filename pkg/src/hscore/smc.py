"""SMC sampler over parameters for models with a tractable likelihood.

Between consecutive posteriors ``p(theta | y_{1:t-1})`` and
``p(theta | y_{1:t})`` the sampler walks an adaptive tempering ladder on
``p(y_t | theta)^gamma``, resampling with SSP and rejuvenating with
independent Metropolis-Hastings moves whose proposal is a Gaussian mixture
fitted to the current particles. Each assimilated observation yields one
log-evidence increment and one H-score increment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .mixture import fit_mixture_proposal
from .models.base import IidModel
from .resampling import (
    DegeneracyError,
    counts_to_indices,
    ess,
    log_mean_weight_update,
    next_temperature,
    normalize_log_weights,
    ssp_counts,
)
from .scoring import hscore_increment_from_posterior
from .trace import PrequentialTrace, TraceRow


@dataclass(frozen=True)
class InitProposal:
    """Initial distribution ``q`` used in place of the prior."""

    sample: Callable
    logpdf: Callable


def gaussian_proposal(mean, sd) -> InitProposal:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)

    def sample(rng, n):
        return mean + sd * rng.standard_normal((n, mean.size))

    def logpdf(theta):
        z = (theta - mean) / sd
        return np.sum(-0.5 * z**2 - np.log(sd) - 0.5 * math.log(2 * math.pi), axis=1)

    return InitProposal(sample, logpdf)


@dataclass(frozen=True)
class SmcConfig:
    n_theta: int = 1024
    ess_threshold_ratio: float = 0.5
    mh_steps_per_temper: int = 3
    mixture_components: int = 5
    proposal_inflation: float = 2.0
    init_proposal: Optional[InitProposal] = None
    seed: object = 0

    def __post_init__(self):
        if self.n_theta < 2:
            raise ValueError("n_theta must be at least 2")
        if not 0.0 < self.ess_threshold_ratio < 1.0:
            raise ValueError("ess_threshold_ratio must lie in (0, 1)")
        if self.mh_steps_per_temper < 0 or self.mixture_components < 1:
            raise ValueError("mh_steps_per_temper must be >= 0 and mixture_components >= 1")


@dataclass(frozen=True)
class TemperingLadder:
    gammas: tuple

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        if g.size < 2 or g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
            raise ValueError("ladder must increase strictly from 0 to 1")

    def __len__(self):
        return len(self.gammas) - 1


@dataclass
class ThetaCloud:
    """Weighted parameter particles.

    ``loglik`` caches ``log p(y_{1:t} | theta_i)`` for the assimilated
    prefix, which the rejuvenation target needs.
    """

    particles: np.ndarray
    log_weights: np.ndarray
    loglik: np.ndarray
    t: int = 0
    ladder: Optional[TemperingLadder] = None

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if np.any(np.isnan(self.log_weights)):
            raise ValueError("NaN log-weight")

    @property
    def n(self):
        return self.particles.shape[0]

    @property
    def weights(self):
        return normalize_log_weights(self.log_weights)

    def normalized(self) -> "ThetaCloud":
        w = self.weights
        with np.errstate(divide="ignore"):
            return replace(self, log_weights=np.log(w))

    def resample(self, rng) -> "ThetaCloud":
        idx = counts_to_indices(ssp_counts(self.weights, rng))
        return replace(self, particles=self.particles[idx], log_weights=np.zeros(self.n), loglik=self.loglik[idx])


def initial_cloud(model, config: SmcConfig, rng) -> ThetaCloud:
    n = config.n_theta
    q = config.init_proposal
    if q is not None:
        theta = q.sample(rng, n)
        lw = model.prior_logpdf(theta) - q.logpdf(theta)
    elif model.prior_sample is not None:
        theta = model.prior_sample(rng, n)
        lw = np.zeros(n)
    else:
        raise ValueError(f"{model.name} has no prior sampler; set config.init_proposal")
    lw = np.where(np.isnan(lw), -np.inf, lw)
    return ThetaCloud(theta, lw, np.zeros(n), 0)


def mh_rejuvenate(cloud: ThetaCloud, target_log_density, proposal, n_steps, rng):
    """Independent Metropolis-Hastings moves on an equally weighted cloud.

    ``target_log_density(theta) -> (N,)``; ``proposal`` has ``sample`` and
    ``logpdf``. Returns the moved cloud (with ``loglik`` left stale, the
    caller refreshes it) and the pooled acceptance rate.
    """
    if n_steps == 0:
        return cloud, math.nan
    theta = cloud.particles.copy()
    cur_target = target_log_density(theta)
    cur_q = proposal.logpdf(theta)
    accepted = 0
    for _ in range(n_steps):
        prop = proposal.sample(rng, cloud.n)
        prop_target = target_log_density(prop)
        prop_q = proposal.logpdf(prop)
        with np.errstate(invalid="ignore"):
            log_alpha = prop_target - cur_target + cur_q - prop_q
        # q(current) = 0 or an undefined ratio counts as a rejection
        ok = np.isfinite(cur_q) & np.isfinite(prop_target) & ~np.isnan(log_alpha)
        accept = ok & (np.log(rng.random(cloud.n)) < np.where(ok, log_alpha, -np.inf))
        theta[accept] = prop[accept]
        cur_target = np.where(accept, prop_target, cur_target)
        cur_q = np.where(accept, prop_q, cur_q)
        accepted += int(accept.sum())
    return replace(cloud, particles=theta), accepted / (n_steps * cloud.n)


def _data_loglik(model, y_prefix, theta):
    if y_prefix.shape[0] == 0:
        return np.zeros(theta.shape[0])
    return model.loglik(y_prefix, theta).sum(axis=1)


def assimilate_observation(cloud: ThetaCloud, y_prefix, y_t, model: IidModel, config: SmcConfig, rng):
    """Move ``cloud`` from ``p(theta | y_prefix)`` to ``p(theta | y_prefix, y_t)``.

    Returns ``(cloud, row)``. The evidence increment telescopes the weight
    normalizations along the tempering ladder; the H increment averages the
    likelihood's y-derivatives at ``y_t`` over the updated cloud.
    """
    y_prefix = np.asarray(y_prefix, dtype=float).reshape(-1, model.dim_y)
    y_t = np.asarray(y_t, dtype=float).reshape(model.dim_y)
    n = cloud.n
    target_ess = config.ess_threshold_ratio * n
    theta = cloud.particles
    lw = cloud.log_weights
    loglik = cloud.loglik
    ll_t = model.loglik(y_t[None, :], theta)[:, 0]
    ess_before = ess(lw)
    gamma = 0.0
    gammas = [0.0]
    log_ev = 0.0
    acc = []
    while gamma < 1.0:
        new_gamma = next_temperature(gamma, ll_t, lw, target_ess)
        delta = new_gamma - gamma
        with np.errstate(invalid="ignore"):
            incr = np.where(np.isneginf(ll_t), -np.inf, delta * ll_t)
        log_ev += float(log_mean_weight_update(lw, incr))
        lw = lw + incr
        if not np.any(np.isfinite(lw)):
            raise DegeneracyError(f"all particle weights vanished at t={cloud.t + 1}")
        gamma = new_gamma
        gammas.append(gamma)
        if gamma < 1.0 or ess(lw) < target_ess:
            cur = ThetaCloud(theta, lw, loglik, cloud.t).resample(rng)
            proposal = fit_mixture_proposal(
                cur.particles, np.full(n, 1.0 / n), config.mixture_components, rng, model.lower, model.upper,
                inflation=config.proposal_inflation,
            )
            g = gamma

            def target(th, g=g):
                return model.prior_logpdf(th) + _data_loglik(model, y_prefix, th) + g * model.loglik(y_t[None, :], th)[:, 0]

            cur, rate = mh_rejuvenate(cur, target, proposal, config.mh_steps_per_temper, rng)
            if not math.isnan(rate):
                acc.append(rate)
            theta = cur.particles
            lw = cur.log_weights
            loglik = _data_loglik(model, y_prefix, theta)
            ll_t = model.loglik(y_t[None, :], theta)[:, 0]

    w = normalize_log_weights(lw)
    d1, d2 = model.loglik_derivs(y_t, theta)
    live = w > 0
    inc = hscore_increment_from_posterior(d1[live], d2[live], w[live] / w[live].sum())
    new_cloud = ThetaCloud(theta, lw, loglik + ll_t, cloud.t + 1, TemperingLadder(tuple(gammas)))
    row = TraceRow(
        t=float(cloud.t + 1),
        log_evidence_inc=log_ev,
        h_inc=inc.value,
        grad_log=inc.per_dim_d1,
        hess_log=inc.per_dim_d2,
        ess_before=ess_before,
        n_temper=len(gammas) - 1,
        acceptance_rate=float(np.mean(acc)) if acc else math.nan,
    )
    return new_cloud, row


def run_smc(model: IidModel, data, config: SmcConfig, permutation=None) -> PrequentialTrace:
    """Prequential log-evidence and H-score of ``model`` on ``data``.

    ``permutation`` reorders the observations first. Rows up to the model's
    ``first_proper_index`` are flagged ``"improper"``: their H increment is
    set to 0 and their evidence increment to NaN.
    """
    y = np.asarray(data, dtype=float).reshape(-1, model.dim_y)
    if y.shape[0] == 0:
        raise ValueError("data must be non-empty")
    if permutation is not None:
        perm = np.asarray(permutation)
        if sorted(perm.tolist()) != list(range(y.shape[0])):
            raise ValueError("permutation must reorder all observations")
        y = y[perm]
    if model.first_proper_index > 0 and config.init_proposal is None:
        raise ValueError(f"{model.name} has an improper prior; set config.init_proposal")
    rng = np.random.default_rng(config.seed)
    cloud = initial_cloud(model, config, rng)
    trace = PrequentialTrace(model.name)
    for t in range(y.shape[0]):
        try:
            cloud, row = assimilate_observation(cloud, y[:t], y[t], model, config, rng)
        except DegeneracyError as exc:
            raise DegeneracyError(str(exc), trace) from exc
        if t < model.first_proper_index:
            row.log_evidence_inc = math.nan
            row.h_inc = 0.0
            row.flag = "improper"
        trace.append(row)
    return trace
