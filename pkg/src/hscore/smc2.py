"""SMC^2 for state-space models.

Each parameter particle carries a bootstrap particle filter over the latent
state. The filters give unbiased likelihood increments that reweight the
parameter particles, and filtered expectations of the measurement
y-derivatives from which the H-score increment is assembled. Rejuvenation
is particle-marginal Metropolis-Hastings with an independent mixture
proposal, and the number of state particles doubles whenever acceptance
falls below a floor.

All filters are stored together: states have shape ``(N_theta, N_x, d_x)``
and row ``i`` is the filter attached to ``theta_i``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .kde import KdeUnderflowError, kde_hscore_increment
from .mixture import fit_mixture_proposal
from .models.base import StateSpaceModel
from .resampling import DegeneracyError, ess, ess_batch, normalize_log_weights, ssp_counts
from .scoring import ScoreIncrement, ScoringError, discrete_hscore
from .trace import PrequentialTrace, TraceRow

MODES = ("auto", "derivative", "kde", "discrete")


@dataclass(frozen=True)
class Smc2Config:
    n_theta: int = 1024
    n_x_init: int = 128
    n_x_max: int = 4096
    ess_threshold_ratio: float = 0.5
    x_ess_threshold_ratio: float = 0.5
    acceptance_floor: float = 0.15
    mh_steps: int = 3
    mixture_components: int = 5
    proposal_inflation: float = 2.0
    hscore_mode: str = "auto"
    kde_draws: int = 1024
    kde_bandwidth: float = 0.1
    seed: object = 0

    def __post_init__(self):
        if self.n_theta < 2 or self.n_x_init < 2 or self.n_x_max < self.n_x_init:
            raise ValueError("need n_theta >= 2 and 2 <= n_x_init <= n_x_max")
        for name in ("ess_threshold_ratio", "x_ess_threshold_ratio", "acceptance_floor"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.mh_steps < 0 or self.mixture_components < 1:
            raise ValueError("mh_steps must be >= 0 and mixture_components >= 1")
        if self.hscore_mode not in MODES:
            raise ValueError(f"hscore_mode must be one of {MODES}")
        if self.kde_draws < 2 or not self.kde_bandwidth > 0:
            raise ValueError("kde_draws must be >= 2 and kde_bandwidth positive")


def resolve_mode(spec: StateSpaceModel, mode: str) -> str:
    if spec.is_discrete:
        if mode not in ("auto", "discrete"):
            raise ValueError(f"{spec.name} has discrete observations; use the discrete H-score")
        return "discrete"
    if mode == "discrete":
        raise ValueError(f"{spec.name} has continuous observations")
    if mode == "auto":
        return "derivative" if spec.meas_derivs is not None else "kde"
    if mode == "derivative" and spec.meas_derivs is None:
        raise ValueError(f"{spec.name} has no measurement derivatives; use hscore_mode='kde'")
    if mode == "kde" and spec.meas_sample is None:
        raise ValueError(f"{spec.name} has no measurement sampler")
    return mode


@dataclass
class XCloud:
    """State particles of every filter: ``states (N, N_x, d_x)``,
    ``log_weights (N, N_x)`` and the running log-likelihood estimate
    ``loglik_cum (N,)``."""

    states: np.ndarray
    log_weights: np.ndarray
    loglik_cum: np.ndarray

    @property
    def n_x(self):
        return self.states.shape[1]

    def take(self, idx) -> "XCloud":
        return XCloud(self.states[idx], self.log_weights[idx], self.loglik_cum[idx])


@dataclass
class Smc2Cloud:
    theta: np.ndarray
    theta_log_weights: np.ndarray
    x: Optional[XCloud]
    t: int = 0

    @property
    def n_theta(self):
        return self.theta.shape[0]

    @property
    def n_x_current(self):
        return 0 if self.x is None else self.x.n_x


@dataclass
class PfStep:
    """Output of one filter step for every parameter particle."""

    x: XCloud
    loglik_inc: np.ndarray
    d1_mean: Optional[np.ndarray]
    d2_mean: Optional[np.ndarray]
    pred_states: np.ndarray
    pred_log_weights: np.ndarray


def _resample_rows(states, log_weights, ratio, rng):
    """SSP-resample the rows whose ESS is below ``ratio * N_x``."""
    n_x = states.shape[1]
    finite = np.any(np.isfinite(log_weights), axis=1)
    lw = np.where(finite[:, None], log_weights, 0.0)
    rows = np.flatnonzero(finite & (ess_batch(lw) < ratio * n_x))
    if rows.size == 0:
        return states, log_weights
    counts = ssp_counts(normalize_log_weights(lw[rows]), rng)
    idx = np.repeat(np.tile(np.arange(n_x), (rows.size, 1)).ravel(), counts.ravel()).reshape(rows.size, n_x)
    states = states.copy()
    log_weights = log_weights.copy()
    states[rows] = np.take_along_axis(states[rows], idx[..., None], axis=1)
    log_weights[rows] = 0.0
    return states, log_weights


def _normalized_rows(lw):
    top = np.max(lw, axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.exp(lw - top)
    s = w.sum(axis=1, keepdims=True)
    return np.divide(w, s, out=np.zeros_like(w), where=s > 0)


def pf_step(xc: Optional[XCloud], theta, y_t, dt, spec: StateSpaceModel, rng, n_x=None, ratio=0.5, derivs=True) -> PfStep:
    """Advance every filter by one observation.

    ``xc = None`` starts the filters from ``init_sample`` (with ``n_x``
    particles). The likelihood increment is the log mean of the measurement
    density under the predictive weights; filtered derivative expectations
    use the updated weights. Rows whose weights all vanish get a ``-inf``
    increment and zero expectations.
    """
    y_t = np.asarray(y_t, dtype=float).ravel()
    if xc is None:
        states = spec.init_sample(theta, n_x, rng)
        lw_prev = np.zeros(states.shape[:2])
        loglik = np.zeros(theta.shape[0])
    else:
        states, lw_prev = _resample_rows(xc.states, xc.log_weights, ratio, rng)
        states = spec.transition_sample(states, theta, dt, rng)
        loglik = xc.loglik_cum
    w_pred = _normalized_rows(lw_prev)
    with np.errstate(divide="ignore"):
        log_wp = np.log(w_pred)
    log_g = spec.meas_logpdf(y_t, states, theta)
    log_g = np.where(np.isnan(log_g), -np.inf, log_g)
    inc = logsumexp(log_wp + log_g, axis=1)
    lw_new = log_wp + log_g
    d1m = d2m = None
    if derivs and spec.meas_derivs is not None:
        w_new = _normalized_rows(lw_new)
        d1, d2 = spec.meas_derivs(y_t, states, theta)
        live = (w_new > 0)[..., None]
        d1 = np.where(live, d1, 0.0)
        d2 = np.where(live, d2, 0.0)
        d1m = np.einsum("ij,ijk->ik", w_new, d1)
        d2m = np.einsum("ij,ijk->ik", w_new, d2 + d1**2)
    return PfStep(XCloud(states, lw_new, loglik + inc), inc, d1m, d2m, states, log_wp)


def run_particle_filters(theta, data, times, spec, n_x, rng, ratio=0.5) -> XCloud:
    """Filters for ``theta`` over all of ``data``; returns the final clouds."""
    xc = None
    for t in range(data.shape[0]):
        dt = 0.0 if t == 0 else times[t] - times[t - 1]
        xc = pf_step(xc, theta, data[t], dt, spec, rng, n_x=n_x, ratio=ratio, derivs=False).x
    return xc


def predictive_pmf_logs(step: PfStep, theta_log_weights, theta, spec, points):
    """``log p(z | y_{1:t-1})`` at each point, averaging the measurement pmf
    over the predictive state particles and the pre-update parameter
    weights."""
    lw_theta = theta_log_weights - logsumexp(theta_log_weights)
    out = []
    for z in points:
        log_g = spec.meas_logpdf(np.asarray(z, dtype=float), step.pred_states, theta)
        out.append(float(logsumexp(lw_theta[:, None] + step.pred_log_weights + log_g)))
    return out


def discrete_hscore_increment_smc2(step: PfStep, theta_log_weights, theta, y_t, spec) -> float:
    """Discrete H-score of the estimated predictive pmf at ``y_t``."""
    y = np.asarray(y_t, dtype=np.int64).ravel()
    cache = {}
    lw_theta = theta_log_weights - logsumexp(theta_log_weights)

    def log_pmf(z):
        key = tuple(int(v) for v in z)
        if key not in cache:
            log_g = spec.meas_logpdf(np.asarray(z, dtype=float), step.pred_states, theta)
            cache[key] = float(logsumexp(lw_theta[:, None] + step.pred_log_weights + log_g))
        return cache[key]

    return discrete_hscore(y, log_pmf, spec.support)


def kde_draws(step: PfStep, theta, spec, n, rng):
    """``n`` draws of ``y_t`` per parameter particle from its predictive."""
    w = _normalized_rows(step.pred_log_weights)
    dead = w.sum(axis=1) == 0
    w[dead] = 1.0 / w.shape[1]
    cum = np.cumsum(w, axis=1)
    u = rng.random((w.shape[0], n))
    idx = np.minimum(np.array([np.searchsorted(c, r) for c, r in zip(cum, u)]), w.shape[1] - 1)
    x = np.take_along_axis(step.pred_states, idx[..., None], axis=1)
    return spec.meas_sample(x, theta, rng)[..., 0]


def pmmh_rejuvenate(cloud: Smc2Cloud, data, times, spec, config: Smc2Config, rng):
    """Particle-marginal independent MH moves on an equally weighted cloud.

    Every proposal gets a fresh filter over the assimilated prefix; an
    accepted particle adopts that filter.
    """
    if config.mh_steps == 0:
        return cloud, math.nan
    n = cloud.n_theta
    proposal = fit_mixture_proposal(
        cloud.theta, np.full(n, 1.0 / n), config.mixture_components, rng, spec.lower, spec.upper,
        inflation=config.proposal_inflation,
    )
    theta = cloud.theta.copy()
    xc = cloud.x
    cur_prior = spec.prior_logpdf(theta)
    cur_q = proposal.logpdf(theta)
    accepted = 0
    for _ in range(config.mh_steps):
        prop = proposal.sample(rng, n)
        prop_prior = spec.prior_logpdf(prop)
        ok = np.isfinite(prop_prior) & np.isfinite(cur_q)
        if not ok.any():
            continue
        rows = np.flatnonzero(ok)
        new_x = run_particle_filters(prop[rows], data, times, spec, xc.n_x, rng, config.x_ess_threshold_ratio)
        prop_q = proposal.logpdf(prop[rows])
        with np.errstate(invalid="ignore"):
            log_alpha = (
                prop_prior[rows] + new_x.loglik_cum - cur_prior[rows] - xc.loglik_cum[rows] + cur_q[rows] - prop_q
            )
        log_alpha = np.where(np.isnan(log_alpha), -np.inf, log_alpha)
        acc = np.log(rng.random(rows.size)) < log_alpha
        hit = rows[acc]
        theta[hit] = prop[hit]
        cur_prior[hit] = prop_prior[hit]
        cur_q[hit] = prop_q[acc]
        xc = XCloud(xc.states.copy(), xc.log_weights.copy(), xc.loglik_cum.copy())
        xc.states[hit] = new_x.states[acc]
        xc.log_weights[hit] = new_x.log_weights[acc]
        xc.loglik_cum[hit] = new_x.loglik_cum[acc]
        accepted += int(acc.sum())
    return replace(cloud, theta=theta, x=xc), accepted / (config.mh_steps * n)


def adapt_nx(cloud: Smc2Cloud, acceptance_rate, data, times, spec, config: Smc2Config, rng) -> Smc2Cloud:
    """Double the number of state particles when acceptance is too low.

    Every filter is rebuilt over the prefix with the new size. The
    parameter particles are kept; their log-weights change by the
    difference between the new and old likelihood estimates, which keeps
    the weighted cloud a valid approximation of the posterior.
    """
    if not acceptance_rate < config.acceptance_floor:
        return cloud
    n_x = cloud.n_x_current
    if n_x >= config.n_x_max:
        warnings.warn(f"N_x capped at {config.n_x_max}", RuntimeWarning, stacklevel=2)
        return cloud
    new_n = min(2 * n_x, config.n_x_max)
    new_x = run_particle_filters(cloud.theta, data, times, spec, new_n, rng, config.x_ess_threshold_ratio)
    with np.errstate(invalid="ignore"):
        delta = new_x.loglik_cum - cloud.x.loglik_cum
    delta = np.where(np.isnan(delta), -np.inf, delta)
    return replace(cloud, x=new_x, theta_log_weights=cloud.theta_log_weights + delta)


def initial_smc2_cloud(spec, config, rng) -> Smc2Cloud:
    theta = spec.prior_sample(rng, config.n_theta)
    return Smc2Cloud(theta, np.zeros(config.n_theta), None, 0)


def smc2_assimilate(cloud: Smc2Cloud, data, times, spec, config: Smc2Config, rng, mode=None):
    """Assimilate observation ``data[cloud.t]``.

    ``data`` and ``times`` hold the whole series; only the prefix up to the
    current observation is used. The H increment is computed right after
    reweighting, before any rejuvenation. Returns ``(cloud, row)``.
    """
    mode = resolve_mode(spec, config.hscore_mode) if mode is None else mode
    t = cloud.t
    y_t = data[t]
    dt = 0.0 if t == 0 else times[t] - times[t - 1]
    n_x = cloud.n_x_current or config.n_x_init
    step = pf_step(cloud.x, cloud.theta, y_t, dt, spec, rng, n_x=n_x, ratio=config.x_ess_threshold_ratio, derivs=mode == "derivative")
    lw_pre = cloud.theta_log_weights
    finite_inc = np.where(np.isnan(step.loglik_inc), -np.inf, step.loglik_inc)
    lw_new = lw_pre + finite_inc
    if not np.any(np.isfinite(lw_new)):
        raise DegeneracyError(f"every parameter particle has zero likelihood at t={t + 1}")
    log_ev = float(logsumexp(lw_pre + finite_inc) - logsumexp(lw_pre))
    w = normalize_log_weights(lw_new)
    flag = ""
    if mode == "derivative":
        live = w > 0
        wl = w[live] / w[live].sum()
        m1 = wl @ step.d1_mean[live]
        m2 = wl @ step.d2_mean[live]
        inc = ScoreIncrement.from_derivatives(m1, m2 - m1**2)
    elif mode == "kde":
        draws = kde_draws(step, cloud.theta, spec, config.kde_draws, rng)
        try:
            k = kde_hscore_increment(draws, w, y_t[0], config.kde_bandwidth)
            inc = k.increment
            flag = "kde_unreliable" if k.unreliable else ""
        except KdeUnderflowError:
            inc = ScoreIncrement(np.full(1, np.nan), np.full(1, np.nan), math.nan)
            flag = "degenerate"
    else:
        try:
            h = discrete_hscore_increment_smc2(step, lw_pre, cloud.theta, y_t, spec)
        except ScoringError:
            h, flag = math.nan, "degenerate"
        inc = ScoreIncrement(np.full(spec.dim_y, np.nan), np.full(spec.dim_y, np.nan), h)

    new = Smc2Cloud(cloud.theta, lw_new, step.x, t + 1)
    theta_ess = ess(lw_new)
    rate = math.nan
    if theta_ess < config.ess_threshold_ratio * cloud.n_theta:
        idx = np.repeat(np.arange(new.n_theta), ssp_counts(w, rng))
        new = Smc2Cloud(new.theta[idx], np.zeros(new.n_theta), new.x.take(idx), t + 1)
        new, rate = pmmh_rejuvenate(new, data[: t + 1], times[: t + 1], spec, config, rng)
        if not math.isnan(rate):
            new = adapt_nx(new, rate, data[: t + 1], times[: t + 1], spec, config, rng)
    row = TraceRow(
        t=float(times[t]),
        log_evidence_inc=log_ev,
        h_inc=inc.value,
        grad_log=inc.per_dim_d1,
        hess_log=inc.per_dim_d2,
        ess_before=theta_ess,
        n_temper=0,
        acceptance_rate=rate,
        n_x=n_x,
        flag=flag,
    )
    return new, row


def run_smc2(spec: StateSpaceModel, data, config: Smc2Config, times=None) -> PrequentialTrace:
    """Prequential log-evidence and H-score of a state-space model.

    ``times`` are the observation times (``1..T`` by default); gaps between
    them are passed to the transition sampler.
    """
    y = np.asarray(data, dtype=float).reshape(-1, spec.dim_y)
    if y.shape[0] == 0:
        raise ValueError("data must be non-empty")
    times = np.arange(1.0, y.shape[0] + 1.0) if times is None else np.asarray(times, dtype=float)
    if times.shape != (y.shape[0],) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing, one per observation")
    mode = resolve_mode(spec, config.hscore_mode)
    rng = np.random.default_rng(config.seed)
    cloud = initial_smc2_cloud(spec, config, rng)
    trace = PrequentialTrace(spec.name)
    for _ in range(y.shape[0]):
        try:
            cloud, row = smc2_assimilate(cloud, y, times, spec, config, rng, mode)
        except DegeneracyError as exc:
            raise DegeneracyError(str(exc), trace) from exc
        trace.append(row)
    return trace
