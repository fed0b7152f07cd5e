"""Weight diagnostics, SSP resampling and adaptive tempering."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


class DegeneracyError(RuntimeError):
    """All particle weights vanished. ``trace`` holds the rows computed so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


def normalize_log_weights(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    top = np.max(lw, axis=-1, keepdims=True)
    if np.any(~np.isfinite(top)):
        raise DegeneracyError("all log-weights are -inf or NaN")
    w = np.exp(lw - top)
    return w / w.sum(axis=-1, keepdims=True)


def ess(log_weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2`` of unnormalized log-weights."""
    w = normalize_log_weights(log_weights)
    return float(1.0 / np.sum(w**2))


def ess_batch(log_weights):
    w = normalize_log_weights(log_weights)
    return 1.0 / np.sum(w**2, axis=-1)


def ssp_counts(weights, rng, n=None):
    """Offspring counts from the Srinivasan sampling process.

    Works on the last axis of ``weights`` (normalized); leading axes are
    independent clouds. Each count is ``floor(n w_i)`` or ``ceil(n w_i)``,
    counts sum to ``n`` and ``E[count_i] = n w_i``.

    Fractional parts are paired sequentially: the carried entry and the next
    fractional entry exchange mass so that one of them becomes an integer,
    with probabilities chosen to keep both expectations unchanged.
    """
    w = np.asarray(weights, dtype=float)
    squeeze = w.ndim == 1
    w = np.atleast_2d(w)
    n = w.shape[-1] if n is None else n
    if np.any(w < 0) or np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-8):
        raise ValueError("weights must be non-negative and sum to one")
    expected = n * w
    counts = np.floor(expected)
    frac = expected - counts
    frac[frac < 1e-12] = 0.0
    batch = np.arange(w.shape[0])
    carry = np.full(w.shape[0], -1)
    u = rng.random(w.shape)
    for j in range(w.shape[1]):
        fj = frac[:, j]
        active = fj > 0
        start = active & (carry < 0)
        carry[start] = j
        pair = active & ~start
        if not np.any(pair):
            continue
        rows = batch[pair]
        ci = carry[pair]
        fi = frac[rows, ci]
        fjj = fj[pair]
        s = fi + fjj
        uj = u[rows, j]
        low = s < 1.0
        # s < 1: one entry drops to 0, the other takes s
        p_i = np.where(low, fi / np.where(low, s, 1.0), (1.0 - fjj) / np.where(low, 1.0, 2.0 - s))
        i_wins = uj < p_i
        new_i = np.where(low, np.where(i_wins, s, 0.0), np.where(i_wins, 1.0, s - 1.0))
        new_j = s - new_i
        frac[rows, ci] = new_i
        frac[rows, j] = new_j
        # whichever is still fractional becomes the carry; integers are settled
        i_done = (new_i <= 1e-12) | (new_i >= 1.0 - 1e-12)
        carry[rows] = np.where(i_done, j, ci)
        # a pair can settle both entries at once (s == 1 up to rounding)
        j_done = (new_j <= 1e-12) | (new_j >= 1.0 - 1e-12)
        carry[rows[i_done & j_done]] = -1
    counts = counts + np.rint(frac)
    # rounding drift in the last carried entry
    deficit = n - counts.sum(axis=-1)
    if np.any(deficit != 0):
        for r in np.flatnonzero(deficit):
            k = int(deficit[r])
            order = np.argsort(-(expected[r] - counts[r]) * np.sign(k))
            counts[r, order[: abs(k)]] += np.sign(k)
    counts = counts.astype(np.int64)
    return counts[0] if squeeze else counts


def ssp_resample(weights, rng):
    """Alias of :func:`ssp_counts` for a single cloud."""
    return ssp_counts(weights, rng)


def counts_to_indices(counts):
    """Ancestor indices from offspring counts (last axis)."""
    counts = np.asarray(counts)
    if counts.ndim == 1:
        return np.repeat(np.arange(counts.size), counts)
    n = counts.shape[-1]
    return np.stack([np.repeat(np.arange(n), c) for c in counts])


def next_temperature(current_gamma, loglik_increment, log_weights, target_ess, tol=1e-6) -> float:
    """Largest ``gamma <= 1`` keeping the ESS of the reweighted cloud at or
    above ``target_ess``, by bisection.

    Returns 1 when the full step already satisfies the target. When even
    the smallest step violates it, returns ``current_gamma`` plus a minimal
    increment of 1e-4 (capped at 1) so the sampler keeps moving.
    """
    if current_gamma >= 1.0:
        return 1.0
    ll = np.asarray(loglik_increment, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(lw)
    # -inf likelihood on a live particle is allowed and kills it
    ll = np.where(finite, ll, 0.0)

    def ess_at(delta):
        return ess(lw + delta * ll)

    room = 1.0 - current_gamma
    if target_ess <= 0 or ess_at(room) >= target_ess:
        return 1.0
    lo, hi = 0.0, room
    if ess_at(min(1e-4, room)) < target_ess:
        return min(1.0, current_gamma + 1e-4)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ess_at(mid) >= target_ess:
            lo = mid
        else:
            hi = mid
    return current_gamma + max(lo, 1e-12)


def log_mean_weight_update(log_weights, log_incr):
    """``log sum_i W_i exp(log_incr_i)`` for normalized weights ``W``."""
    lw = np.asarray(log_weights, dtype=float)
    return logsumexp(lw + log_incr, axis=-1) - logsumexp(lw, axis=-1)
