"""Gaussian-mixture independent proposals fitted to weighted particles.

The mixture lives in an unconstrained parametrization of ``theta``: each
coordinate with a finite lower and upper bound goes through a logit, a
single finite bound through a log, and unbounded coordinates are left
alone. Densities returned to callers are in the original ``theta`` space
and include the Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

EM_ITERATIONS = 20
RIDGE = 1e-6
MIN_COMPONENT_WEIGHT = 1e-3


class ProposalFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoxTransform:
    """Coordinate-wise bijection from a box onto R^d."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_bounds(cls, lower, upper, dim):
        lo = np.full(dim, -math.inf) if not len(lower) else np.asarray(lower, dtype=float)
        hi = np.full(dim, math.inf) if not len(upper) else np.asarray(upper, dtype=float)
        return cls(lo, hi)

    @property
    def _kinds(self):
        fl, fh = np.isfinite(self.lower), np.isfinite(self.upper)
        return fl & fh, fl & ~fh, ~fl & fh

    def forward(self, theta):
        both, lo_only, hi_only = self._kinds
        z = np.array(theta, dtype=float, copy=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            if both.any():
                a, b = self.lower[both], self.upper[both]
                x = theta[:, both]
                z[:, both] = np.log(x - a) - np.log(b - x)
            if lo_only.any():
                z[:, lo_only] = np.log(theta[:, lo_only] - self.lower[lo_only])
            if hi_only.any():
                z[:, hi_only] = np.log(self.upper[hi_only] - theta[:, hi_only])
        return z

    def inverse(self, z):
        both, lo_only, hi_only = self._kinds
        theta = np.array(z, dtype=float, copy=True)
        if both.any():
            a, b = self.lower[both], self.upper[both]
            u = 0.5 * (1.0 + np.tanh(0.5 * z[:, both]))
            theta[:, both] = a + (b - a) * u
        if lo_only.any():
            theta[:, lo_only] = self.lower[lo_only] + np.exp(np.minimum(z[:, lo_only], 700.0))
        if hi_only.any():
            theta[:, hi_only] = self.upper[hi_only] - np.exp(np.minimum(z[:, hi_only], 700.0))
        return theta

    def log_jacobian(self, theta):
        """``log |dz/dtheta|`` per row; ``-inf``-safe outside the box."""
        both, lo_only, hi_only = self._kinds
        out = np.zeros(theta.shape[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            if both.any():
                a, b = self.lower[both], self.upper[both]
                x = theta[:, both]
                out += np.sum(np.log(b - a) - np.log(x - a) - np.log(b - x), axis=1)
            if lo_only.any():
                out -= np.sum(np.log(theta[:, lo_only] - self.lower[lo_only]), axis=1)
            if hi_only.any():
                out -= np.sum(np.log(self.upper[hi_only] - theta[:, hi_only]), axis=1)
        return out

    def inside(self, theta):
        return np.all((theta > self.lower) & (theta < self.upper), axis=1)


def _gauss_logpdf(z, mean, chol):
    d = z.shape[1]
    sol = np.linalg.solve(chol, (z - mean).T)
    return -0.5 * np.sum(sol**2, axis=0) - np.sum(np.log(np.diag(chol))) - 0.5 * d * math.log(2 * math.pi)


@dataclass
class MixtureProposal:
    """Independent proposal: Gaussian mixture in the transformed space."""

    log_mix: np.ndarray
    means: np.ndarray
    chols: np.ndarray
    transform: BoxTransform

    @property
    def n_components(self):
        return self.means.shape[0]

    def component_logpdf_z(self, z):
        return np.stack([lm + _gauss_logpdf(z, m, c) for lm, m, c in zip(self.log_mix, self.means, self.chols)], axis=1)

    def logpdf_z(self, z):
        return logsumexp(self.component_logpdf_z(z), axis=1)

    def logpdf(self, theta):
        theta = np.atleast_2d(theta)
        inside = self.transform.inside(theta)
        out = np.full(theta.shape[0], -np.inf)
        if inside.any():
            th = theta[inside]
            out[inside] = self.logpdf_z(self.transform.forward(th)) + self.transform.log_jacobian(th)
        return out

    def sample_z(self, rng, n):
        comp = rng.choice(self.n_components, size=n, p=np.exp(self.log_mix - logsumexp(self.log_mix)))
        eps = rng.standard_normal((n, self.means.shape[1]))
        return self.means[comp] + np.einsum("nij,nj->ni", self.chols[comp], eps)

    def sample(self, rng, n):
        return self.transform.inverse(self.sample_z(rng, n))


def _weighted_moments(z, w):
    mean = w @ z
    c = z - mean
    cov = (w[:, None] * c).T @ c
    return mean, cov


def _safe_chol(cov):
    d = cov.shape[0]
    cov = 0.5 * (cov + cov.T) + RIDGE * np.eye(d)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ProposalFitError("singular weighted covariance after regularization") from exc


def _kmeanspp(z, w, k, rng):
    n = z.shape[0]
    centers = [z[rng.choice(n, p=w)]]
    for _ in range(1, k):
        d2 = np.min(((z[:, None, :] - np.asarray(centers)[None, :, :]) ** 2).sum(-1), axis=1)
        p = w * d2
        if p.sum() <= 0:
            break
        centers.append(z[rng.choice(n, p=p / p.sum())])
    return np.asarray(centers)


def _single(z, w, transform):
    mean, cov = _weighted_moments(z, w)
    return MixtureProposal(np.zeros(1), mean[None, :], _safe_chol(cov)[None], transform)


def _inflate(mix: MixtureProposal, inflation: float) -> MixtureProposal:
    if inflation == 1.0:
        return mix
    return MixtureProposal(mix.log_mix, mix.means, mix.chols * math.sqrt(inflation), mix.transform)


def fit_mixture_proposal(theta, weights, k, rng, lower=(), upper=(), inflation=1.0) -> MixtureProposal:
    """Weighted EM fit of a ``k``-component Gaussian mixture.

    ``theta`` is ``(N, d)``, ``weights`` normalized. Initialization is
    k-means++ on the weighted particles; EM runs a fixed 20 iterations.
    A component whose weight collapses, or a non-finite likelihood, makes
    the fit fall back to one moment-matched Gaussian.

    ``inflation`` multiplies every fitted covariance. Used as an independent
    MH proposal, a mixture exactly as wide as a slightly too narrow cloud
    never repopulates the tails; a factor above 1 keeps the
    target-to-proposal ratio bounded.
    """
    if not inflation >= 1.0:
        raise ValueError("inflation must be >= 1")
    return _inflate(_fit(theta, weights, k, rng, lower, upper), inflation)


def _fit(theta, weights, k, rng, lower, upper) -> MixtureProposal:
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    w = np.asarray(weights, dtype=float)
    n, d = theta.shape
    if n <= d:
        raise ValueError("need more particles than parameters")
    if abs(w.sum() - 1.0) > 1e-8 or np.any(w < 0):
        raise ValueError("weights must be normalized")
    transform = BoxTransform.from_bounds(lower, upper, d)
    z = transform.forward(theta)
    if not np.all(np.isfinite(z[w > 0])):
        raise ValueError("particle with positive weight outside the parameter box")
    z = np.where(np.isfinite(z), z, 0.0)
    n_unique = np.unique(theta[w > 0], axis=0).shape[0]
    k = int(min(k, n_unique))
    if k <= 1:
        return _single(z, w, transform)

    means = _kmeanspp(z, w, k, rng)
    k = means.shape[0]
    _, pooled = _weighted_moments(z, w)
    covs = np.repeat(pooled[None], k, axis=0) / k
    log_mix = np.full(k, -math.log(k))
    try:
        for _ in range(EM_ITERATIONS):
            mix = MixtureProposal(log_mix, means, np.stack([_safe_chol(c) for c in covs]), transform)
            comp = mix.component_logpdf_z(z)
            resp = np.exp(comp - logsumexp(comp, axis=1, keepdims=True)) * w[:, None]
            nk = resp.sum(axis=0)
            if np.any(nk < MIN_COMPONENT_WEIGHT) or not np.all(np.isfinite(resp)):
                return _single(z, w, transform)
            means = (resp.T @ z) / nk[:, None]
            covs = np.stack([((resp[:, j, None] * (z - means[j])).T @ (z - means[j])) / nk[j] for j in range(k)])
            log_mix = np.log(nk)
        return MixtureProposal(log_mix, means, np.stack([_safe_chol(c) for c in covs]), transform)
    except ProposalFitError:
        return _single(z, w, transform)
