import math

import numpy as np
import pytest
from scipy import stats

from hscore.oracle import (
    GaussianPredictive,
    conjugate_m1_predictive,
    conjugate_m2_predictive_logpdf_and_derivs,
    exact_log_evidence_m1,
    exact_prequential_scores_m1_m2,
    kalman_filter,
    kalman_loglik,
    kalman_predictive,
    lgssm_quadrature,
)
from hscore.scoring import fisher_divergence_gap_normal, kl_gap_normal
from hscore.experiments import normal_case_data, slope_estimate


def test_m1_predictive_examples():
    p = conjugate_m1_predictive([], 10.0)
    assert (p.mean, p.variance) == (0.0, 11.0)
    p = conjugate_m1_predictive([1.0], 10.0)
    assert p.mean == pytest.approx(10 / 11) and p.variance == pytest.approx(21 / 11)
    p = conjugate_m1_predictive([2.5], math.inf)
    assert p.mean == 2.5 and p.variance == 2.0
    with pytest.raises(ValueError):
        conjugate_m1_predictive([], math.inf)
    with pytest.raises(ValueError):
        GaussianPredictive(0.0, 0.0)


def test_m1_evidence_matches_multivariate_normal():
    # marginally y ~ N(0, I + s0 11^T)
    y = np.random.default_rng(0).normal(size=7)
    s0 = 10.0
    cov = np.eye(7) + s0
    want = stats.multivariate_normal(np.zeros(7), cov).logpdf(y)
    assert exact_log_evidence_m1(y, s0) == pytest.approx(want, rel=1e-12)


def test_m2_predictive_symmetry_and_t_law():
    d = conjugate_m2_predictive_logpdf_and_derivs([0.3, -1.2], 0.1, 1.0, 0.0)
    assert d.grad_log[0] == 0.0
    nu = 2.1
    s2 = (0.1 + 0.09 + 1.44) / nu
    for y in (-2.0, 0.5, 3.0):
        d = conjugate_m2_predictive_logpdf_and_derivs([0.3, -1.2], 0.1, 1.0, y)
        assert d.log_density == pytest.approx(stats.t(nu, scale=math.sqrt(s2)).logpdf(y), rel=1e-12)


def test_m2_predictive_by_sampling():
    # theta ~ posterior, y ~ N(0, theta); bin probabilities against the
    # integral of the closed-form density
    from scipy.integrate import quad

    rng = np.random.default_rng(1)
    prefix = np.array([0.4, -0.9, 1.3])
    nu = 0.1 + 3
    s2 = (0.1 + np.sum(prefix**2)) / nu
    theta = nu * s2 / rng.chisquare(nu, size=2_000_000)
    y = rng.normal(0.0, np.sqrt(theta))
    dens = lambda v: math.exp(conjugate_m2_predictive_logpdf_and_derivs(prefix, 0.1, 1.0, v).log_density)
    for probe in (-1.5, -0.5, 0.0, 0.7, 1.6):
        half = 0.1
        emp = np.mean(np.abs(y - probe) < half)
        exact, _ = quad(dens, probe - half, probe + half)
        assert emp == pytest.approx(exact, rel=0.01)


def test_m2_derivs_finite_differences():
    prefix = [0.2, 1.1, -0.4]
    f = lambda y: conjugate_m2_predictive_logpdf_and_derivs(prefix, 0.1, 1.0, y).log_density
    for y in np.linspace(-3, 3, 13):
        d = conjugate_m2_predictive_logpdf_and_derivs(prefix, 0.1, 1.0, y)
        h = 1e-4
        assert (f(y + h) - f(y - h)) / (2 * h) == pytest.approx(d.grad_log[0], rel=1e-5, abs=1e-8)
        assert (f(y + h) - 2 * f(y) + f(y - h)) / h**2 == pytest.approx(d.lap_log, rel=1e-5)


def test_flat_prior_first_increment():
    m1, _ = exact_prequential_scores_m1_m2([0.3, 1.0, -0.5], sigma0_sq=math.inf)
    assert m1.rows[0].flag == "improper"
    assert math.isfinite(m1.h_inc[0])
    assert np.isnan(m1.log_evidence_inc[0])
    assert np.all(np.isfinite(m1.h_inc[1:]))


def test_case1_exact_slope():
    y = normal_case_data(1, 1000, seed=0)
    m1, m2 = exact_prequential_scores_m1_m2(y)
    factor = m2.h_cum - m1.h_cum
    assert factor[-1] / 1000 == pytest.approx(fisher_divergence_gap_normal(1, 1), abs=0.1)


def test_case2_log_bf_slope():
    y = normal_case_data(2, 1000, seed=0)
    m1, m2 = exact_prequential_scores_m1_m2(y)
    log_bf = m1.log_evidence_cum - m2.log_evidence_cum
    assert slope_estimate(log_bf) == pytest.approx(kl_gap_normal(0, 5), abs=0.3)


def test_flat_prior_robustness_exact():
    # H traces rebased at t=4 stay within 1% of the trace's own scale while
    # the log-evidence drops by half the log of the prior-variance ratio
    y = normal_case_data(1, 200, seed=3)
    traces = {s: exact_prequential_scores_m1_m2(y, sigma0_sq=s)[0] for s in (10.0, 1e3, 1e6)}

    def rebased(tr):
        return tr.h_cum[4:] - tr.h_cum[3]

    base = rebased(traces[10.0])
    for s in (1e3, 1e6):
        assert np.max(np.abs(rebased(traces[s]) - base)) < 0.01 * np.max(np.abs(base))
    gap = traces[10.0].log_evidence_cum[-1] - traces[1e6].log_evidence_cum[-1]
    assert gap == pytest.approx(0.5 * math.log(1e5), rel=0.05)
    gap3 = traces[10.0].log_evidence_cum[-1] - traces[1e3].log_evidence_cum[-1]
    assert gap3 == pytest.approx(0.5 * math.log(1e2), rel=0.05)


def test_kalman_zero_state_noise():
    # sigma_x=0 and a known x1: predictive variance is sigma_y^2 throughout
    means, variances = kalman_filter(0.7, 0.0, 1.5, [1.0, -2.0, 0.3], x1_mean=2.0, x1_var=0.0)
    np.testing.assert_allclose(variances, 2.25)
    np.testing.assert_allclose(means, [2.0, 1.4, 0.98])


def test_kalman_hand_recursion():
    phi, y1 = 0.5, 0.8
    p1 = 1 / (1 - phi**2)
    s1 = p1 + 1
    m2 = phi * (p1 / s1) * y1
    p2 = phi**2 * (p1 - p1**2 / s1) + 1
    pred = kalman_predictive(phi, 1.0, 1.0, [y1])
    assert pred.mean == pytest.approx(m2, rel=1e-14)
    assert pred.variance == pytest.approx(p2 + 1, rel=1e-14)


def test_kalman_loglik_matches_joint_gaussian():
    phi, sx, sy = 0.6, 0.8, 1.3
    T = 6
    idx = np.arange(T)
    cov_x = sx**2 / (1 - phi**2) * phi ** np.abs(idx[:, None] - idx[None, :])
    cov = cov_x + sy**2 * np.eye(T)
    y = np.random.default_rng(2).normal(size=T)
    assert kalman_loglik(phi, sx, sy, y) == pytest.approx(stats.multivariate_normal(np.zeros(T), cov).logpdf(y), rel=1e-12)


def test_kalman_vs_particle_filter_moments():
    # bootstrap filter with 1e5 particles at fixed phi
    phi, T = 0.8, 5
    y = np.array([0.5, -0.3, 1.2, 0.8, -0.1])
    rng = np.random.default_rng(9)
    n = 100_000
    x = rng.normal(0, math.sqrt(1 / (1 - phi**2)), n)
    for t in range(T - 1):
        logw = -0.5 * (y[t] - x) ** 2
        w = np.exp(logw - logw.max())
        w /= w.sum()
        x = x[rng.choice(n, n, p=w)]
        x = phi * x + rng.normal(size=n)
    ynext = x + rng.normal(size=n)
    pred = kalman_predictive(phi, 1.0, 1.0, y[: T - 1])
    # multinomial resampling roughly doubles the iid standard error
    assert abs(ynext.mean() - pred.mean) < 3 * 2 * math.sqrt(pred.variance / n)
    assert ynext.var() == pytest.approx(pred.variance, rel=0.02)


def test_quadrature_matches_grid_posterior():
    y = np.random.default_rng(4).normal(size=20)
    q = lgssm_quadrature(y, n_grid=4000)
    grid = np.linspace(-0.9995, 0.9995, 2000)
    ll = kalman_loglik(grid, 1.0, 1.0, y)
    w = np.exp(ll - ll.max())
    w /= w.sum()
    assert q.post_mean[-1] == pytest.approx(w @ grid, abs=1e-3)
    assert len(q.trace) == 20
