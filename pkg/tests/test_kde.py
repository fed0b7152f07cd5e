import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hscore.kde import (
    KdeEstimate,
    KdeUnderflowError,
    kde_hscore_increment,
    kde_log_derivs,
    kde_logdensity_and_derivs,
)
from hscore.scoring import hscore_increment_from_posterior, hyvarinen_point


def raw_kde(draws, h, y):
    u = (y - draws) / h
    k = np.exp(-0.5 * u**2) / math.sqrt(2 * math.pi)
    p = k.mean() / h
    p1 = (-u * k).mean() / h**2
    p2 = ((u**2 - 1) * k).mean() / h**3
    return p, p1, p2


def test_one_kernel_is_standard_normal():
    for y in (-1.3, 0.0, 2.2):
        d = kde_logdensity_and_derivs(KdeEstimate([0.0], 1.0), y)
        assert d.log_density == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5 * y * y, rel=1e-14)
        assert d.grad_log[0] == pytest.approx(-y, abs=1e-14)
        assert d.lap_log == pytest.approx(-1.0, rel=1e-12)


@given(st.floats(-3, 3), st.floats(0.05, 2.0), st.integers(0, 2**32 - 1))
def test_symmetric_draws_zero_gradient_at_center(c, h, seed):
    half = np.random.default_rng(seed).normal(size=20)
    draws = np.concatenate([c + half, c - half])
    d = kde_logdensity_and_derivs(KdeEstimate(draws, h), c)
    assert abs(d.grad_log[0]) < 1e-9 / h


def test_gradient_of_large_sample_close_to_truth():
    draws = np.random.default_rng(0).normal(0.0, math.sqrt(2.0), 100_000)
    for y in (-1.0, 0.5, 1.5):
        d = kde_logdensity_and_derivs(KdeEstimate(draws, 0.5), y)
        # smoothed truth N(0, 2 + h^2); sampling sd of the estimate is ~0.007
        assert d.grad_log[0] == pytest.approx(-y / (2.0 + 0.25), abs=0.03)


def test_analytic_derivatives_match_finite_differences():
    rng = np.random.default_rng(1)
    draws = rng.normal(size=300)
    h = 0.4
    probes = rng.uniform(-2.5, 2.5, 100)
    step = 1e-5
    for y in probes:
        p, p1, p2 = raw_kde(draws, h, y)
        pp, _, _ = raw_kde(draws, h, y + step)
        pm, _, _ = raw_kde(draws, h, y - step)
        assert (pp - pm) / (2 * step) == pytest.approx(p1, rel=1e-6, abs=1e-9)
        # second difference carries O(1e-6) roundoff relative to p
        assert (pp - 2 * p + pm) / step**2 == pytest.approx(p2, rel=1e-6, abs=2e-5)
        log_p, d1, d2 = kde_log_derivs(draws, h, y)
        assert log_p == pytest.approx(math.log(p), rel=1e-12)
        assert d1 == pytest.approx(p1 / p, rel=1e-9)
        assert d2 == pytest.approx(p2 / p - (p1 / p) ** 2, rel=1e-9, abs=1e-12)


def test_log_space_far_from_draws():
    # naive densities underflow to 0 here, log-space stays finite
    d = kde_logdensity_and_derivs(KdeEstimate([0.0, 0.1], 0.05), 1.5)
    assert math.isfinite(d.log_density) and d.log_density < -300
    assert d.grad_log[0] == pytest.approx(-(1.5 - 0.1) / 0.05**2, rel=1e-6)
    with pytest.raises(KdeUnderflowError):
        kde_logdensity_and_derivs(KdeEstimate([0.0], 0.01), 5.0)


def test_estimate_validation():
    with pytest.raises(ValueError):
        KdeEstimate([], 0.1)
    with pytest.raises(ValueError):
        KdeEstimate([1.0], 0.0)


def test_increment_single_theta_is_plain_score():
    draws = np.random.default_rng(2).normal(size=(1, 500))
    inc = kde_hscore_increment(draws, [1.0], 0.3, 0.25)
    d = kde_logdensity_and_derivs(KdeEstimate(draws[0], 0.25), 0.3)
    assert inc.increment.value == pytest.approx(hyvarinen_point(d), rel=1e-12)
    assert inc.n_excluded == 0 and not inc.unreliable


def test_increment_matches_posterior_form_on_per_theta_derivs():
    rng = np.random.default_rng(3)
    draws = rng.normal(loc=rng.normal(size=(8, 1)), size=(8, 200))
    w = rng.dirichlet(np.ones(8))
    inc = kde_hscore_increment(draws, w, 0.1, 0.3)
    _, d1, d2 = kde_log_derivs(draws, 0.3, 0.1)
    assert inc.increment.value == pytest.approx(hscore_increment_from_posterior(d1, d2, w).value, rel=1e-12)
    ests = [KdeEstimate(r, 0.3) for r in draws]
    assert kde_hscore_increment(ests, w, 0.1, 0.3).increment.value == pytest.approx(inc.increment.value, rel=1e-12)


def test_increment_kernel_weight_rescaling_invariance():
    # duplicating every draw multiplies all kernel weights by 2
    rng = np.random.default_rng(4)
    draws = rng.normal(size=(5, 100))
    w = np.full(5, 0.2)
    a = kde_hscore_increment(draws, w, 0.4, 0.2).increment.value
    b = kde_hscore_increment(np.concatenate([draws, draws], axis=1), w, 0.4, 0.2).increment.value
    assert a == pytest.approx(b, rel=1e-12)


def test_underflow_exclusion_and_flag():
    draws = np.zeros((10, 5))
    draws[:2] = 100.0
    inc = kde_hscore_increment(draws, np.full(10, 0.1), 0.0, 0.1)
    assert inc.n_excluded == 2 and inc.unreliable
    ref = kde_hscore_increment(draws[2:], np.full(8, 1 / 8), 0.0, 0.1)
    assert inc.increment.value == pytest.approx(ref.increment.value, rel=1e-12)
    one = draws.copy()
    one[1] = 0.0
    assert not kde_hscore_increment(one, np.full(10, 0.1), 0.0, 0.1).unreliable
    with pytest.raises(KdeUnderflowError):
        kde_hscore_increment(np.full((2, 3), 100.0), [0.5, 0.5], 0.0, 0.1)
