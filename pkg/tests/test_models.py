import math

import numpy as np
import pytest

from hscore.models import (
    MODEL_IDS,
    ParamVector,
    get_model,
    inv_chi2_logpdf,
    kangaroo_spec,
    levy_sv_m1_spec,
    levy_sv_m2_spec,
    levy_sv_transition,
    lgssm_spec,
    nb_logpmf,
    normal_m1_spec,
    normal_m2_spec,
    simulate_dataset,
)
from hscore.models.lgssm import stationary_variance


def fd_derivs(f, y, h=1e-4):
    f0, fp, fm = f(y), f(y + h), f(y - h)
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / h**2


# Normal models


def test_normal_m1_examples():
    m = normal_m1_spec(10.0)
    d = m.likelihood_y_derivs([0.0], [0.0])
    assert d.grad_log[0] == 0.0 and d.lap_log == -1.0
    assert m.prior_logpdf(np.zeros((1, 1)))[0] == pytest.approx(-0.5 * math.log(20 * math.pi))
    assert m.first_proper_index == 0
    assert normal_m1_spec(math.inf).first_proper_index == 1


def test_normal_m2_examples():
    m = normal_m2_spec()
    d = m.likelihood_y_derivs([0.0], [1.0])
    assert d.grad_log[0] == 0.0 and d.lap_log == -1.0
    nu, s2, x = 0.1, 1.0, 1.0
    hand = (nu / 2) ** (nu / 2) / math.gamma(nu / 2) * math.sqrt(s2) ** nu * x ** (-(nu / 2 + 1)) * math.exp(-nu * s2 / (2 * x))
    assert float(inv_chi2_logpdf(x, nu, s2)) == pytest.approx(math.log(hand), rel=1e-12)
    assert m.prior_logpdf(np.array([[-1.0]]))[0] == -math.inf


def test_inv_chi2_normalized():
    from scipy.integrate import quad

    val, _ = quad(lambda x: math.exp(inv_chi2_logpdf(x, 3.0, 2.0)), 0, math.inf)
    assert val == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("model", [normal_m1_spec(), normal_m2_spec()])
def test_iid_derivatives_match_finite_differences(model):
    rng = np.random.default_rng(3)
    for _ in range(100):
        theta = np.array([[rng.uniform(0.3, 3.0)]])
        y = rng.normal(0, 2)
        d1, d2 = model.loglik_derivs(np.array([y]), theta)
        g, lap = fd_derivs(lambda v: model.loglik(np.array([[v]]), theta)[0, 0], y)
        assert g == pytest.approx(d1[0, 0], rel=1e-5, abs=1e-8)
        assert lap == pytest.approx(d2[0, 0], rel=1e-5)


def test_normal_m1_sample_mean_clt():
    y = simulate_dataset(normal_m1_spec(), ParamVector([1.0], ("theta1",)), 100_000, np.random.default_rng(5))
    assert y.shape == (100_000, 1)
    assert abs(y.mean() - 1.0) < 3 / math.sqrt(y.size)


def test_simulate_empty_and_invalid():
    assert simulate_dataset(normal_m1_spec(), [0.0], 0, np.random.default_rng(0)).shape == (0, 1)
    assert simulate_dataset(lgssm_spec(), [0.5], 0, np.random.default_rng(0)).shape == (0, 1)
    with pytest.raises(ValueError):
        simulate_dataset(normal_m2_spec(), [-1.0], 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        simulate_dataset(lgssm_spec(), [0.5, 0.1], 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ParamVector([1.0, 2.0], ("a",))


def test_get_model_ids():
    for mid in MODEL_IDS:
        assert get_model(mid).name == mid
    with pytest.raises(KeyError):
        get_model("nope")


# linear Gaussian state-space model


def test_lgssm_examples():
    spec = lgssm_spec(sigma_x=1.0, sigma_y=2.0)
    th = np.array([[0.5]])
    x = np.array([[[0.3], [1.0]]])
    d1, d2 = spec.meas_derivs([0.3], x, th)
    assert d1[0, 0, 0] == 0.0
    assert np.all(d2 == -0.25)
    assert stationary_variance(0.5, 1.0) == pytest.approx(4.0 / 3.0)


def test_lgssm_prior_and_validation():
    spec = lgssm_spec()
    lp = spec.prior_logpdf(np.array([[0.0], [1.2]]))
    assert lp[0] == pytest.approx(-math.log(2.0)) and lp[1] == -math.inf
    with pytest.raises(ValueError):
        lgssm_spec(sigma_y=0.0)


# Levy SV


def test_levy_no_jumps():
    class NoJumps:
        def poisson(self, lam):
            return np.zeros(np.shape(lam), dtype=np.int64)

        def standard_exponential(self, n):
            return np.empty(n)

        def random(self, n):
            return np.empty(n)

        def standard_normal(self, shape):
            return np.empty(shape)

    lam, z0 = 0.3, 2.0
    v, z = levy_sv_transition(z0, lam, 0.5, 0.0625, NoJumps())
    assert z == pytest.approx(math.exp(-lam) * z0, rel=1e-14)
    assert v == pytest.approx(z0 * (1 - math.exp(-lam)) / lam, rel=1e-14)


def test_levy_stationary_moments():
    lam, xi, om = 0.01, 0.5, 0.0625
    rng = np.random.default_rng(11)
    # 200 independent chains started in stationarity, 500 steps each
    z = rng.gamma(xi**2 / om, om / xi, size=200)
    zs, vs = [], []
    for _ in range(500):
        v, z = levy_sv_transition(z, lam, xi, om, rng)
        zs.append(z)
        vs.append(v)
    zs = np.array(zs)
    assert np.all(np.array(vs) >= 0)
    # chains are independent so the per-chain time average has iid spread
    chain_means = zs.mean(axis=0)
    se = chain_means.std(ddof=1) / math.sqrt(chain_means.size)
    assert abs(chain_means.mean() - xi) < 3 * se
    assert zs.var() == pytest.approx(om, rel=0.15)


def test_levy_clt_branch_moments():
    # large jump counts use the Gaussian sum; compare E[Z] and E[V] with the
    # exact conditional means
    lam, xi, om = 0.5, 10.0, 0.05
    rng = np.random.default_rng(2)
    z0 = np.full(20_000, 3.0)
    v, z = levy_sv_transition(z0, lam, xi, om, rng)
    rate = lam * xi**2 / om
    assert rate > 500
    mean_e = om / xi
    ez = math.exp(-lam) * 3.0 + rate * mean_e * (1 - math.exp(-lam)) / lam
    assert z.mean() == pytest.approx(ez, rel=3e-3)
    ev = ((1 - math.exp(-lam)) * 3.0 + rate * mean_e - (ez - math.exp(-lam) * 3.0)) / lam
    assert v.mean() == pytest.approx(ev, rel=3e-3)


def test_levy_transition_rejects_nonpositive():
    with pytest.raises(ValueError):
        levy_sv_transition(1.0, 0.0, 0.5, 0.1, np.random.default_rng(0))


@pytest.mark.parametrize("spec", [levy_sv_m1_spec(), levy_sv_m2_spec()])
def test_sv_measurement_derivatives(spec):
    rng = np.random.default_rng(8)
    theta = spec.prior_sample(rng, 100)
    for i in range(100):
        th = theta[i : i + 1]
        # latent variances away from 0 so the difference quotient is stable
        x = rng.uniform(0.05, 5.0, size=(1, 1, spec.dim_x))
        sum_v = x[0, 0, 0] if spec.dim_x == 2 else x[0, 0, 0] + x[0, 0, 1]
        y = th[0, -2] + th[0, -1] * sum_v + math.sqrt(sum_v) * rng.normal()
        d1, d2 = spec.meas_derivs([y], x, th)
        g, lap = fd_derivs(lambda u: spec.meas_logpdf([u], x, th)[0, 0], y)
        assert g == pytest.approx(d1[0, 0, 0], rel=1e-5, abs=1e-7)
        assert lap == pytest.approx(d2[0, 0, 0], rel=1e-5)


def test_sv_m2_prior_orders_rates():
    spec = levy_sv_m2_spec()
    th = spec.prior_sample(np.random.default_rng(0), 1000)
    assert np.all(th[:, 1] > th[:, 0])
    bad = th[:1].copy()
    bad[0, 1] = bad[0, 0] - 0.1
    assert spec.prior_logpdf(bad)[0] == -math.inf


def test_sv_reference_dataset_shape():
    y = simulate_dataset(levy_sv_m1_spec(), [0.01, 0.5, 0.0625, 0.0, 0.0], 1000, np.random.default_rng(0))
    assert y.shape == (1000, 1) and np.all(np.isfinite(y))


# kangaroo


def test_nb_moments_by_enumeration():
    k = np.arange(0, 400)
    m, v = 4.0, 8.0
    p = np.exp(nb_logpmf(k, m, v))
    assert p.sum() == pytest.approx(1.0, abs=1e-10)
    assert (k * p).sum() == pytest.approx(m, rel=1e-9)
    assert ((k - m) ** 2 * p).sum() == pytest.approx(v, rel=1e-9)


def test_nb_sampling_moments():
    # Gamma-Poisson draws from the model's measurement sampler
    spec = kangaroo_spec("M3")
    tau, x = 0.25, 4.0
    rng = np.random.default_rng(1)
    draws = spec.meas_sample(np.full((1, 500_000, 1), x), np.array([[1.0, tau]]), rng)[0]
    assert draws.mean() == pytest.approx(x, rel=0.01)
    assert draws.var() == pytest.approx(x + tau * x**2, rel=0.02)


def test_nb_tail_mass_small():
    # pmf sums to one up to truncation for an adaptively chosen K
    for m, tau in [(5.0, 0.1), (300.0, 0.05), (1e4, 0.5)]:
        v = m + tau * m * m
        K = int(m + 40 * math.sqrt(v)) + 50
        total = np.exp(nb_logpmf(np.arange(K + 1), m, v)).sum()
        assert abs(total - 1.0) < 1e-8


def test_kangaroo_meas_matches_nb():
    spec = kangaroo_spec("M1")
    th = np.array([[0.5, 0.2, 0.01, 0.3]])
    x = np.array([[[50.0], [120.0]]])
    got = spec.meas_logpdf([40, 60], x, th)
    want = nb_logpmf(40, x[..., 0], x[..., 0] + 0.2 * x[..., 0] ** 2) + nb_logpmf(60, x[..., 0], x[..., 0] + 0.2 * x[..., 0] ** 2)
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_kangaroo_small_sigma_constant_path():
    spec = kangaroo_spec("M3", delta_t=0.001)
    x = np.full((1, 4, 1), 300.0)
    th = np.array([[1e-6, 0.1]])
    out = spec.transition_sample(x, th, 0.5, np.random.default_rng(0))
    assert np.all(np.abs(out - x) < 0.01)


def test_kangaroo_m1_paths_positive_and_finite():
    spec = kangaroo_spec("M1", delta_t=0.01)
    rng = np.random.default_rng(4)
    th = spec.prior_sample(rng, 200)
    x = spec.init_sample(th, 5, rng)
    for _ in range(100):
        x = spec.transition_sample(x, th, 1.0, rng)
        assert np.all(x > 0) and np.all(np.isfinite(x))


def test_kangaroo_gbm_step_moments():
    # exact log-step: log X_t - log X_0 ~ N(r dt, sigma^2 dt)
    spec = kangaroo_spec("M2")
    rng = np.random.default_rng(6)
    x = np.full((1, 200_000, 1), 100.0)
    out = spec.transition_sample(x, np.array([[0.4, 0.1, 0.3]]), 0.5, rng)
    d = np.log(out[0, :, 0] / 100.0)
    assert d.mean() == pytest.approx(0.15, abs=4 * 0.4 * math.sqrt(0.5 / d.size))
    assert d.var() == pytest.approx(0.08, rel=0.02)


def test_kangaroo_priors_and_errors():
    for variant, d in (("M1", 4), ("M2", 3), ("M3", 2)):
        spec = kangaroo_spec(variant)
        assert spec.dim_theta == d and spec.is_discrete
    wide = kangaroo_spec("M2", r_range=100.0)
    narrow = kangaroo_spec("M2")
    th = np.array([[1.0, 1.0, 0.5]])
    assert narrow.prior_logpdf(th)[0] - wide.prior_logpdf(th)[0] == pytest.approx(math.log(10.0))
    with pytest.raises(ValueError):
        kangaroo_spec("M4")
    with pytest.raises(ValueError):
        kangaroo_spec("M1", delta_t=0.0)


def test_bundled_kangaroo_data():
    from hscore.datasets import kangaroo_data_path, read_dataset

    d = read_dataset(kangaroo_data_path())
    assert len(d) == 41 and d.y.shape == (41, 2)
    assert np.all(np.diff(d.t) > 0)
    assert np.all(d.y == np.round(d.y)) and np.all(d.y >= 0)
