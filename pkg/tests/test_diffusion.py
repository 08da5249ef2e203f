import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asglimits.core import ModelParams, PimParams, enumerate_configs
from asglimits.diffusion import (
    DensityEstimate,
    DiffusionConfig,
    StationaryEnsemble,
    _sqrt_block,
    diffusion_matrix,
    drift,
    estimate_density,
    estimate_k,
    estimate_log_p,
    estimate_pi,
    reduced_diffusion_matrix,
    stationary_sample,
)
from asglimits.errors import EmptyEnsemble, InvalidParams, TooCloseToBoundary
from asglimits.pim import pim_log_p, pim_pi

SMALL = dict(replicas=200, samples_per_replica=20, burn_in=5.0, thin=1.0, seed=11)


@pytest.fixture(scope="module")
def uniform_ensemble():
    return stationary_sample(PimParams(2.0, (0.5, 0.5)).model_params(), DiffusionConfig(**SMALL))


def within(est, se, target, k=3.0):
    return abs(est - target) <= k * se


# ---------------------------------------------------------------------------
# coefficients

def test_drift_examples(uniform_pim):
    np.testing.assert_allclose(drift([0.5, 0.5], uniform_pim.model_params()), [0.0, 0.0], atol=1e-15)
    params = ModelParams.create(1.3, [[0.7, 0.3], [0.4, 0.6]])
    np.testing.assert_allclose(drift([1.0, 0.0], params), 1.3 * 0.3 * np.array([-1.0, 1.0]), atol=1e-15)


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 5))
def test_drift_tangent(seed, d):
    rng = np.random.default_rng(seed)
    params = ModelParams.create(rng.uniform(0.1, 4), rng.dirichlet(np.ones(d), size=d), -rng.uniform(0, 2, d))
    x = rng.dirichlet(np.ones(d), size=5)
    assert np.all(np.abs(drift(x, params).sum(axis=-1)) < 1e-12)


def test_diffusion_matrix_examples():
    np.testing.assert_allclose(diffusion_matrix([0.5, 0.5]), [[0.25, -0.25], [-0.25, 0.25]])
    vertex = diffusion_matrix([1.0, 0.0, 0.0])
    assert vertex[0, 0] == 0.0 and np.all(vertex == 0.0)
    assert np.linalg.det(reduced_diffusion_matrix([0.2, 0.3, 0.5])) == pytest.approx(0.03, abs=1e-15)


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 6))
def test_diffusion_matrix_properties(seed, d):
    x = np.random.default_rng(seed).dirichlet(np.ones(d))
    s = diffusion_matrix(x)
    np.testing.assert_allclose(s, s.T)
    np.testing.assert_allclose(s.sum(axis=1), 0.0, atol=1e-15)
    assert np.linalg.eigvalsh(s).min() > -1e-14


@pytest.mark.parametrize("k", [1, 2, 3])
def test_square_root(k):
    rng = np.random.default_rng(k)
    x = rng.dirichlet(np.ones(k + 1), size=20)
    u = x[:, :-1]
    r = _sqrt_block(u)
    for g in range(20):
        np.testing.assert_allclose(r[g] @ r[g], reduced_diffusion_matrix(x[g]), atol=1e-13)
        np.testing.assert_allclose(r[g], r[g].T, atol=1e-15)


# ---------------------------------------------------------------------------
# configuration

def test_config_validation():
    with pytest.raises(InvalidParams):
        DiffusionConfig(dt=2.0, thin=1.0)
    with pytest.raises(InvalidParams):
        DiffusionConfig(dt=0.5, thin=0.1)
    with pytest.raises(InvalidParams):
        DiffusionConfig(scheme="milstein")
    with pytest.raises(InvalidParams):
        DiffusionConfig(workers=0)
    cfg = DiffusionConfig(dt=1e-3, thin=0.5, burn_in=2.0)
    assert cfg.thin_steps == 500 and cfg.burn_steps == 2000


# ---------------------------------------------------------------------------
# ensembles

def test_ensemble_shape_and_simplex(uniform_ensemble):
    ens = uniform_ensemble
    assert ens.samples.shape == (200, 20, 2)
    assert ens.n_samples == 4000
    np.testing.assert_allclose(ens.samples.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(ens.samples >= 0)
    assert ens.times[0] == pytest.approx(6.0)


def test_uniform_moments(uniform_ensemble):
    m1, s1 = estimate_k((1, 0), uniform_ensemble)
    m2, s2 = estimate_k((2, 0), uniform_ensemble)
    m11, s11 = estimate_k((1, 1), uniform_ensemble)
    assert within(m1, s1, 0.5)
    assert within(m2, s2, 1 / 3)
    assert within(m11, s11, 1 / 6)
    assert estimate_k((0, 0), uniform_ensemble) == (1.0, 0.0)


def test_uniform_log_p_all_small_states(uniform_ensemble):
    pp = PimParams(2.0, (0.5, 0.5))
    misses = 0
    for m in range(1, 7):
        for n in enumerate_configs(2, m):
            lp, rel = estimate_log_p(n, uniform_ensemble)
            misses += not within(math.exp(lp), rel * math.exp(lp), math.exp(pim_log_p(n, pp)))
    assert misses == 0
    lp, _ = estimate_log_p((3, 2), uniform_ensemble)
    assert lp == pytest.approx(math.log(1 / 6), abs=0.1)


def test_size_one_normalisation(asym_two_type):
    ens = stationary_sample(asym_two_type, DiffusionConfig(**SMALL))
    total = math.exp(estimate_log_p((1, 0), ens)[0]) + math.exp(estimate_log_p((0, 1), ens)[0])
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("theta", [1.0, 2.0])
def test_pim_three_type_moments(theta):
    Q = np.array([0.2, 0.3, 0.5])
    pp = PimParams(theta, tuple(Q))
    ens = stationary_sample(pp.model_params(), DiffusionConfig(**SMALL))
    a = theta * Q
    A = a.sum()
    for i in range(3):
        e = [0, 0, 0]
        e[i] = 1
        est, se = estimate_k(e, ens)
        assert within(est, se, Q[i])
        e[i] = 2
        est, se = estimate_k(e, ens)
        assert within(est, se, a[i] * (a[i] + 1) / (A * (A + 1)))


def test_pim_mean_asymmetric():
    pp = PimParams(1.0, (0.6, 0.4))
    ens = stationary_sample(pp.model_params(), DiffusionConfig(**SMALL))
    est, se = estimate_k((1, 0), ens)
    assert within(est, se, 0.6)


def test_dt_halving_guard(uniform_ensemble):
    params = PimParams(2.0, (0.5, 0.5)).model_params()
    fine = stationary_sample(params, DiffusionConfig(dt=5e-4, **SMALL))
    for n in [(1, 0), (2, 0), (1, 1)]:
        a, sa = estimate_k(n, uniform_ensemble)
        b, sb = estimate_k(n, fine)
        assert abs(a - b) < 3 * math.hypot(sa, sb)


def test_euler_scheme_runs(uniform_pim):
    cfg = DiffusionConfig(scheme="euler", replicas=20, samples_per_replica=5, burn_in=1.0)
    ens = stationary_sample(uniform_pim.model_params(), cfg)
    np.testing.assert_allclose(ens.samples.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(ens.samples >= cfg.eps_b * 0.5)


def test_invariant_checks_do_not_fire(three_type):
    cfg = DiffusionConfig(replicas=5, samples_per_replica=3, burn_in=0.5, check_invariants=True)
    stationary_sample(three_type, cfg)


def test_selection_shifts_mean(selected_pim):
    ens = stationary_sample(selected_pim, DiffusionConfig(**SMALL))
    est, se = estimate_k((1, 0), ens)
    assert est + 3 * se < 0.5


def test_determinism_and_worker_invariance(three_type):
    base = dict(replicas=10, samples_per_replica=4, burn_in=0.5, block_size=3, seed=5)
    a = stationary_sample(three_type, DiffusionConfig(workers=1, **base))
    b = stationary_sample(three_type, DiffusionConfig(workers=1, **base))
    c = stationary_sample(three_type, DiffusionConfig(workers=3, chunk_steps=77, **base))
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.samples, c.samples)
    d = stationary_sample(three_type, DiffusionConfig(workers=1, **{**base, "seed": 6}))
    assert not np.array_equal(a.samples, d.samples)


# ---------------------------------------------------------------------------
# estimators

def test_pi_estimate(uniform_ensemble, uniform_pim):
    est, se = estimate_pi(0, (1, 1), uniform_ensemble)
    assert within(est, se, pim_pi(0, (1, 1), uniform_pim))
    est, se = estimate_pi(0, (0, 0), uniform_ensemble)
    assert within(est, se, 0.5)


def test_empty_ensemble():
    ens = StationaryEnsemble(np.empty((0, 1, 2)), np.empty(0), np.empty(1), DiffusionConfig(), "x")
    with pytest.raises(EmptyEnsemble):
        estimate_k((1, 0), ens)
    with pytest.raises(EmptyEnsemble):
        estimate_pi(0, (1, 0), ens)


# ---------------------------------------------------------------------------
# density estimation

def test_kde_uniform():
    rng = np.random.default_rng(0)
    samples = rng.dirichlet([1.0, 1.0], size=100_000)
    kde = DensityEstimate(samples)
    for x in (0.2, 0.35, 0.5, 0.8):
        assert kde(np.array([x, 1 - x])) == pytest.approx(1.0, abs=0.05)


def test_kde_beta22():
    rng = np.random.default_rng(1)
    samples = rng.dirichlet([2.0, 2.0], size=100_000)
    assert DensityEstimate(samples)(np.array([0.5, 0.5])) == pytest.approx(1.5, abs=0.08)


@pytest.mark.parametrize("alpha", [(1.0, 1.0), (2.0, 3.0, 4.0)])
def test_kde_integrates_to_one(alpha):
    rng = np.random.default_rng(2)
    kde = DensityEstimate(rng.dirichlet(alpha, size=10_000))
    h = 0.01 if len(alpha) == 2 else 0.02
    if len(alpha) == 2:
        u = np.arange(h / 2, 1, h)
        pts = np.stack([u, 1 - u], axis=1)
        area = h
    else:
        g = np.arange(h / 2, 1, h)
        U, V = np.meshgrid(g, g, indexing="ij")
        keep = U + V < 1
        pts = np.stack([U[keep], V[keep], 1 - U[keep] - V[keep]], axis=1)
        area = h * h
    assert kde(pts).sum() * area == pytest.approx(1.0, abs=0.02)


def test_kde_from_ensemble(uniform_ensemble):
    est = estimate_density(uniform_ensemble, [0.5, 0.5])
    assert est == pytest.approx(1.0, abs=0.15)


def test_kde_boundary_guard(uniform_ensemble):
    with pytest.raises(TooCloseToBoundary):
        estimate_density(uniform_ensemble, [0.001, 0.999])
