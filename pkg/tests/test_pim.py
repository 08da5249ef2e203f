import math

import numpy as np
import pytest
from scipy import integrate

from asglimits.core import DirectionY, PimParams, enumerate_configs
from asglimits.errors import BoundaryPoint
from asglimits.pim import (
    dirichlet_log_density,
    pim_asymptotic_log_p,
    pim_density,
    pim_log_p,
    pim_pi,
)
from oracles import pim_p_quadrature


def test_uniform_case(uniform_pim):
    assert pim_log_p((3, 2), uniform_pim) == pytest.approx(math.log(1 / 6), abs=1e-13)
    for m in range(1, 30):
        for n in enumerate_configs(2, m):
            assert math.exp(pim_log_p(n, uniform_pim)) == pytest.approx(1 / (m + 1), rel=1e-12)


def test_single_sample_is_mean():
    pp = PimParams(1.0, (0.6, 0.4))
    assert pim_log_p((1, 0), pp) == pytest.approx(math.log(0.6), abs=1e-14)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_level_sums(d):
    pp = PimParams(1.3, tuple(np.arange(1, d + 1) / np.arange(1, d + 1).sum()))
    for m in (1, 2, 5):
        total = sum(math.exp(pim_log_p(n, pp)) for n in enumerate_configs(d, m))
        assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("d", [2, 3, 4])
def test_against_quadrature(theta, d):
    rng = np.random.default_rng(int(10 * theta) + d)
    Q = rng.dirichlet(np.ones(d) * 2)
    pp = PimParams(theta, tuple(Q))
    for m in (1, 4, 8):
        for n in enumerate_configs(d, m)[:: max(1, len(enumerate_configs(d, m)) // 6)]:
            exact = pim_p_quadrature(n, theta, Q)
            assert math.exp(pim_log_p(n, pp)) == pytest.approx(exact, rel=1e-10)


def test_pi_examples(uniform_pim):
    assert pim_pi(0, (1, 1), uniform_pim) == 0.5
    assert pim_pi(0, (2, 0), uniform_pim) == 0.75
    pp = PimParams(1.0, (0.6, 0.4))
    assert pim_pi(0, (0, 0), pp) == pytest.approx(0.6)


def test_pi_consistent_with_p():
    pp = PimParams(1.7, (0.2, 0.3, 0.5))
    for n in enumerate_configs(3, 4):
        s = 0.0
        for i in range(3):
            up = list(n)
            up[i] += 1
            via_p = (n[i] + 1) / 5 * math.exp(pim_log_p(up, pp) - pim_log_p(n, pp))
            assert pim_pi(i, n, pp) == pytest.approx(via_p, rel=1e-10)
            s += pim_pi(i, n, pp)
        assert s == pytest.approx(1.0, abs=1e-15)


def test_dirichlet_density_values():
    assert dirichlet_log_density([0.3, 0.7], [1, 1]) == pytest.approx(0.0, abs=1e-14)
    assert dirichlet_log_density([0.5, 0.5], [2, 2]) == pytest.approx(math.log(1.5))
    assert dirichlet_log_density([0.2, 0.3, 0.5], [1, 1, 1]) == pytest.approx(math.log(2))
    with pytest.raises(BoundaryPoint):
        dirichlet_log_density([0.0, 1.0], [0.5, 2.0])
    assert dirichlet_log_density([0.0, 1.0], [2.0, 1.5]) == -math.inf


@pytest.mark.parametrize("a", [(1.5, 2.5), (3.0, 0.7)])
def test_dirichlet_density_integrates_d2(a):
    val, _ = integrate.quad(lambda x: math.exp(dirichlet_log_density([x, 1 - x], a)), 0, 1)
    assert val == pytest.approx(1.0, abs=1e-7)


def test_dirichlet_density_integrates_d3():
    a = (1.5, 2.0, 2.5)
    f = lambda v, u: math.exp(dirichlet_log_density([u, v, 1 - u - v], a))
    val, _ = integrate.dblquad(f, 0, 1, 0, lambda u: 1 - u)
    assert val == pytest.approx(1.0, abs=1e-7)


def test_density_callable_batched(uniform_pim):
    f = pim_density(PimParams(4.0, (0.5, 0.5)))
    assert f(np.array([0.5, 0.5])) == pytest.approx(1.5)
    assert np.allclose(f(np.array([[0.5, 0.5], [0.25, 0.75]])), [1.5, 6 * 0.25 * 0.75])


def test_asymptotic_formula(uniform_pim):
    y = DirectionY((0.5, 0.5))
    assert pim_asymptotic_log_p(10, y, uniform_pim) == pytest.approx(-math.log(10))
    y2 = DirectionY((1, 1))
    assert pim_asymptotic_log_p(1, y2, uniform_pim) == pytest.approx(-math.log(2))


def test_asymptotic_ratio_three_types():
    pp = PimParams(3.0, (1 / 3, 1 / 3, 1 / 3))
    y = DirectionY((1 / 3, 1 / 3, 1 / 3))
    ratio = math.exp(pim_log_p(y.lattice(3000), pp) - pim_asymptotic_log_p(3000, y, pp))
    assert 0.99 <= ratio <= 1.01


@pytest.mark.parametrize("seed", range(4))
def test_asymptotic_ratio_improves(seed):
    rng = np.random.default_rng(seed)
    d = 2 + seed % 2
    pp = PimParams(float(rng.choice([0.5, 1, 2])), tuple(rng.dirichlet(np.ones(d))))
    y = DirectionY(tuple(rng.uniform(0.2, 2.0, d)))
    err = [abs(math.exp(pim_log_p(y.lattice(n), pp) - pim_asymptotic_log_p(n, y, pp)) - 1) for n in (250, 4000)]
    assert err[1] < err[0]


def test_large_sample_is_finite(uniform_pim):
    assert math.isfinite(pim_log_p((500_000, 500_000), uniform_pim))
