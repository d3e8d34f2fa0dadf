import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import ndtr

from conformal_objects.population import (
    cost_table,
    population_cpc,
    population_cps,
    population_scores,
    standard_profile,
)
from conformal_objects.simulate import f_reg


def c0_by_quadrature(d):
    """E_Z int_0^inf |G_d(s) - G_|Z|(s)| ds by nested adaptive quadrature."""

    def G(delta, s):
        return ndtr(delta + s) - ndtr(delta - s)

    def inner(z):
        return integrate.quad(lambda s: abs(G(d, s) - G(z, s)), 0, 16, limit=200)[0]

    val, _ = integrate.quad(lambda z: 2 * stats.norm.pdf(z) * inner(z), 0, 8, limit=200)
    return val


def test_standard_profile_limits():
    assert standard_profile(0.0, 0.0)[()] == 0.0
    assert standard_profile(0.3, 50.0)[()] == pytest.approx(1.0)


@pytest.mark.parametrize("d", [0.0, 0.67, 1.5, 3.0])
def test_cost_table_against_quadrature(d):
    assert cost_table()(d) == pytest.approx(c0_by_quadrature(d), abs=2e-3)


def test_cost_table_is_not_monotone():
    table = cost_table()
    i = int(np.argmin(table.c0))
    assert 0.5 < table.u[i] < 0.8
    assert table.c0[0] > table.c0[i]


def test_mass_below_matches_monte_carlo():
    table = cost_table()
    z = np.random.default_rng(0).normal(size=200_000)
    c = table(z)
    for level in np.quantile(c, [0.1, 0.5, 0.9]):
        assert table.mass_below(level)[0] == pytest.approx(np.mean(c <= level), abs=5e-3)
    assert table.mass_below(10.0)[0] == pytest.approx(1.0)
    assert table.mass_below(-1.0)[0] == 0.0


def test_population_cpc_scales_with_sd():
    x = np.array([0.3])
    assert population_cpc("1", f_reg(x) + 0.05, x)[0] == pytest.approx(0.1 * cost_table()(0.5), rel=1e-12)
    # Setting 2 changes sd at the change point
    left = population_cpc("2", f_reg(-0.5) + 0.5, -0.5)
    right = population_cpc("2", f_reg(0.5) + 0.1, 0.5)
    assert left == pytest.approx(5 * right)


def test_population_scores_uniform():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, 5000)
    y = f_reg(x) + rng.normal(0, 0.1, 5000)
    s = population_scores("1", x, y)
    assert stats.kstest(s, "uniform").statistic < 0.03


def test_population_cps_monotone():
    z = np.linspace(0, 1, 50)
    s = population_cps("1", z, np.zeros(50))
    assert np.all(np.diff(s) >= 0)


def test_population_unsupported_setting():
    with pytest.raises(ValueError):
        population_cpc("3", 0.0, 0.0)
