import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logbn.domain import integrate
from logbn.errors import InvalidFieldError, NoProjectionError, UnsupportedDimensionError
from logbn.functional import (
    Params,
    energy,
    fiber_coefficients,
    fiber_energy,
    fiber_roots,
    fiber_slope,
    gradient,
    nehari_g,
    nehari_project,
    positive_part,
)

from conftest import smooth_field

PAIRS = [(0.0, 1.0), (5.0, -1.0), (-3.0, 2.0)]


def directional_error(grid, p, u, v, step=1e-5):
    plus = energy(grid, p, u + step * v).total
    minus = energy(grid, p, u - step * v).total
    fd = (plus - minus) / (2 * step)
    exact = integrate(grid, gradient(grid, p, u) * v)
    return abs(fd - exact) / max(abs(exact), 1e-300)


def random_pair(grid, rng):
    u = smooth_field(grid, rng) + 0.05 * rng.normal(size=grid.n)
    v = smooth_field(grid, rng, amplitude=(-1.0, 1.0))
    return u, v


@pytest.mark.parametrize("lam, mu", PAIRS)
def test_gradient_matches_central_difference_n3(cube3, lam, mu):
    rng = np.random.default_rng(3)
    p = Params(lam, mu, 3)
    errs = [directional_error(cube3, p, *random_pair(cube3, rng)) for _ in range(5)]
    assert max(errs) <= 1e-4


@pytest.mark.parametrize("lam, mu", PAIRS)
def test_gradient_matches_central_difference_n4(cube4, lam, mu):
    rng = np.random.default_rng(4)
    p = Params(lam, mu, 4)
    errs = [directional_error(cube4, p, *random_pair(cube4, rng)) for _ in range(5)]
    assert max(errs) <= 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(-10, 10), mu=st.floats(-3, 3))
def test_nehari_identity(cube3, seed, lam, mu):
    u = np.random.default_rng(seed).normal(size=cube3.n)
    p = Params(lam, mu, 3)
    g = nehari_g(cube3, p, u)
    via_grad = integrate(cube3, gradient(cube3, p, u) * u)
    assert abs(g - via_grad) <= 1e-8 * max(abs(g), abs(via_grad), 1e-300)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(-10, 10), mu=st.floats(-3, 3))
def test_energy_parts_reconstruct_total(cube3, seed, lam, mu):
    u = np.random.default_rng(seed).normal(size=cube3.n)
    e = energy(cube3, Params(lam, mu, 3), u)
    assert e.total == pytest.approx(e.dirichlet - e.critical - e.quadratic - e.logarithmic, rel=1e-12, abs=1e-12)
    assert e.dirichlet >= 0 and e.critical >= 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.05, 20.0))
def test_fiber_energy_matches_direct_evaluation(cube3, seed, t):
    u = np.random.default_rng(seed).normal(size=cube3.n)
    p = Params(1.5, -0.7, 3)
    k = fiber_coefficients(cube3, u)
    assert float(fiber_energy(p, k, t)) == pytest.approx(energy(cube3, p, t * u).total, rel=1e-9, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.05, 20.0))
def test_fiber_slope_is_scaled_g(cube3, seed, t):
    u = np.random.default_rng(seed).normal(size=cube3.n)
    p = Params(-2.0, 0.8, 3)
    k = fiber_coefficients(cube3, u)
    assert float(fiber_slope(p, k, t)) * t * t == pytest.approx(nehari_g(cube3, p, t * u), rel=1e-9, abs=1e-10)


def test_negative_part_only_enters_dirichlet(cube3):
    u = -smooth_field(cube3, np.random.default_rng(0))
    e = energy(cube3, Params(3.0, 1.0, 3), u)
    assert e.critical == 0 and e.quadratic == 0 and e.logarithmic == 0
    assert e.total == pytest.approx(e.dirichlet)
    assert np.all(gradient(cube3, Params(3.0, 1.0, 3), u) == cube3.matrix @ u)


def test_zero_field_is_critical(cube4):
    p = Params(1.0, -1.0, 4)
    assert energy(cube4, p, cube4.zeros()).total == 0.0
    assert np.all(gradient(cube4, p, cube4.zeros()) == 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_projection_closed_form_pure_critical(cube4, seed):
    # lam = mu = 0: g(t u) = t^2 D - t^{2*} C, so t* = (D / C)^{1/(2*-2)}
    u = smooth_field(cube4, np.random.default_rng(seed))
    p = Params(0.0, 0.0, 4)
    k = fiber_coefficients(cube4, u)
    t = nehari_project(cube4, p, u)
    assert t == pytest.approx((k.dirichlet / k.critical) ** (1 / (p.two_star - 2)), rel=1e-12)


@pytest.mark.parametrize("lam, mu", [(0.0, 1.0), (5.0, -1.0), (-3.0, 2.0), (10.0, -2.0)])
def test_projection_lands_on_nehari_set(cube3, lam, mu):
    u = smooth_field(cube3, np.random.default_rng(11))
    p = Params(lam, mu, 3)
    t = nehari_project(cube3, p, u)
    k = fiber_coefficients(cube3, t * u)
    assert abs(nehari_g(cube3, p, t * u)) <= 1e-9 * k.dirichlet


def test_projection_reports_multiple_roots():
    # mu < 0 fiber with two critical points: a local min near 0 and the max
    from logbn.functional import FiberCoefficients

    k = FiberCoefficients(dirichlet=1.0, critical=1.0, mass=1.0, entropy=0.0)
    p = Params(0.0, -1.0, 3)
    roots = fiber_roots(p, k)
    assert len(roots) == 2
    for r in roots:
        assert abs(float(fiber_slope(p, k, r))) < 1e-9


def test_projection_needs_positive_part(cube3):
    with pytest.raises(NoProjectionError):
        nehari_project(cube3, Params(0, 1, 3), -np.ones(cube3.n))


def test_params_validation():
    with pytest.raises(UnsupportedDimensionError):
        Params(0, 1, 2)
    with pytest.raises(InvalidFieldError):
        Params(math.nan, 1, 3)
    assert Params(0, 0, 3).two_star == 6.0
    assert Params(0, 0, 4).two_star == 4.0


def test_non_finite_field_rejected(cube3):
    u = np.ones(cube3.n)
    u[3] = np.inf
    with pytest.raises(InvalidFieldError):
        energy(cube3, Params(0, 1, 3), u)


def test_positive_part():
    assert np.array_equal(positive_part(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
