import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as spint

from logbn.constants import sobolev_closed_form
from logbn.domain import DomainSpec, build_grid
from logbn.errors import BracketError, ResolutionError, UsageError
from logbn.functional import FiberCoefficients, Params, energy, fiber_coefficients
from logbn.radial import instanton, sphere_area
from logbn.testfunctions import (
    AsymptoticsReport,
    CutoffSpec,
    asymptotics_report,
    cutoff,
    cutoff_dr,
    cutoff_sq_integral,
    entropy_brackets,
    fiber_max,
    margin_scale,
    radial_integrals,
    sup_t_energy,
    sup_t_energy_radial,
    test_function,
    threshold_sweep,
)


@pytest.fixture(scope="module")
def grid48():
    return build_grid(DomainSpec("box", 3, 1.0, 48))


def test_instanton_values():
    assert instanton(3, 1.0, 0.0) == pytest.approx(3**0.25)
    assert instanton(4, 1.0, 0.0) == pytest.approx(2 * math.sqrt(2))


@settings(max_examples=50, deadline=None)
@given(N=st.sampled_from([3, 4, 5]), eps=st.floats(1e-3, 10.0), r=st.floats(0.0, 5.0))
def test_instanton_scale_law(N, eps, r):
    assert instanton(N, eps, r) == pytest.approx(eps ** (-(N - 2) / 2) * instanton(N, 1.0, r / eps), rel=1e-12)


def test_cutoff_shape():
    rho = 0.25
    r = np.linspace(0, 1, 401)
    phi = cutoff(rho, r)
    assert np.all(phi[r <= rho] == 1.0) and np.all(phi[r >= 2 * rho] == 0.0)
    assert np.all(np.diff(phi) <= 0)
    # C^1 at both joints
    assert cutoff_dr(rho, rho) == 0.0 and cutoff_dr(rho, 2 * rho) == 0.0
    assert cutoff_sq_integral(rho) == pytest.approx(spint.quad(lambda t: cutoff(rho, t) ** 2, 0, 2 * rho)[0], rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0.26, 0.49))
def test_cutoff_derivative(r):
    d = 1e-6
    assert cutoff_dr(0.25, r) == pytest.approx((cutoff(0.25, r + d) - cutoff(0.25, r - d)) / (2 * d), rel=1e-5, abs=1e-8)


def test_cutoff_spec_validation():
    with pytest.raises(UsageError):
        CutoffSpec(0.5, "radial_N3")  # 4 rho^2 = 1
    with pytest.raises(UsageError):
        CutoffSpec(1.5, "radial_N4")
    with pytest.raises(UsageError):
        CutoffSpec(-0.1)
    assert CutoffSpec.for_dimension(3, 0.2).profile == "radial_N3"
    assert CutoffSpec.for_dimension(5, 0.2).profile == "generic"


def test_log_condition_sign():
    cut = CutoffSpec.for_dimension(4, 0.25)
    # log(1 / (8 e^{3 - lam/mu} rho^2)) - 1 with lam/mu = -10
    expected = math.log(1 / (8 * math.exp(3 + 10) * 0.0625)) - 1
    assert cut.log_condition(10.0, -1.0) == pytest.approx(expected)
    assert cut.log_condition(10.0, -1.0) < 0
    # a large lam / mu makes the logarithm large
    assert CutoffSpec.for_dimension(4, 0.01).log_condition(10.0, 1.0) > 0


def test_grid_sample_center_and_support(grid48):
    cut = CutoffSpec.for_dimension(3, 0.2)
    U = test_function(grid48, cut, 0.1)
    x = grid48.coordinates()
    r = np.linalg.norm(x - 0.5, axis=1)
    assert np.all(U[r >= 0.4] == 0.0)
    i = int(np.argmin(r))
    assert U[i] == pytest.approx(instanton(3, 0.1, r[i]))
    assert U.max() <= instanton(3, 0.1, 0.0)


def test_grid_and_radial_quadrature_agree(grid48):
    cut = CutoffSpec.for_dimension(3, 0.2)
    k = fiber_coefficients(grid48, test_function(grid48, cut, 0.1))
    r = radial_integrals(cut, 3, 0.1)
    assert k.critical == pytest.approx(r.critical, rel=1e-3)
    assert k.mass == pytest.approx(r.mass, rel=1e-3)
    assert k.entropy == pytest.approx(r.entropy, rel=1e-3)
    assert k.dirichlet == pytest.approx(r.dirichlet, rel=0.02)


def test_grid_sample_guards(grid48):
    cut = CutoffSpec.for_dimension(3, 0.2)
    with pytest.raises(ResolutionError):
        test_function(grid48, cut, 0.05)
    with pytest.raises(UsageError):
        test_function(grid48, CutoffSpec.for_dimension(3, 0.3), 0.1)


def test_critical_loss_is_order_eps_n():
    cut = CutoffSpec.for_dimension(4, 0.25)
    S2 = sobolev_closed_form(4) ** 2
    ratios = []
    for eps in (0.05, 0.025, 0.0125):
        loss = S2 - radial_integrals(cut, 4, eps).critical
        # the whole tail beyond rho is an upper bound: int_{|x|>rho} 64 eps^4 / |x|^8
        assert 0 < loss <= 16 * sphere_area(4) * eps**4 / 0.25**4
        ratios.append(loss / eps**4)
    assert max(ratios) / min(ratios) < 1.1


@pytest.mark.parametrize("N", [3, 4, 5])
def test_radial_integrals_vs_plain_quadrature(N):
    cut = CutoffSpec.for_dimension(N, 0.25)
    eps = 0.05
    r = radial_integrals(cut, N, eps)
    w = sphere_area(N)
    mass = w * spint.quad(lambda t: (cutoff(0.25, t) * instanton(N, eps, t)) ** 2 * t ** (N - 1), 0, 0.5,
                          points=[eps, 0.25], limit=200)[0]
    assert r.mass == pytest.approx(mass, rel=1e-8)
    assert math.isfinite(r.dirichlet) and r.gradient_excess > 0


def test_fiber_max_closed_form_pure_critical():
    k = FiberCoefficients(dirichlet=30.0, critical=20.0, mass=0.5, entropy=0.1)
    p = Params(0.0, 0.0, 4)
    t, level = fiber_max(p, k)
    assert t == pytest.approx(math.sqrt(30.0 / 20.0), rel=1e-7)
    assert level == pytest.approx(0.25 * (30.0 / math.sqrt(20.0)) ** 2, rel=1e-12)


def test_fiber_max_no_interior_maximum():
    # mu < 0 with a tiny critical part: energy still rises at the upper end of the scan
    k = FiberCoefficients(dirichlet=1.0, critical=1e-40, mass=1.0, entropy=0.0)
    with pytest.raises(BracketError):
        fiber_max(Params(0.0, 0.0, 3), k, t_max=1e3)


def test_sup_t_energy_grid_matches_direct(grid48):
    cut = CutoffSpec.for_dimension(3, 0.2)
    U = test_function(grid48, cut, 0.1)
    p = Params(0.0, -1.0, 3)
    t, level = sup_t_energy(grid48, p, U)
    assert level == pytest.approx(energy(grid48, p, t * U).total, rel=1e-12)
    for f in (0.98, 1.02):
        assert energy(grid48, p, f * t * U).total < level


def test_margin_equals_threshold_minus_level_where_resolvable():
    cut = CutoffSpec.for_dimension(4, 0.25)
    p = Params(0.0, 1.0, 4)
    t, level, margin = sup_t_energy_radial(p, cut, 0.05)
    assert margin == pytest.approx(sobolev_closed_form(4) ** 2 / 4 - level, rel=1e-9, abs=1e-11)


@pytest.mark.parametrize("N, lam, mu, eps", [
    (4, 0.0, 1.0, [1e-5, 1e-6, 1e-7, 1e-8]),
    (5, 0.0, 1.0, [1e-2, 1e-3, 1e-4, 1e-5]),
    (4, 10.0, -1.0, [1e-2, 1e-3, 1e-4, 1e-5]),
])
def test_threshold_sweeps(N, lam, mu, eps):
    sw = threshold_sweep(Params(lam, mu, N), CutoffSpec.for_dimension(N, 0.25), eps)
    assert sw.below_threshold
    assert sw.margin_shrinks_with_eps
    assert sw.scaled_margin_grows
    # t_eps stays in a fixed compact interval
    assert np.all((sw.t_star > 0.5) & (sw.t_star < 2.0))


def test_threshold_sweep_rejects_increasing_list():
    with pytest.raises(UsageError):
        threshold_sweep(Params(0, 1, 4), CutoffSpec.for_dimension(4, 0.25), [1e-3, 1e-2])


def test_margin_scale():
    assert margin_scale(3, 0.1) == pytest.approx(0.1 * math.log(10))
    assert margin_scale(4, 0.1) == pytest.approx(0.01 * math.log(10))


@pytest.mark.parametrize("N", [4, 5])
def test_gradient_excess_slope(N):
    rep = asymptotics_report(CutoffSpec.for_dimension(N, 0.25), N, [0.1, 0.05, 0.025, 0.0125])
    assert rep.passes["gradient_excess_slope"]
    assert rep.fits["gradient_excess_slope"] == pytest.approx(N - 2, abs=0.2)


def test_slope_example_n5():
    rep = asymptotics_report(CutoffSpec.for_dimension(5, 0.25), 5, [0.08, 0.04, 0.02])
    assert rep.fits["gradient_excess_slope"] == pytest.approx(3.0, abs=0.2)
    assert rep.passes["entropy_log_coefficient"]


def test_n4_mass_coefficient_and_bracket():
    rep = asymptotics_report(CutoffSpec.for_dimension(4, 0.25), 4, [0.05, 0.02, 0.01, 0.005, 0.001])
    assert rep.passes["mass_log_coefficient"] and rep.passes["entropy_bracket"]
    lo, hi = entropy_brackets(0.25, 0.01)
    assert lo < hi


def test_n3_limits():
    eps = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10]
    rep = asymptotics_report(CutoffSpec.for_dimension(3, 0.25), 3, eps)
    assert rep.passes["mass_linear_coefficient"]
    assert rep.passes["entropy_linear_log_coefficient"]
    target = math.sqrt(3) * sphere_area(3) * cutoff_sq_integral(0.25)
    assert rep.mass[-1] / eps[-1] == pytest.approx(target, rel=0.05)


def test_report_validation():
    cut = CutoffSpec.for_dimension(4, 0.25)
    with pytest.raises(UsageError):
        asymptotics_report(cut, 4, [0.1, 0.05])
    with pytest.raises(UsageError):
        asymptotics_report(cut, 4, [0.1, 0.08, 0.06])  # spans less than a factor 4
    with pytest.raises(UsageError):
        asymptotics_report(cut, 4, [0.1, 0.2, 0.01])


def test_report_csv_round_trip(tmp_path):
    rep = asymptotics_report(CutoffSpec.for_dimension(4, 0.25), 4, [0.1, 0.05, 0.025, 0.0125])
    path = tmp_path / "a.csv"
    rep.to_csv(path)
    back = AsymptoticsReport.from_csv(path)
    assert np.array_equal(back.eps_list, rep.eps_list)
    assert np.array_equal(back.gradient, rep.gradient)
    assert np.array_equal(back.entropy, rep.entropy)
    assert back.passes == rep.passes
