import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from logbn.constants import sobolev_closed_form
from logbn.domain import DomainSpec
from logbn.errors import RegimeError, UnsupportedDimensionError, UsageError
from logbn.functional import Params
from logbn.regions import (
    CURVES,
    EXISTENCE,
    LABELS,
    DomainConstants,
    PhaseDiagram,
    RegionClassifier,
    classify,
    curve_lambda,
    curve_residual,
    curve_samples,
    curve_values,
    f_min,
    f_values,
    nonexistence_predicate,
    nonexistence_value,
    phase_diagram,
    read_curves_csv,
    write_curves_csv,
)
from logbn.solvers import geometry_estimate


def cube(N):
    return DomainConstants(lambda1=N * math.pi**2, volume=1.0, S=sobolev_closed_form(N), rho_max=0.5, N=N)


K3, K4, K5 = cube(3), cube(4), cube(5)


def test_from_spec_box_uses_closed_form_eigenvalue():
    k = DomainConstants.from_spec(DomainSpec("box", 4, 1.0, 12))
    assert k.lambda1 == pytest.approx(4 * math.pi**2)
    assert k.rho_max == pytest.approx(0.5)
    assert k.volume == pytest.approx(1.0)
    assert k.S == pytest.approx(sobolev_closed_form(4), rel=1e-4)


def test_from_spec_grid_eigenvalue():
    k = DomainConstants.from_spec(DomainSpec("box", 3, 1.0, 16), eigen="grid")
    assert k.lambda1 == pytest.approx(3 * math.pi**2, rel=0.02)


def test_constants_validation():
    with pytest.raises(UsageError):
        DomainConstants(lambda1=-1.0, volume=1.0, S=5.0, rho_max=0.5, N=3)
    with pytest.raises(UnsupportedDimensionError):
        DomainConstants(lambda1=1.0, volume=1.0, S=5.0, rho_max=0.5, N=6)


def test_a0_example():
    v = classify(Params(0.0, 1.0, 4), K4)
    assert v.label == "A0_exists" and v.exists and v.margin > 0


def test_n4_eta3_example():
    v = classify(Params(10.0, -1.0, 4), K4)
    assert v.label == "N4_exists_eta3"
    assert v.values["eta1"] == pytest.approx(0.25 * ((K4.lambda1 - 10) / K4.lambda1) ** 2 * K4.S**2 - 0.5)
    assert v.values["eta1"] == pytest.approx(14.2, abs=0.1)
    assert 32 * math.exp(-10) == pytest.approx(0.00145, abs=1e-5)


@pytest.mark.parametrize("lam", [K3.lambda1 - 1, K3.lambda1, K3.lambda1 + 3])
def test_nonexistence_example(lam):
    v = classify(Params(lam, -2.0, 3), K3)
    assert v.label == "nonexistence_T14"
    assert v.margin == pytest.approx(1 + lam - K3.lambda1, abs=1e-12)


def test_nonexistence_equality_included():
    p = Params(K3.lambda1 - 1.0, -2.0, 3)
    assert nonexistence_value(p, K3.lambda1) == 0.0
    assert nonexistence_predicate(p, K3.lambda1)


def test_nonexistence_small_mu_limit():
    p = Params(K3.lambda1 - 2.0, -1e-12, 3)
    assert nonexistence_value(p, K3.lambda1) == pytest.approx(-2.0, abs=1e-9)
    assert not nonexistence_predicate(p, K3.lambda1)
    assert not nonexistence_predicate(Params(100.0, 1.0, 3), K3.lambda1)


def test_b0_c0_labels_n3():
    assert classify(Params(0.0, -1.0, 3), K3).label == "B0_exists"
    assert classify(Params(-5.0, -1.0, 3), K3).label == "C0_exists"
    v = classify(Params(0.0, -1.0, 3), K3)
    assert v.margin == pytest.approx(K3.S**1.5 / 3 - 0.5)


def test_uncovered_cases_are_unknown():
    for p, k in [(Params(0.0, 1.0, 3), K3), (Params(0.0, 0.0, 4), K4), (Params(0.0, -1.0, 5), K5)]:
        v = classify(p, k)
        assert v.label == "unknown" and v.margin <= 0


def test_n5_nonexistence_applies():
    assert classify(Params(K5.lambda1 + 10, -1.0, 5), K5).label == "nonexistence_T14"


def test_dimension_mismatch():
    with pytest.raises(UsageError):
        classify(Params(0, 1, 3), K4)


@settings(max_examples=300, deadline=None)
@given(N=st.sampled_from([3, 4, 5]), lam=st.floats(-100, 100), mu=st.floats(-20, 20))
def test_classify_total_and_sign_consistent(N, lam, mu):
    k = cube(N)
    v = classify(Params(lam, mu, N), k)
    assert v.label in LABELS
    if v.label in EXISTENCE:
        assert v.margin > 0
    elif v.label == "nonexistence_T14":
        assert v.margin >= 0
    else:
        assert v.margin <= 0
    if v.exists:
        assert not nonexistence_predicate(Params(lam, mu, N), k.lambda1)


def test_f_min_examples():
    r = f_min(Params(2.0, -2.0, 3), K3.lambda1)
    assert r.s0 == 1.0 and r.fmin == pytest.approx(1 + 2.0 - K3.lambda1)
    assert r.scan_ok
    r = f_min(Params(0.0, -1.0, 4), K4.lambda1)
    assert r.s0 == 1.0 and r.fmin == pytest.approx(1 - K4.lambda1)
    with pytest.raises(RegimeError):
        f_min(Params(0.0, 1.0, 3), K3.lambda1)


@settings(max_examples=100, deadline=None)
@given(N=st.sampled_from([3, 4, 5]), lam=st.floats(-50, 50), mu=st.floats(-20, -1e-3))
def test_f_min_matches_predicate(N, lam, mu):
    p = Params(lam, mu, N)
    r = f_min(p, 30.0, samples=20_000)
    assert r.scan_ok
    # f(s0) is the nonexistence expression itself
    assert r.fmin == pytest.approx(nonexistence_value(p, 30.0), rel=1e-12, abs=1e-10)
    assert r.fmin <= float(f_values(p, 30.0, r.s0 * 1.01))


def test_curve_examples():
    assert curve_lambda("tau1", -2.0, K3) == pytest.approx(K3.lambda1 - 1)
    assert curve_lambda("tau1", -1.0, K4) == pytest.approx(K4.lambda1 - 1)
    assert curve_lambda("eta3", -1.0, K4) == pytest.approx(math.log(128))
    with pytest.raises(RegimeError):
        curve_lambda("eta1", -100.0, K3)
    with pytest.raises(RegimeError):
        curve_lambda("tau1", 1.0, K3)


@pytest.mark.parametrize("N", [3, 4])
@pytest.mark.parametrize("curve", CURVES)
def test_curve_plug_back(N, curve):
    k = cube(N)
    pts = curve_samples(curve, (-8.0, -0.05), k, 200)
    assert pts
    for lam, mu in pts:
        assert curve_residual(curve, lam, mu, k) <= 1e-10


def test_eta2_plug_back_equation():
    for lam, mu in curve_samples("eta2", (-8.0, -0.05), K3, 50):
        assert K3.S**1.5 / 3 + 0.5 * mu * math.exp(-lam / mu) == pytest.approx(0.0, abs=1e-10)


def test_eta1_skips_outside_range():
    pts, skipped = curve_samples("eta1", (-20.0, -0.1), K3, 50, return_skipped=True)
    assert skipped and pts
    assert len(pts) + len(skipped) == 50


@pytest.mark.parametrize("N", [3, 4])
@pytest.mark.parametrize("curve", CURVES)
def test_curve_values_change_sign_across_curve(N, curve):
    k = cube(N)
    for lam, mu in curve_samples(curve, (-6.0, -0.2), k, 20):
        d = 1e-6 * max(1.0, abs(lam))
        lo = curve_values(Params(lam - d, mu, N), k)[curve]
        hi = curve_values(Params(lam + d, mu, N), k)[curve]
        assert lo * hi < 0


def test_labels_flip_across_tau1():
    for mu in np.linspace(-6, -0.5, 12):
        lam = curve_lambda("tau1", float(mu), K3)
        assert classify(Params(lam + 1e-6, float(mu), 3), K3).label == "nonexistence_T14"
        assert classify(Params(lam - 1e-6, float(mu), 3), K3).label != "nonexistence_T14"


def test_curves_csv_round_trip(tmp_path):
    curves = {c: curve_samples(c, (-4.0, -0.1), K3, 10) for c in CURVES}
    path = tmp_path / "curves.csv"
    write_curves_csv(path, curves)
    assert read_curves_csv(path) == {c: v for c, v in curves.items() if v}


def test_phase_diagram_disjoint_and_csv(tmp_path):
    pd = phase_diagram(K4, (-20, 60), (-5, 5), 100)
    labels = pd.labels()
    assert len(labels) == 10_000
    a0 = {(c.lam, c.mu) for c in pd.cells if c.label == "A0_exists"}
    nx = {(c.lam, c.mu) for c in pd.cells if c.label == "nonexistence_T14"}
    assert a0 and nx and not (a0 & nx)
    path = tmp_path / "phase.csv"
    pd.to_csv(path)
    back = PhaseDiagram.from_csv(path, 4)
    assert [c.label for c in back.cells] == list(labels)
    assert [c.margin for c in back.cells] == [c.margin for c in pd.cells]


def test_phase_diagram_b0c0_cells_have_geometry():
    pd = phase_diagram(K3, (-10, K3.lambda1 - 1e-9), (-8, -1e-9), 40)
    for c in pd.cells:
        if c.label in ("B0_exists", "C0_exists"):
            assert c.margin > 0
            assert geometry_estimate(Params(c.lam, c.mu, 3), K3.lambda1, 1.0, K3.S).alpha > 0


def test_phase_diagram_confirm():
    spec = DomainSpec("box", 3, 1.0, 10)
    k = DomainConstants.from_spec(spec, eigen="grid")
    pd = phase_diagram(k, (-5, 20), (-3, -0.5), 4, confirm=True, spec=spec, budget=2)
    solved = [c for c in pd.cells if c.solver_status]
    assert 1 <= len(solved) <= 2
    assert all(c.agrees is not None for c in solved)
    with pytest.raises(UsageError):
        phase_diagram(k, (0, 1), (0, 1), 1)


def test_region_classifier_estimator():
    X = np.array([[0.0, 1.0], [10.0, -1.0], [0.0, 0.0], [4 * math.pi**2 + 5, -2.0]])
    clf = RegionClassifier(N=4).fit()
    pred = clf.predict(X)
    assert list(pred) == ["A0_exists", "N4_exists_eta3", "unknown", "nonexistence_T14"]
    assert clf.score(X, pred) == 1.0
    margins = clf.decision_function(X)
    assert margins[0] > 0 and margins[2] <= 0
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()
    with pytest.raises(UsageError):
        clf.predict(np.zeros((2, 3)))


def test_subnormal_mu_is_classified():
    p = Params(0.0, -5e-324, 3)
    assert nonexistence_value(p, K3.lambda1) == pytest.approx(-K3.lambda1)
    assert classify(p, K3).label in LABELS
    assert curve_lambda("tau1", -5e-324, K3) == pytest.approx(K3.lambda1)
