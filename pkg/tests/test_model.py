import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from gibbs_lsi.errors import ConfigError, ModelRejected
from gibbs_lsi.model import (CouplingMatrix, HypothesisScan, Interaction, LatticeTorus,
                             ModelSpec, Phase, check_hypotheses, region_check)

SMALL_SCAN = HypothesisScan(d_max=6.0, n_d=600, omega_max=3.0, omega_step=0.5, nodes=64)


def test_quartic_phase_drift_constant_is_four():
    rep = check_hypotheses(ModelSpec(), SMALL_SCAN)
    assert rep["H1.1"].passed
    assert rep["H1.1"].certified == pytest.approx(4.0)


def test_quartic_phase_curvature_ratio_below_three():
    # oracle: independent 1-D maximization of 12 d^2 / (1 + 4 d^3)
    res = minimize_scalar(lambda d: -12 * d ** 2 / (1 + 4 * d ** 3), bounds=(0, 6),
                          method="bounded", options={"xatol": 1e-12})
    oracle = -res.fun
    assert oracle < 3
    spec = ModelSpec().replace(k1=3.0)
    rep = check_hypotheses(spec, SMALL_SCAN)
    assert rep["H1.2"].passed
    assert rep["H1.2"].certified == pytest.approx(oracle, rel=1e-4)
    assert rep["H1.2"].certified <= oracle * (1 + 1e-12)


def test_interaction_drift_nonnegative():
    rep = check_hypotheses(ModelSpec(), SMALL_SCAN)
    assert rep["H1.3"].passed and rep["H1.3"].margin >= 0


def test_reference_model_passes_every_hypothesis():
    rep = check_hypotheses(ModelSpec(), SMALL_SCAN)
    assert rep.passed, rep.failures()
    assert [r.name for r in rep.results] == ["H1.1", "H1.2", "H1.3", "H1.4", "H1.5", "H1.5(a)",
                                             "H1.5(b)", "H1.5(c)", "H1.5(d)", "H1.5(e)", "H1.6"]


def test_exponent_above_range_is_reported_not_raised():
    rep = check_hypotheses(ModelSpec().replace(s=4.0), SMALL_SCAN)
    assert not rep["H1.5"].passed
    assert rep["H1.5"].note == "s>p-1"
    assert all(n.startswith("H1.5") for n in rep.failures())


def test_coupling_bound():
    rep = check_hypotheses(ModelSpec().replace(J=1.0), SMALL_SCAN)
    assert rep.failures() == ["H1.6"] or "H1.6" in rep.failures()


def test_negative_interaction_overwhelming_phase_is_rejected():
    with pytest.raises(ModelRejected):
        ModelSpec().replace(epsilon=-1.0, s=5.0)
    with pytest.raises(ModelRejected):
        ModelSpec().replace(epsilon=-3.0, s=4.0, J=0.9)


def test_low_phase_exponent_needs_opt_in():
    with pytest.raises(ConfigError):
        Phase(p=2.0)
    assert Phase(p=2.0, alpha=0.5, allow_low_p=True).value(2.0) == 2.0


def test_single_site_energy_both_pair_conventions():
    # phase 1 at x = 1; pair energy (1 + 0.5*0)^2 = 1 per neighbor, J = 0.1, two neighbors
    out = ModelSpec().replace(J=0.1, pair_terms="outgoing")
    assert out.site_energy(1.0, [0.0, 0.0]) == pytest.approx(1.2)
    both = ModelSpec().replace(J=0.1)
    # the reverse term adds (0 + 0.5*1)^2 = 0.25 per neighbor
    assert both.site_energy(1.0, [0.0, 0.0]) == pytest.approx(1.25)
    z = {0: 1.0, 1: 0.0, 3: 0.0}
    assert both.local_energy((0,), z) == pytest.approx(1.25)
    assert out.local_energy((0,), z) == pytest.approx(1.2)


@given(x=st.floats(-3, 3), y=st.floats(-3, 3), pair=st.sampled_from(["both", "outgoing"]))
def test_local_energy_gradient_matches_finite_difference(x, y, pair):
    spec = ModelSpec().replace(J=0.3, pair_terms=pair)
    z = {0: x, 1: y, 2: 0.7, 3: -0.4}
    h = 1e-6
    for k in (0, 1):
        zp, zm = dict(z), dict(z)
        zp[k] += h
        zm[k] -= h
        fd = (spec.local_energy((0,), zp) - spec.local_energy((0,), zm)) / (2 * h)
        if min(abs(z[k]), abs(z[0])) > 1e-4:
            assert spec.local_energy_grad((0,), z, k) == pytest.approx(fd, rel=1e-5, abs=1e-6)


@given(d=st.floats(0.05, 6), w=st.floats(0.05, 3), alpha=st.floats(0.5, 2), p=st.floats(3, 6),
       s=st.floats(0.5, 3))
def test_radial_derivatives_match_finite_differences(d, w, alpha, p, s):
    ph, it = Phase(alpha=alpha, p=p), Interaction(s=s)
    h = 1e-6 * d
    fd = lambda f, a: (f(a + h) - f(a - h)) / (2 * h)
    assert ph.d1(d) == pytest.approx(fd(ph.value, d), rel=1e-6)
    assert ph.d2(d) == pytest.approx(fd(ph.d1, d), rel=1e-6)
    assert it.d1(d, w) == pytest.approx(fd(lambda a: it.value(a, w), d), rel=1e-6)
    assert it.d11(d, w) == pytest.approx(fd(lambda a: it.d1(a, w), d), rel=1e-6, abs=1e-9)
    hw = 1e-6 * w
    assert it.d2(d, w) == pytest.approx((it.value(d, w + hw) - it.value(d, w - hw)) / (2 * hw), rel=1e-6)


@given(dim=st.sampled_from([1, 2]), side=st.sampled_from([2, 4, 6, 8]))
def test_checkerboard_classes_separate_every_edge(dim, side):
    lat = LatticeTorus(dim, side)
    for i, j in lat.edges:
        assert lat.parity(i) != lat.parity(j)
    assert 0 in lat.gamma0
    assert sorted(lat.gamma0 + lat.gamma1) == list(range(lat.n_sites))


def test_small_tori_have_unique_neighbors():
    assert LatticeTorus(1, 2).edges == ((0, 1),)
    assert LatticeTorus(2, 2).degree == 2
    assert LatticeTorus(2, 4).degree == 4


@given(k0=st.floats(3.0, 5.0), k1=st.floats(1.0, 4.0), kg=st.floats(0.5, 60.0),
       s=st.floats(1.0, 4.0))
def test_enlarging_the_scan_never_turns_a_fail_into_a_pass(k0, k1, kg, s):
    spec = ModelSpec().replace(k0=k0, k1=k1, kgrowth=kg, s=s)
    small = HypothesisScan(d_max=3.0, n_d=150, omega_max=1.0, omega_step=0.5, nodes=64)
    large = HypothesisScan(d_max=6.0, n_d=300, omega_max=2.0, omega_step=0.5, nodes=64)
    a, b = check_hypotheses(spec, small), check_hypotheses(spec, large)
    assert set(a.failures()) <= set(b.failures())


def test_region_check_decoupled_matches_boundary_value():
    # on {4 d^3 > 10} the ratio 24 d^2 / (16 d^6) = 1.5 d^-4 peaks at the boundary
    bound = 1.5 * (10 / 4) ** (-4 / 3)
    rep = region_check(ModelSpec().replace(J=0.0), 10.0, 10.0, SMALL_SCAN)
    assert rep.passed
    assert rep.zeta <= bound
    d = SMALL_SCAN.d_values()
    first = d[4 * d ** 3 > 10].min()
    assert rep.zeta == pytest.approx(1.5 * first ** -4, rel=1e-12)


def test_region_check_fails_for_tiny_thresholds():
    rep = region_check(ModelSpec().replace(J=0.1), 0.01, 0.01, SMALL_SCAN)
    assert not rep.passed and rep.zeta >= 1
    d = float(rep.witness.split(",")[0].split("=")[1])
    assert d < 0.5


def test_region_thresholds_must_be_positive():
    with pytest.raises(ConfigError):
        region_check(ModelSpec(), 0.0, 1.0, SMALL_SCAN)


def test_from_mapping_and_replace_roundtrip():
    spec = ModelSpec.from_mapping({"alpha": 2.0, "J": 0.2, "side": 2, "J_edges": [[0, 1, 0.3]]})
    assert spec.phase.alpha == 2.0 and spec.lattice.n_sites == 2
    assert spec.coupling(1, 0) == 0.3
    assert spec.replace(J=0.0).coupling.J == 0.0
    with pytest.raises(ConfigError):
        ModelSpec.from_mapping({"side": 3})
    with pytest.raises(ConfigError):
        ModelSpec(pair_terms="sideways")
    with pytest.raises(ConfigError):
        CouplingMatrix(J=-0.1)
