import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.polynomial.legendre import leggauss

from gibbs_lsi.errors import DivergenceError, OutOfRange
from gibbs_lsi.functionals import GridFunction, basis_family, lattice_family
from gibbs_lsi.inequalities import (OmegaGrid, TwoConstantFit, assemble_constants,
                                    block_sweepout_fit, choose_sqrt_constants,
                                    covariance_constant, covariance_weight_bound, estimate_ls_sg,
                                    product_ls, sqrt_sweepout_fit, sweepout_fit, ubound_constant,
                                    weight_moment_table, weighted_variance_fit)
from gibbs_lsi.measures import build_gibbs_proxy
from gibbs_lsi.model import ModelSpec
from gibbs_lsi.quadrature import grid_for_phase, integrate

from conftest import torus

GAUSSIAN = ModelSpec().replace(alpha=0.5, p=2.0, allow_low_p=True, J=0.0)
OMEGA0 = OmegaGrid(0.0, 1.0)


def quartic_gap_constant() -> float:
    """Ritz value of Var/E|f'|^2 for exp(-x^4) on odd polynomials up to degree 21."""
    t, w = leggauss(400)
    x = 3 * t
    w = 3 * w * np.exp(-x ** 4)
    w /= w.sum()
    ks = range(1, 22, 2)
    F = np.array([x ** k for k in ks])
    D = np.array([k * x ** (k - 1) for k in ks])
    return float(scipy.linalg.eigh((F * w) @ F.T, (D * w) @ D.T, eigvals_only=True)[-1])


@pytest.fixture(scope="module")
def two_site_fits():
    out = {}
    for J in (0.0, 0.02, 0.05, 0.1, 0.15, 0.2):
        spec = torus(2, J)
        nu = build_gibbs_proxy(spec, n_nodes=64)
        fam = lattice_family(nu.grid, spec.lattice.edges)
        out[J] = (spec, nu, fam)
    return out


# -- single-site constants ------------------------------------------------------

@pytest.mark.parametrize("family", ["exp", "default"])
def test_gaussian_constants_approached_from_below(family):
    est = estimate_ls_sg(GAUSSIAN, OmegaGrid(3.0, 0.5), family)
    assert 0.9 <= est.c_SG <= 1.0 + 1e-9
    assert 1.8 <= est.c <= 2.0 + 1e-9
    assert est.c_SG_eig == pytest.approx(1.0, rel=0.01)


def test_quartic_spectral_gap_cross_check():
    oracle = quartic_gap_constant()
    est = estimate_ls_sg(ModelSpec().replace(J=0.0), OMEGA0)
    assert est.c_SG <= oracle * (1 + 1e-9)
    assert est.c_SG_eig == pytest.approx(oracle, rel=2e-3)


@given(J=st.floats(0, 0.5), rho=st.floats(0, 1), s=st.floats(1, 3))
def test_gap_estimate_never_exceeds_ls_estimate(J, rho, s):
    spec = ModelSpec().replace(J=J, rho=rho, s=s)
    est = estimate_ls_sg(spec, OmegaGrid(2.0, 1.0), eig=False)
    assert np.all(est.c_sg <= est.c_ls * (1 + 1e-12))


def test_product_of_two_single_site_measures():
    ca, cb, cp = product_ls(ModelSpec(), [[-1.0, 0.5]], [[2.0, 2.0]])
    assert ca != cb
    assert cp == pytest.approx(max(ca, cb), rel=0.05)


# -- U-bound ---------------------------------------------------------------------

def test_ubound_constant_function_gives_second_moment():
    spec = ModelSpec().replace(J=0.0)
    g = grid_for_phase(spec.phase).refined()
    oracle = integrate(lambda x: x ** 2 * np.exp(-x ** 4), g) / integrate(lambda x: np.exp(-x ** 4), g)
    u = ubound_constant(spec, 2.0, OMEGA0, family="bump", reference=False)
    assert u.C >= oracle * (1 - 1e-12)
    # the constant function alone: the family is {1} plus bumps localized away from the mass
    one_only = ubound_constant(spec, 2.0, OMEGA0, family="bump", reference=True)
    assert one_only.C_reference >= u.C * (1 - 1e-3)


def test_ubound_zero_exponent_needs_at_most_one():
    u = ubound_constant(ModelSpec(), 0.0, OmegaGrid(3.0, 1.0), reference=False)
    assert u.C <= 1.0 + 1e-12
    assert u.C == pytest.approx(1.0, abs=1e-12)


def test_ubound_rejects_exponent_outside_range():
    with pytest.raises(OutOfRange):
        ubound_constant(ModelSpec(), 7.0)
    with pytest.raises(OutOfRange):
        ubound_constant(ModelSpec(), -1.0)


def test_ubound_profile_flat_and_stable_under_refinement():
    spec = ModelSpec()
    coarse = ubound_constant(spec, 2.0, OmegaGrid(3.0, 0.5), reference=False)
    fine = ubound_constant(spec, 2.0, OmegaGrid(3.0, 0.25), reference=False)
    assert coarse.flatness <= 0.15
    assert abs(fine.C - coarse.C) <= 0.15 * coarse.C


def test_ubound_nondecreasing_in_exponent():
    spec = ModelSpec()
    Cs = [ubound_constant(spec, r, OmegaGrid(3.0, 0.5), reference=False).C for r in (1, 2, 4)]
    assert Cs[0] <= Cs[1] <= Cs[2], f"C(1), C(2), C(4) = {Cs}"


# -- two-constant fits -----------------------------------------------------------

triples = st.integers(1, 12).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(0, 5)),
    arrays(np.float64, n, elements=st.floats(0, 5)),
    arrays(np.float64, n, elements=st.floats(0, 5))))


@given(triples)
def test_frontier_points_replay_and_are_monotone(abc):
    a, b1, b2 = abc
    fit = TwoConstantFit("t", a, b1, b2, [str(k) for k in range(len(a))])
    front = fit.frontier()
    for k1, k2 in front:
        assert fit.slack(k1, k2) >= -1e-10 * max(1.0, a.max())
    for (k1a, k2a), (k1b, k2b) in zip(front, front[1:]):
        assert k2a < k2b and k1a >= k1b
    k1, k2 = fit.headline
    if np.isfinite(k2):
        assert fit.contains(k1, k2, tol=1e-10 * max(1.0, a.max()))


def test_infeasible_fit_is_flagged():
    fit = TwoConstantFit("t", [1.0], [0.0], [0.0], ["f"])
    assert math.isinf(fit.k1_for(0.5)) and math.isinf(fit.headline[1])
    assert not fit.success


def test_sweepout_decoupled_frontier(two_site_fits):
    spec, nu, fam = two_site_fits[0.0]
    fit = sweepout_fit(nu, fam, 0, 1)
    assert fit.contains(1.0 + 1e-10, 0.0)
    assert fit.headline[1] == 0.0


def test_sweepout_for_functions_of_the_integrated_site(two_site_fits):
    # decoupled: the conditional expectation is a constant, so the left side vanishes
    _, nu, _ = two_site_fits[0.0]
    fam = [GridFunction.on_site(nu.grid, 0, b) for b in basis_family()]
    fit = sweepout_fit(nu, fam, 0, 1)
    assert np.max(fit.a) < 1e-20
    assert fit.headline == (0.0, 0.0)
    # coupled: the conditional expectation depends on the neighbor, so only the
    # second constant can absorb the left side (no gradient in the neighbor)
    _, nu, _ = two_site_fits[0.1]
    fam = [GridFunction.on_site(nu.grid, 0, b) for b in basis_family()]
    fit = sweepout_fit(nu, fam, 0, 1)
    assert np.all(fit.b1 == 0) and np.max(fit.a) > 0
    assert fit.headline[0] == 0.0 and 0 < fit.headline[1] < 1


def test_sweepout_constant_grows_with_coupling(two_site_fits):
    D2 = [sweepout_fit(nu, fam, 0, 1).headline[1] for _, nu, fam in two_site_fits.values()]
    assert all(a <= b for a, b in zip(D2, D2[1:])), D2
    assert D2[-1] < 1


def test_fitted_pairs_replay_against_every_function(two_site_fits):
    spec, nu, fam = two_site_fits[0.2]
    for fit in (sweepout_fit(nu, fam, 0, 1), block_sweepout_fit(nu, fam),
                sqrt_sweepout_fit(nu, fam, (0, 1)), sqrt_sweepout_fit(nu, fam, (1, 0))):
        for k1, k2 in fit.frontier() + [fit.headline]:
            assert fit.slack(k1, k2) >= -1e-10


def test_weighted_variance_without_weight_is_a_gap_bound(two_site_fits):
    spec, nu, fam = two_site_fits[0.0]
    d3 = weighted_variance_fit(nu, fam, 0, 1, s=0.0)
    assert d3.value <= quartic_gap_constant() * (1 + 1e-9)


def test_block_sweepout_decoupled_and_identity_direction(two_site_fits):
    spec, nu, fam = two_site_fits[0.0]
    R1, R2 = block_sweepout_fit(nu, fam).headline
    assert (R1, R2) == (pytest.approx(1.0, abs=1e-9), 0.0)
    spec, nu, _ = two_site_fits[0.1]
    odd = spec.lattice.gamma1[0]
    fam = [GridFunction.on_site(nu.grid, odd, b) for b in basis_family()]
    assert block_sweepout_fit(nu, fam).headline[0] >= 1 - 1e-9


def test_block_sweepout_four_site_torus(four_site):
    spec, nu, fam = four_site
    assert block_sweepout_fit(nu, fam).headline[1] < 1


def test_square_root_constant_vanishes_with_coupling(two_site_fits):
    C2 = [sqrt_sweepout_fit(nu, fam).headline[1] for _, nu, fam in two_site_fits.values()]
    assert C2[0] == 0.0
    assert all(a <= b for a, b in zip(C2, C2[1:]))


def test_covariance_weight_finite_when_decoupled(two_site_fits):
    spec, nu, fam = two_site_fits[0.0]
    m0 = covariance_weight_bound(nu, fam, 1, 0)
    assert np.isfinite(m0.value) and m0.value > 0
    table = weight_moment_table(ModelSpec(), OmegaGrid(3.0, 0.5))
    assert table.finite
    assert np.isfinite(covariance_constant(ModelSpec(), OmegaGrid(3.0, 1.0)))


# -- assembly --------------------------------------------------------------------

def test_assembly_closed_forms():
    A, B = assemble_constants(1.0, 1.0, 0.5)
    assert A == pytest.approx(4 / 3)
    A, B = assemble_constants(2.0, 1.0, 0.5)
    assert B == pytest.approx(28 / 3)
    with pytest.raises(DivergenceError):
        assemble_constants(1.0, 1.0, 1.0)


def test_assembly_picks_the_b_minimizing_point():
    rng = np.random.default_rng(3)
    n = 30
    fits = [TwoConstantFit("t", rng.uniform(0, 0.01, n), rng.uniform(0.5, 1, n),
                           rng.uniform(0.5, 1, n), list(range(n))) for _ in range(2)]
    asm = choose_sqrt_constants(fits, 0.7)
    grid = np.geomspace(1e-6, 0.99, 20000)
    brute = min(assemble_constants(0.7, max(f.k1_for(k) for f in fits), k)[1] for k in grid)
    assert asm.B <= brute * (1 + 1e-6)
    assert all(f.contains(asm.C1, asm.C2) for f in fits)


def test_assembly_without_contractive_point_diverges():
    fit = TwoConstantFit("t", [2.0], [0.0], [1.0], ["f"])
    with pytest.raises(DivergenceError):
        choose_sqrt_constants([fit], 1.0)
