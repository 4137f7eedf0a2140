import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from gibbs_lsi.errors import ConfigError, DegenerateInput, MissingGradient
from gibbs_lsi.functionals import (ConstantLedger, DiscreteMeasure, GridFunction,
                                   basis_family, covariance, covariance_bound_check, dirichlet,
                                   entropic_bound, entropy, lattice_family, random_functions,
                                   variance)
from gibbs_lsi.measures import single_site
from gibbs_lsi.model import ModelSpec

atoms16 = arrays(np.float64, 16, elements=st.floats(-3, 3))
weights16 = arrays(np.float64, 16, elements=st.floats(0.01, 1))


@pytest.fixture(scope="module")
def gaussian():
    spec = ModelSpec().replace(alpha=0.5, p=2.0, allow_low_p=True, J=0.0)
    return single_site(spec, 0, [0.0, 0.0], n_nodes=256)


def test_entropy_examples():
    mu = DiscreteMeasure([0.5, 0.5])
    assert entropy(mu, np.array([math.sqrt(2), 0.0])) == pytest.approx(math.log(2), abs=1e-15)
    assert entropy(mu, np.array([3.0, 3.0])) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DegenerateInput):
        entropy(mu, np.zeros(2))


@given(f=atoms16, w=weights16)
def test_entropy_is_two_homogeneous_and_nonnegative(f, w):
    assume(np.max(np.abs(f)) > 1e-100)     # f^2 must not underflow to zero
    mu = DiscreteMeasure(w)
    e = entropy(mu, f)
    assert e >= 0
    assert entropy(mu, 3 * f) == pytest.approx(9 * e, rel=1e-10, abs=1e-12)


def test_dirichlet_examples(gaussian):
    g = gaussian.grid
    assert dirichlet(gaussian, GridFunction.constant(g, 2.0), (0,)) == 0
    assert dirichlet(gaussian, GridFunction.coordinate(g, 0), (0,)) == pytest.approx(1.0, abs=1e-14)
    # standard Gaussian second moment: E (2x)^2 = 4
    assert dirichlet(gaussian, GridFunction.coordinate(g, 0, 2), (0,)) == pytest.approx(4.0, rel=1e-10)
    # integral of exp(-x^2/2) is sqrt(2 pi)
    assert math.exp(gaussian.logZ) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)


def test_gaussian_ls_ratio_of_exponential_tilt_is_extremal(gaussian):
    # for the standard Gaussian, f = exp(x/2) attains Ent(f^2) = 2 E|f'|^2
    g = gaussian.grid
    x = g.coord(0)
    f = GridFunction(g, np.exp(0.5 * x), {0: 0.5 * np.exp(0.5 * x)})
    assert entropy(gaussian, f) / dirichlet(gaussian, f, (0,)) == pytest.approx(2.0, rel=1e-10)


def test_covariance_examples(gaussian):
    x = gaussian.grid.coord(0)
    assert covariance(gaussian, x, np.full_like(x, 4.0)) == pytest.approx(0, abs=1e-15)
    assert covariance(gaussian, x, x ** 2) == pytest.approx(0, abs=1e-14)
    assert covariance(gaussian, x ** 2, x ** 2) >= 0


def test_entropic_bound_examples():
    mu = DiscreteMeasure(np.ones(5))
    v = np.array([0.5, 1.0, 2.0, 0.1, 1.4])
    lhs, rhs = entropic_bound(mu, np.zeros(5), v, 1.0)
    assert lhs == 0 and rhs >= 0
    u = np.array([-1.0, 0.0, 2.0, 0.3, 5.0])
    lhs, rhs = entropic_bound(mu, u, np.ones(5), 2.0)
    assert lhs == pytest.approx(u.mean())
    assert rhs == pytest.approx(math.log(np.mean(np.exp(2 * u))) / 2)
    assert lhs <= rhs


@given(u=atoms16, v=weights16, w=weights16, t=st.floats(0.1, 5))
def test_entropic_bound_holds_on_every_sixteen_atom_measure(u, v, w, t):
    lhs, rhs = entropic_bound(DiscreteMeasure(w), u, v, t)
    assert lhs <= rhs + 1e-12 * (1 + abs(rhs))


def test_covariance_bound_trivial_cases():
    mu = DiscreteMeasure(np.ones(8))
    f = np.arange(8.0)
    assert covariance_bound_check(mu, f, np.full(8, 3.0)).lhs < 1e-12
    assert covariance_bound_check(mu, np.full(8, 2.0), f).lhs < 1e-12


@given(f=arrays(np.float64, 8, elements=st.floats(-2, 2)),
       h=arrays(np.float64, 8, elements=st.floats(-2, 2)),
       w=arrays(np.float64, 8, elements=st.floats(0.05, 1)))
def test_covariance_bound_ratio_finite_and_stable_under_atom_splitting(f, h, w):
    mu = DiscreteMeasure(w)
    r = covariance_bound_check(mu, f, h).ratio
    assert np.isfinite(r)
    split = DiscreteMeasure(np.repeat(w, 2) / 2)
    assert covariance_bound_check(split, np.repeat(f, 2), np.repeat(h, 2)).ratio == pytest.approx(
        r, rel=1e-9, abs=1e-12)


def test_functionals_vanish_on_constants(two_site):
    spec, nu, _ = two_site
    c = GridFunction.constant(nu.grid, 1.7)
    assert entropy(nu, c) == pytest.approx(0, abs=1e-14)
    assert variance(nu, c) == pytest.approx(0, abs=1e-14)
    assert dirichlet(nu, c, (0, 1)) == 0


@given(lam=st.floats(0.1, 10), idx=st.integers(0, 60))
def test_ls_ratio_scale_invariant(two_site, lam, idx):
    _, nu, fam = two_site
    f = fam[idx % len(fam)]
    d = dirichlet(nu, f, (0, 1))
    if d <= 0:
        return
    g = f * lam
    assert entropy(nu, g) / dirichlet(nu, g, (0, 1)) == pytest.approx(entropy(nu, f) / d, rel=1e-9)


def test_conditioning_commutes_with_gradient_when_decoupled(two_site_decoupled, rng):
    _, nu, _ = two_site_decoupled
    E0 = nu.sub((0,))
    for f in random_functions(nu.grid, 5, rng):
        lhs = E0.condition(f, (1,)).grad(1)
        rhs = E0.expect_values(f.grad(1))
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_product_rule_and_square_root(two_site):
    _, nu, _ = two_site
    g = nu.grid
    x0, x1 = GridFunction.coordinate(g, 0), GridFunction.coordinate(g, 1)
    p = x0 * x1.square()
    assert np.allclose(p.grad(0), np.broadcast_to(g.coord(1) ** 2, g.shape))
    assert np.allclose(p.grad(1), 2 * g.coord(0) * g.coord(1))
    r = (1.0 + x0.square()).sqrt()
    assert np.allclose(r.grad(0), g.coord(0) / np.sqrt(1 + g.coord(0) ** 2))
    assert x0.support == (0,) and not x0.depends_on(1)
    assert np.all(x0.grad(1) == 0)


def test_missing_gradient_is_reported(two_site):
    _, nu, _ = two_site
    f = GridFunction(nu.grid, nu.grid.coord(0) * nu.grid.coord(1), {0: nu.grid.coord(1)})
    with pytest.raises(MissingGradient):
        f.grad(1)


def test_families():
    assert len(basis_family("default")) == 24
    with pytest.raises(ConfigError):
        basis_family("nonexistent")


def test_lattice_family_size(four_site):
    spec, nu, fam = four_site
    assert len(fam) == 4 * 24 + 4 * 7 + 4
    assert len({f.name for f in fam}) == len(fam)


def test_ledger_rejects_unknown_constants():
    led = ConstantLedger()
    led.record("c", 0.5, "test")
    assert led["c"] == 0.5 and "c" in led and led.names() == ["c"]
    with pytest.raises(ConfigError):
        led.record("not_a_constant", 1.0, "test")
