"""Shared fixtures: the reference model and small exact tori."""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gibbs_lsi.functionals import lattice_family
from gibbs_lsi.measures import build_gibbs_proxy
from gibbs_lsi.model import CouplingMatrix, LatticeTorus, ModelSpec

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow,
                                                 HealthCheck.function_scoped_fixture])
settings.load_profile("repo")


def torus(side: int, J: float, **changes) -> ModelSpec:
    return ModelSpec(lattice=LatticeTorus(1, side), coupling=CouplingMatrix(J=J)).replace(**changes)


@pytest.fixture(scope="session")
def reference_spec():
    return ModelSpec()


@pytest.fixture(scope="session")
def four_site():
    """Exact 4-site torus at the reference coupling with its lattice family."""
    spec = ModelSpec()
    nu = build_gibbs_proxy(spec)
    return spec, nu, lattice_family(nu.grid, spec.lattice.edges)


@pytest.fixture(scope="session")
def two_site():
    spec = torus(2, 0.1)
    nu = build_gibbs_proxy(spec, n_nodes=64)
    return spec, nu, lattice_family(nu.grid, spec.lattice.edges)


@pytest.fixture(scope="session")
def two_site_decoupled():
    spec = torus(2, 0.0)
    nu = build_gibbs_proxy(spec, n_nodes=64)
    return spec, nu, lattice_family(nu.grid, spec.lattice.edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE: dict = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
