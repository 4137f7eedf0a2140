"""Local Hamiltonians, conditional measures and the periodic Gibbs proxy.

A :class:`ConditionalMeasure` lives on a :class:`~gibbs_lsi.quadrature.TensorGrid`
whose sites are split into the integrated region ``M`` and the retained sites.
Its log-density is stored over the axes it depends on and is normalized along
the axes of ``M``, so ``expect`` maps a function of all grid sites to a
function of the retained ones.  On the full periodic torus with ``M`` equal
to every site this is the Gibbs proxy; conditionals of the proxy on smaller
blocks reuse the same grid and are the exact conditionals of the discrete
joint measure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, EvaluationError, FeasibilityError
from .functionals import GridFunction
from .model import ModelSpec
from .quadrature import (MAX_SITES, MAX_TOTAL_NODES, Grid1D, TensorGrid,
                         exact_nodes_per_site, grid_for_phase)

DEFAULT_TOL = 1e-16


@dataclass(frozen=True)
class Hamiltonian:
    """``H`` of ``region`` with the sites outside it pinned by ``omega``."""

    spec: ModelSpec
    region: tuple
    omega: Mapping = field(default_factory=dict)

    def shell(self) -> tuple:
        lat = self.spec.lattice
        inside = set(self.region)
        return tuple(sorted({j for i in self.region for j in lat.neighbors(i)} - inside))

    def _z(self, coords: Mapping) -> dict:
        z = dict(self.omega)
        z.update(coords)
        missing = [s for s in self.region + self.shell() if s not in z]
        if missing:
            raise ConfigError(f"no value for sites {missing} (region or its neighbor shell)")
        return z

    def __call__(self, coords: Mapping):
        return self.spec.local_energy(self.region, self._z(coords))

    def grad(self, coords: Mapping, site: int):
        return self.spec.local_energy_grad(self.region, self._z(coords), site)


class ConditionalMeasure:
    """Quadrature representation of the conditional measure of ``region``.

    Parameters
    ----------
    spec : ModelSpec
    grid : TensorGrid
        Must contain every site of ``region``; the other grid sites are the
        retained (conditioning) coordinates.
    region : sequence of int
    omega : mapping, optional
        Values of the neighbor-shell sites that are not grid sites.
    """

    def __init__(self, spec: ModelSpec, grid: TensorGrid, region: Sequence[int],
                 omega: Mapping | None = None):
        self.spec = spec
        self.grid = grid
        self.region = tuple(sorted(int(s) for s in region))
        if not self.region or not set(self.region) <= set(grid.sites):
            raise ConfigError("region must be a nonempty subset of the grid sites")
        self.omega = {int(k): float(v) for k, v in (omega or {}).items()
                      if int(k) not in grid.sites}
        self.retained = tuple(s for s in grid.sites if s not in self.region)
        self.axes = tuple(grid.axis(s) for s in self.region)
        self.hamiltonian = Hamiltonian(spec, self.region, self.omega)
        with np.errstate(over="ignore", invalid="ignore"):
            energy = np.asarray(self.hamiltonian(self._coords()), dtype=float)
        logw = sum(grid.log_weight(s) for s in self.region)
        logd = logw - energy
        if np.any(np.isnan(logd)):
            idx = tuple(int(i) for i in np.argwhere(np.isnan(
                np.broadcast_to(logd, np.broadcast_shapes(logd.shape, grid.shape))))[0])
            raise EvaluationError(f"NaN in the Hamiltonian at node {grid.node_at(idx)}")
        self.log_z = logsumexp(logd, axis=self.axes, keepdims=True)
        self.logp = logd - self.log_z
        self.prob = np.exp(self.logp)
        self._grad_cache: dict = {}

    def _coords(self) -> dict:
        return {s: self.grid.coord(s) for s in self.grid.sites}

    @property
    def is_full(self) -> bool:
        return not self.retained

    @property
    def logZ(self):
        lz = self.log_z
        return lz.item() if lz.size == 1 else lz

    def sub(self, region: Sequence[int]) -> "ConditionalMeasure":
        """Conditional measure of a smaller region on the same grid."""
        if not set(region) <= set(self.region):
            raise ConfigError("sub-region must lie inside the region")
        return ConditionalMeasure(self.spec, self.grid, region, self.omega)

    # -- integration ---------------------------------------------------------
    def expect_values(self, values) -> np.ndarray:
        """Integrate an array over the region axes (kept as size-1 axes)."""
        values = np.asarray(values, dtype=float)
        if values.ndim != self.grid.ndim:
            raise ConfigError(f"array with {values.ndim} axes on a {self.grid.ndim}-site grid")
        return np.sum(self.prob * values, axis=self.axes, keepdims=True)

    def expect(self, f):
        """``E f``: a float when nothing is retained, else a :class:`GridFunction`
        of the retained coordinates (values only)."""
        out = self.expect_values(f.values if isinstance(f, GridFunction) else f)
        if self.is_full:
            return out.item()
        return GridFunction(self.grid, out, {}, f"E[{getattr(f, 'name', '')}]")

    def mean(self, f) -> float:
        out = self.expect_values(f.values if isinstance(f, GridFunction) else f)
        if out.size != 1:
            raise ConfigError("mean() needs a measure over every grid site")
        return out.item()

    def energy_grad(self, site: int) -> np.ndarray:
        """Derivative of the region Hamiltonian in a grid coordinate."""
        if site not in self._grad_cache:
            g = np.asarray(self.hamiltonian.grad(self._coords(), site), dtype=float)
            if g.ndim < self.grid.ndim:
                g = g.reshape((1,) * self.grid.ndim)
            self._grad_cache[site] = g
        return self._grad_cache[site]

    def condition(self, f: GridFunction, sites: Sequence[int] | None = None) -> GridFunction:
        """``E f`` with derivatives in the retained coordinates.

        For a retained site ``k`` the derivative is
        ``E(grad_k f) - Cov(f, grad_k H)``, from differentiating the density.
        """
        sites = self.retained if sites is None else tuple(sites)
        val = self.expect_values(f.values)
        grads = {}
        for k in sites:
            if k in self.region:
                continue
            dH = self.energy_grad(k)
            term = self.expect_values(f.grad(k))
            if np.any(dH != 0):
                cov = self.expect_values(f.values * dH) - val * self.expect_values(dH)
                term = term - cov
            grads[k] = term
        return GridFunction(self.grid, val, grads, f"E[{f.name}]")


def _grid_for(spec: ModelSpec, n_sites: int, n_nodes: int | None, tol: float,
              rule: str, L: float | None, max_nodes: int) -> Grid1D:
    n = exact_nodes_per_site(n_sites, n_nodes, max_nodes) if n_nodes is None else n_nodes
    return grid_for_phase(spec.phase, tol, n, rule=rule, L=L)


def build_conditional(spec: ModelSpec, region: Sequence[int], omega: Mapping | None = None,
                      *, n_nodes: int | None = None, tol: float = DEFAULT_TOL,
                      rule: str = "gauss", L: float | None = None,
                      max_sites: int = MAX_SITES,
                      max_nodes: int = MAX_TOTAL_NODES) -> ConditionalMeasure:
    """Conditional measure of ``region`` given ``omega`` on its neighbor shell."""
    region = tuple(sorted(int(s) for s in region))
    grid1 = _grid_for(spec, len(region), n_nodes, tol, rule, L, max_nodes)
    grid = TensorGrid.uniform(region, grid1, max_sites=max_sites, max_nodes=max_nodes)
    omega = dict(omega or {})
    shell = Hamiltonian(spec, region).shell()
    missing = [j for j in shell if j not in omega]
    if missing:
        raise ConfigError(f"boundary condition missing for sites {missing}")
    if not all(np.isfinite(float(omega[j])) for j in shell):
        raise ConfigError("boundary condition must be finite")
    return ConditionalMeasure(spec, grid, region, omega)


def build_gibbs_proxy(spec: ModelSpec, *, n_nodes: int | None = None,
                      tol: float = DEFAULT_TOL, rule: str = "gauss", L: float | None = None,
                      max_sites: int = MAX_SITES,
                      max_nodes: int = MAX_TOTAL_NODES) -> ConditionalMeasure:
    """Periodic-torus measure on the full tensor grid (exact engine).

    Raises :class:`FeasibilityError` when the torus is too large; use the
    sampler in :mod:`gibbs_lsi.dynamics` instead.
    """
    sites = tuple(range(spec.lattice.n_sites))
    if len(sites) > max_sites:
        raise FeasibilityError(
            f"{len(sites)}-site torus exceeds the exact-engine limit of {max_sites} sites; "
            "use --engine mcmc")
    grid1 = _grid_for(spec, len(sites), n_nodes, tol, rule, L, max_nodes)
    grid = TensorGrid.uniform(sites, grid1, max_sites=max_sites, max_nodes=max_nodes)
    return ConditionalMeasure(spec, grid, sites, {})


def single_site(spec: ModelSpec, site: int, omegas: Sequence[float], *,
                n_nodes: int = 128, tol: float = DEFAULT_TOL, rule: str = "gauss",
                L: float | None = None) -> ConditionalMeasure:
    """Conditional measure at ``site`` with its neighbors (sorted) at ``omegas``."""
    nbrs = spec.lattice.neighbors(site)
    if len(omegas) != len(nbrs):
        raise ConfigError(f"site {site} has {len(nbrs)} neighbors, got {len(omegas)} values")
    return build_conditional(spec, (site,), dict(zip(nbrs, omegas)), n_nodes=n_nodes,
                             tol=tol, rule=rule, L=L)


def expectation(mu: ConditionalMeasure, f, partial: bool = False):
    """``E f``; with ``partial=True`` always return a :class:`GridFunction`."""
    if isinstance(f, Callable) and not isinstance(f, GridFunction):
        f = GridFunction(mu.grid, np.asarray(f(*(mu.grid.coord(s) for s in mu.grid.sites)),
                                             dtype=float))
    if partial:
        return GridFunction(mu.grid, mu.expect_values(f.values if isinstance(f, GridFunction)
                                                      else f))
    return mu.expect(f)


def dlr_check(spec: ModelSpec, region: Sequence[int], sub: Sequence[int],
              omega: Mapping | None, f, *, n_nodes: int | None = None,
              tol: float = DEFAULT_TOL, measure: ConditionalMeasure | None = None) -> float:
    """``|E^region(E^sub f) - E^region f|`` on a shared tensor grid.

    ``f`` may be a :class:`GridFunction` on the region grid or a callable of
    one coordinate array per region site.
    """
    if not set(sub) <= set(region):
        raise ConfigError("sub-region must be contained in the region")
    mu = measure or build_conditional(spec, region, omega, n_nodes=n_nodes, tol=tol)
    if callable(f) and not isinstance(f, GridFunction):
        f = GridFunction(mu.grid, np.asarray(f(*(mu.grid.coord(s) for s in mu.grid.sites)),
                                             dtype=float))
    inner = mu.sub(sub)
    nested = mu.mean(inner.expect_values(f.values))
    return abs(nested - mu.mean(f))
