"""Truncated one-dimensional rules and their tensor products.

Every site of the lattice carries its own :class:`Grid1D`.  A
:class:`TensorGrid` is the product over a finite list of sites; axis ``k`` of
any array living on the grid corresponds to ``sites[k]``.  Arrays are allowed
to have size-1 axes for sites they do not depend on, so a function of one
site costs ``n`` numbers instead of ``n**len(sites)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, EvaluationError, FeasibilityError

DEFAULT_NODES = 128
DEFAULT_PANEL_POINTS = 8
MAX_SITES = 4
MAX_TOTAL_NODES = 2**22


@dataclass(frozen=True)
class Grid1D:
    """Nodes and positive weights on ``[-L, L]``.

    ``edges`` holds the cell boundaries for the midpoint rule (one cell per
    node) and the panel boundaries for the Gauss rule.
    """

    L: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    rule: str = "gauss"
    edges: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ConfigError("nodes and weights must be 1-D arrays of equal length")
        if np.any(self.weights <= 0):
            raise ConfigError("quadrature weights must be positive")
        if np.any(self.nodes == 0.0):
            raise ConfigError("grid may not place a node at the origin")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def refined(self) -> "Grid1D":
        """Same rule and truncation with twice as many nodes."""
        if self.rule == "midpoint":
            return midpoint_grid(self.L, 2 * self.size)
        per_panel = self.size // (len(self.edges) - 1)
        return gauss_legendre_grid(self.L, 2 * self.size, per_panel)


def gauss_legendre_grid(L: float, n_nodes: int = DEFAULT_NODES,
                        panel_points: int = DEFAULT_PANEL_POINTS) -> Grid1D:
    """Composite Gauss-Legendre rule with ``panel_points`` nodes per panel.

    The number of panels must be even so that the origin is a panel edge;
    integrands containing ``|x|`` are then smooth on every panel.
    """
    if L <= 0:
        raise ConfigError(f"truncation radius must be positive, got {L}")
    if n_nodes % panel_points:
        raise ConfigError(f"n_nodes={n_nodes} is not a multiple of {panel_points}")
    panels = n_nodes // panel_points
    if panels % 2:
        raise ConfigError(f"need an even number of panels, got {panels}")
    t, w = leggauss(panel_points)
    edges = np.linspace(-L, L, panels + 1)
    edges[panels // 2] = 0.0
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (lo + hi) + 0.5 * (hi - lo) * t).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return Grid1D(float(L), nodes, weights, "gauss", edges)


def midpoint_grid(L: float, n_nodes: int = DEFAULT_NODES) -> Grid1D:
    """Midpoint rule on ``n_nodes`` equal cells; ``n_nodes`` must be even."""
    if L <= 0:
        raise ConfigError(f"truncation radius must be positive, got {L}")
    if n_nodes % 2:
        raise ConfigError("midpoint grids need an even node count to avoid x=0")
    edges = np.linspace(-L, L, n_nodes + 1)
    nodes = 0.5 * (edges[:-1] + edges[1:])
    weights = np.diff(edges)
    return Grid1D(float(L), nodes, weights, "midpoint", edges)


@dataclass(frozen=True)
class TensorGrid:
    """Product grid over an ordered list of sites."""

    sites: tuple
    grids: tuple

    def __post_init__(self):
        if len(self.sites) != len(self.grids):
            raise ConfigError("one Grid1D per site is required")
        if len(set(self.sites)) != len(self.sites):
            raise ConfigError("duplicate site in tensor grid")

    @classmethod
    def uniform(cls, sites: Sequence[int], grid: Grid1D, *,
                max_sites: int = MAX_SITES,
                max_nodes: int = MAX_TOTAL_NODES) -> "TensorGrid":
        sites = tuple(int(s) for s in sites)
        if len(sites) > max_sites:
            raise FeasibilityError(
                f"{len(sites)} sites exceed the exact-engine limit of {max_sites}; "
                "use the sampler engine")
        if grid.size ** len(sites) > max_nodes:
            raise FeasibilityError(
                f"{grid.size}**{len(sites)} nodes exceed the memory guard "
                f"({max_nodes}); lower nodes_per_site or use the sampler engine")
        return cls(sites, (grid,) * len(sites))

    @property
    def ndim(self) -> int:
        return len(self.sites)

    @property
    def shape(self) -> tuple:
        return tuple(g.size for g in self.grids)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def axis(self, site: int) -> int:
        return self.sites.index(site)

    def _along(self, site: int, values: np.ndarray) -> np.ndarray:
        shape = [1] * self.ndim
        shape[self.axis(site)] = -1
        return values.reshape(shape)

    def coord(self, site: int) -> np.ndarray:
        """Node coordinates of ``site`` shaped to broadcast along its axis."""
        return self._along(site, self.grids[self.axis(site)].nodes)

    def log_weight(self, site: int) -> np.ndarray:
        return self._along(site, self.grids[self.axis(site)].log_weights)

    def weights(self) -> np.ndarray:
        """Full array of product weights."""
        out = np.ones(self.shape)
        for s in self.sites:
            out = out * self._along(s, self.grids[self.axis(s)].weights)
        return out

    def node_at(self, index: tuple) -> dict:
        return {s: float(g.nodes[i]) for s, g, i in zip(self.sites, self.grids, index)}


def integrate(f, grid: TensorGrid | Grid1D) -> float:
    """Weighted sum of ``f`` over the nodes of ``grid``.

    ``f`` may be an array (broadcastable to the grid), an object with a
    ``values`` attribute, or a callable taking one coordinate array per site.
    """
    if isinstance(grid, Grid1D):
        grid = TensorGrid((0,), (grid,))
    if callable(f):
        values = np.asarray(f(*(grid.coord(s) for s in grid.sites)), dtype=float)
    else:
        values = np.asarray(getattr(f, "values", f), dtype=float)
    values = np.broadcast_to(values, grid.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise EvaluationError(f"non-finite integrand at node {grid.node_at(idx)}")
    return float(np.sum(values * grid.weights()))


def choose_truncation(phase, tol: float, *, tilt_log_bound: float = 0.0,
                      step: float = 0.01) -> float:
    """Smallest radius ``L`` with ``exp(-phi(L)) * tilt < tol * exp(-phi(0))``.

    ``tilt_log_bound`` bounds the log of the largest factor by which an
    interaction can raise the single-site density; negative values are
    clamped to zero so interactions never shrink the box.  The result is
    rounded up to a multiple of ``step``.
    """
    if not 0.0 < tol < 1.0:
        raise ConfigError(f"tol must lie in (0, 1), got {tol}")
    if phase.alpha <= 0 or phase.p <= 0:
        raise ConfigError("phase is not confining (alpha and p must be positive)")
    target = math.log(1.0 / tol) + max(0.0, tilt_log_bound)
    L = (target / phase.alpha) ** (1.0 / phase.p)
    return math.ceil(L / step - 1e-9) * step


def grid_for_phase(phase, tol: float = 1e-16, n_nodes: int = DEFAULT_NODES, *,
                   rule: str = "gauss", L: float | None = None,
                   tilt_log_bound: float = 0.0) -> Grid1D:
    """Convenience constructor used throughout the package."""
    if L is None:
        L = choose_truncation(phase, tol, tilt_log_bound=tilt_log_bound)
    if rule == "gauss":
        return gauss_legendre_grid(L, n_nodes)
    if rule == "midpoint":
        return midpoint_grid(L, n_nodes)
    raise ConfigError(f"unknown quadrature rule {rule!r}")


def exact_nodes_per_site(n_sites: int, requested: int | None = None,
                         max_nodes: int = MAX_TOTAL_NODES) -> int:
    """Largest node count (multiple of 16) allowed by the memory guard."""
    cap = DEFAULT_NODES if requested is None else requested
    n = cap
    while n > 16 and n ** n_sites > max_nodes:
        n -= 16
    return n


def evaluate_on(grid: TensorGrid, func: Callable[..., np.ndarray]) -> np.ndarray:
    return np.asarray(func(*(grid.coord(s) for s in grid.sites)), dtype=float)
