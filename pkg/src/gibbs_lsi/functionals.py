"""Functions on tensor grids and the functionals built from them.

A :class:`GridFunction` stores values on a :class:`~gibbs_lsi.quadrature.TensorGrid`
(with size-1 axes for sites it does not depend on) together with its partial
derivatives.  The functionals here only need a measure object exposing
``expect_values(array)``; both :class:`~gibbs_lsi.measures.ConditionalMeasure`
and the small :class:`DiscreteMeasure` qualify.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import ConfigError, DegenerateInput, MissingGradient
from .quadrature import TensorGrid

SQRT_FLOOR = 1e-300
"""Lower clamp applied before taking square roots of conditioned ``f**2``."""


# -- grid functions -----------------------------------------------------------

@dataclass(eq=False)
class GridFunction:
    """Values (and partial derivatives) of a function on a tensor grid.

    ``grads`` maps a site to the derivative with respect to that coordinate.
    A site the function does not depend on has derivative zero; a site it
    does depend on but which is missing from ``grads`` raises
    :class:`MissingGradient` on access.
    """

    grid: TensorGrid
    values: np.ndarray
    grads: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.values = self._shape(self.values, "values")
        self.grads = {int(k): self._shape(v, f"gradient {k}") for k, v in self.grads.items()}

    def _shape(self, arr, what):
        arr = np.asarray(arr, dtype=float)
        nd = self.grid.ndim
        if arr.ndim == 0:
            arr = arr.reshape((1,) * nd)
        if arr.ndim != nd:
            raise ConfigError(f"{what} has {arr.ndim} axes, grid has {nd}")
        for a, b in zip(arr.shape, self.grid.shape):
            if a not in (1, b):
                raise ConfigError(f"{what} of shape {arr.shape} does not fit grid {self.grid.shape}")
        return arr

    # -- construction ------------------------------------------------------
    @classmethod
    def constant(cls, grid: TensorGrid, c: float = 1.0, name: str = "") -> "GridFunction":
        return cls(grid, np.full((1,) * grid.ndim, float(c)), {}, name or f"const({c:g})")

    @classmethod
    def on_site(cls, grid: TensorGrid, site: int, basis: "Basis1D") -> "GridFunction":
        x = grid.coord(site)
        return cls(grid, basis.f(x), {site: basis.df(x)}, f"{basis.name}[{site}]")

    @classmethod
    def coordinate(cls, grid: TensorGrid, site: int, power: int = 1) -> "GridFunction":
        return cls.on_site(grid, site, poly_tilt(power, 0.0))

    # -- access --------------------------------------------------------------
    @property
    def support(self) -> tuple:
        out = [s for s, n in zip(self.grid.sites, self.values.shape) if n > 1]
        out += [s for s in self.grads if s not in out and np.any(self.grads[s] != 0)]
        return tuple(sorted(out))

    def depends_on(self, site: int) -> bool:
        if site not in self.grid.sites:
            return False
        return self.values.shape[self.grid.axis(site)] > 1 or (
            site in self.grads and np.any(self.grads[site] != 0))

    def grad(self, site: int) -> np.ndarray:
        if site in self.grads:
            return self.grads[site]
        if not self.depends_on(site):
            return np.zeros((1,) * self.grid.ndim)
        raise MissingGradient(f"no gradient of {self.name or 'function'} for site {site}")

    def _maybe_grad(self, site):
        try:
            return self.grad(site)
        except MissingGradient:
            return None

    def full(self) -> np.ndarray:
        return np.broadcast_to(self.values, self.grid.shape)

    def is_constant(self, atol: float = 0.0) -> bool:
        v = self.values
        return bool(np.ptp(v) <= atol) if v.size else True

    def grad_sq(self, sites: Iterable[int]) -> np.ndarray:
        """``sum_i |grad_i f|**2`` over ``sites`` (unintegrated)."""
        out = np.zeros((1,) * self.grid.ndim)
        for s in sites:
            out = out + self.grad(s) ** 2
        return out

    # -- algebra -------------------------------------------------------------
    def _sites(self, other=None):
        keys = set(self.grads) | set(self.support)
        if other is not None:
            keys |= set(other.grads) | set(other.support)
        return sorted(keys)

    def _check(self, other):
        if other.grid.sites != self.grid.sites or other.grid.shape != self.grid.shape:
            raise ConfigError("functions live on different grids")

    def _combine(self, other, value, grad_rule, name):
        if not isinstance(other, GridFunction):
            c = float(other)
            other = GridFunction.constant(self.grid, c, f"{c:g}")
        self._check(other)
        grads = {}
        for s in self._sites(other):
            ga, gb = self._maybe_grad(s), other._maybe_grad(s)
            if ga is not None and gb is not None:
                grads[s] = grad_rule(ga, gb, other)
        return GridFunction(self.grid, value(other.values), grads, name(other))

    def __add__(self, other):
        return self._combine(other, lambda b: self.values + b, lambda ga, gb, o: ga + gb,
                             lambda o: f"({self.name}+{o.name})")

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if not isinstance(other, GridFunction):
            c = float(other)
            return GridFunction(self.grid, c * self.values,
                                {s: c * g for s, g in self.grads.items()},
                                f"{c:g}*{self.name}")
        return self._combine(other, lambda b: self.values * b,
                             lambda ga, gb, o: ga * o.values + self.values * gb,
                             lambda o: f"{self.name}*{o.name}")

    __rmul__ = __mul__

    def square(self) -> "GridFunction":
        return GridFunction(self.grid, self.values ** 2,
                            {s: 2 * self.values * g for s, g in self.grads.items()},
                            f"({self.name})^2")

    def sqrt(self, floor: float = SQRT_FLOOR) -> "GridFunction":
        """Square root of a nonnegative function, clamped below at ``floor``."""
        if np.any(self.values < -1e-12 * max(1.0, float(np.max(np.abs(self.values))))):
            raise DegenerateInput("square root of a negative function")
        root = np.sqrt(np.maximum(self.values, floor))
        return GridFunction(self.grid, root, {s: g / (2 * root) for s, g in self.grads.items()},
                            f"sqrt({self.name})")

    def renamed(self, name: str) -> "GridFunction":
        return GridFunction(self.grid, self.values, dict(self.grads), name)


# -- one-dimensional basis and families -----------------------------------------

@dataclass(frozen=True)
class Basis1D:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]


def poly_tilt(k: int, beta: float) -> Basis1D:
    """``x**k * exp(-beta x**2)``."""
    def f(x):
        return x ** k * np.exp(-beta * x ** 2)

    def df(x):
        lead = k * x ** (k - 1) if k > 0 else 0.0 * x
        return (lead - 2 * beta * x ** (k + 1)) * np.exp(-beta * x ** 2)

    name = f"x^{k}" if beta == 0 else f"x^{k}*exp({-beta:+g}x^2)"
    return Basis1D(name, f, df)


def even_tilt(beta: float) -> Basis1D:
    return Basis1D(f"exp({-beta:+g}x^2)", lambda x: np.exp(-beta * x ** 2),
                   lambda x: -2 * beta * x * np.exp(-beta * x ** 2))


def exp_tilt(lam: float) -> Basis1D:
    return Basis1D(f"exp({lam:+g}x)", lambda x: np.exp(lam * x),
                   lambda x: lam * np.exp(lam * x))


def bump(center: float, width: float) -> Basis1D:
    def f(x):
        return np.exp(-0.5 * ((x - center) / width) ** 2)

    def df(x):
        return -(x - center) / width ** 2 * f(x)

    return Basis1D(f"bump({center:+g},{width:g})", f, df)


def _default_basis() -> list:
    out = [poly_tilt(k, b) for k in (1, 2, 3, 4) for b in (0.0, 0.5, -0.5)]
    out += [even_tilt(0.5), even_tilt(-0.5)]
    out += [exp_tilt(l) for l in (-1.0, -0.5, -0.25, 0.25, 0.5, 1.0)]
    out += [bump(c, 0.5) for c in (-1.5, -0.75, 0.75, 1.5)]
    return out


FAMILIES = {
    "default": _default_basis,
    "exp": lambda: [exp_tilt(l) for l in (-1.0, -0.5, -0.25, 0.25, 0.5, 1.0)] + [poly_tilt(1, 0.0)],
    "poly": lambda: [poly_tilt(k, b) for k in (1, 2, 3, 4) for b in (0.0, 0.5, -0.5)],
    "bump": lambda: [bump(c, 0.5) for c in (-1.5, -0.75, 0.75, 1.5)],
}


def basis_family(name: str = "default") -> list:
    """Single-site test functions registered under ``name``."""
    try:
        return FAMILIES[name]()
    except KeyError:
        raise ConfigError(f"unknown test family {name!r}; known: {sorted(FAMILIES)}") from None


def _by_name(basis: Sequence[Basis1D]) -> dict:
    return {b.name: b for b in basis}


EDGE_PRODUCTS = (("x^1", "x^1"), ("x^2", "x^2"), ("x^1", "x^3"),
                 ("exp(+0.5x)", "exp(+0.5x)"), ("x^2*exp(-0.5x^2)", "x^2"))


def lattice_family(grid: TensorGrid, edges: Sequence[tuple] = (),
                   name: str = "default", sites: Sequence[int] | None = None) -> list:
    """Test functions for multi-site measures.

    Every single-site basis function on each site of ``sites`` (default: all
    grid sites), products and sums across each edge, and a few functions of
    all sites.
    """
    basis = basis_family(name)
    sites = tuple(grid.sites if sites is None else sites)
    out = [GridFunction.on_site(grid, s, b) for s in sites for b in basis]
    table = _by_name(_default_basis())
    for i, j in edges:
        if i not in grid.sites or j not in grid.sites:
            continue
        for a, b in EDGE_PRODUCTS:
            out.append(GridFunction.on_site(grid, i, table[a]) *
                       GridFunction.on_site(grid, j, table[b]))
        xi, xj = GridFunction.coordinate(grid, i), GridFunction.coordinate(grid, j)
        out.append((xi + xj).renamed(f"x[{i}]+x[{j}]"))
        out.append((xi.square() + 0.5 * xj.square()).renamed(f"x[{i}]^2+0.5x[{j}]^2"))
    if len(grid.sites) > 1:
        coords = [GridFunction.coordinate(grid, s) for s in grid.sites]
        total = coords[0]
        sq = coords[0].square()
        prod = 1.0 + 0.5 * coords[0].square()
        for c in coords[1:]:
            total = total + c
            sq = sq + c.square()
            prod = prod * (1.0 + 0.5 * c.square())
        tilt = GridFunction(grid, np.exp(0.25 * total.values),
                            {s: 0.25 * np.exp(0.25 * total.values) for s in grid.sites},
                            "exp(0.25 sum x)")
        out += [total.renamed("sum x"), sq.renamed("sum x^2"),
                prod.renamed("prod(1+0.5x^2)"), tilt]
    return out


def random_functions(grid: TensorGrid, n: int, rng: np.random.Generator,
                     terms: int = 3) -> list:
    """``n`` random sums of products of smooth basis functions over all sites."""
    pool = [poly_tilt(1, 0.0), poly_tilt(2, 0.0), poly_tilt(1, 0.5), poly_tilt(3, 0.5),
            even_tilt(0.5), exp_tilt(0.5), exp_tilt(-0.5), bump(0.75, 0.5), bump(-0.75, 0.5)]
    out = []
    for k in range(n):
        f = GridFunction.constant(grid, float(rng.normal()))
        for _ in range(terms):
            term = GridFunction.constant(grid, float(rng.normal()))
            for s in grid.sites:
                term = term * GridFunction.on_site(grid, s, pool[int(rng.integers(len(pool)))])
            f = f + term
        out.append(f.renamed(f"random[{k}]"))
    return out


# -- measures and functionals ---------------------------------------------------

class DiscreteMeasure:
    """A probability vector on finitely many atoms."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError("weights must be a nonnegative, nonzero vector")
        self.weights = w / w.sum()

    def expect_values(self, values) -> float:
        return float(np.dot(self.weights, np.broadcast_to(np.asarray(values, float),
                                                          self.weights.shape)))


def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


def _scalar(x):
    x = np.asarray(x)
    return x.item() if x.size == 1 else x


def mean(mu, f):
    return _scalar(mu.expect_values(_vals(f)))


def entropy(mu, f):
    """``Ent_mu(f**2) = mu(f**2 log(f**2 / mu f**2))`` with ``0 log 0 = 0``."""
    f2 = _vals(f) ** 2
    m = mu.expect_values(f2)
    if np.any(np.asarray(m) <= 0):
        raise DegenerateInput("mu(f^2) = 0: entropy undefined")
    ent = mu.expect_values(xlogy(f2, f2 / m))
    return _scalar(np.maximum(ent, 0.0))


def variance(mu, f):
    v = _vals(f)
    m = mu.expect_values(v)
    return _scalar(np.maximum(mu.expect_values((v - m) ** 2), 0.0))


def dirichlet(mu, f: GridFunction, sites: Iterable[int]):
    """``sum_{i in sites} mu |grad_i f|**2``."""
    return _scalar(mu.expect_values(f.grad_sq(sites)))


def covariance(mu, f, h):
    a, b = _vals(f), _vals(h)
    return _scalar(mu.expect_values(a * b) - mu.expect_values(a) * mu.expect_values(b))


def entropic_bound(mu, u, v, t: float) -> tuple:
    """Both sides of ``mu(u v) <= log mu(exp(t u)) / t + mu(v log v) / t``.

    ``v`` is normalized to ``mu(v) = 1`` first; the exponential moment is
    evaluated in log space.
    """
    if t <= 0:
        raise ConfigError("t must be positive")
    u, v = _vals(u), _vals(v)
    if np.any(v < 0):
        raise DegenerateInput("v must be nonnegative")
    mv = mu.expect_values(v)
    if np.any(np.asarray(mv) <= 0):
        raise DegenerateInput("mu(v) = 0")
    v = v / mv
    tu = t * u
    top = np.max(tu)
    log_mgf = np.log(mu.expect_values(np.exp(tu - top))) + top
    lhs = mu.expect_values(u * v)
    rhs = log_mgf / t + mu.expect_values(xlogy(v, v)) / t
    return _scalar(lhs), _scalar(rhs)


@dataclass(frozen=True)
class CovarianceBound:
    """``|mu(f^2; h)|`` and the right-hand side without the constant."""

    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs <= 1e-14 else math.inf


def covariance_bound_check(mu, f, h) -> CovarianceBound:
    """Both sides of
    ``|mu(f^2; h)| <= c0 (mu f^2)^(1/2) (mu(|f - mu f|^2 (|h|^2 + mu|h|^2)))^(1/2)``.
    """
    fv, hv = _vals(f), _vals(h)

    def centered(a):
        # deviations at rounding level are zeroed so constants give exact 0
        d = a - mu.expect_values(a)
        return np.where(np.abs(d) <= 1e-12 * np.max(np.abs(a), initial=0.0), 0.0, d)

    lhs = abs(float(mu.expect_values(centered(fv ** 2) * centered(hv))))
    h2 = hv ** 2
    inner = mu.expect_values(centered(fv) ** 2 * (h2 + mu.expect_values(h2)))
    rhs = math.sqrt(float(mu.expect_values(fv ** 2)) * max(float(inner), 0.0))
    return CovarianceBound(lhs, rhs)


# -- constant ledger -------------------------------------------------------------

LEDGER_NAMES = ("c", "c_SG", "C", "D1", "D2", "D3", "R1", "R2", "C1", "C2", "G1", "G2",
                "m0", "c0", "zeta", "M", "N", "A", "B")


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    value: float
    method: str
    resolution: str = ""
    engine: str = "exact"
    family_size: int = 0
    slack: float | None = None


class ConstantLedger:
    """Measured constants with provenance.

    Fitted constants are empirical suprema over a finite test family, hence
    lower bounds on the best constants.
    """

    header = ["name", "value", "method", "family_size", "resolution", "engine", "slack"]

    def __init__(self):
        self._entries: dict = {}

    def record(self, name: str, value: float, method: str, *, resolution: str = "",
               engine: str = "exact", family_size: int = 0, slack: float | None = None):
        if name not in LEDGER_NAMES:
            raise ConfigError(f"unknown ledger constant {name!r}")
        self._entries[name] = LedgerEntry(name, float(value), method, resolution, engine,
                                          family_size, slack)

    def __contains__(self, name):
        return name in self._entries

    def __getitem__(self, name) -> float:
        return self._entries[name].value

    def entry(self, name) -> LedgerEntry:
        return self._entries[name]

    def names(self) -> list:
        return [n for n in LEDGER_NAMES if n in self._entries]

    def rows(self) -> list:
        out = []
        for n in self.names():
            e = self._entries[n]
            out.append([n, f"{e.value:.10g}", e.method, e.family_size, e.resolution, e.engine,
                        "" if e.slack is None else f"{e.slack:.6g}"])
        return out
