"""Empirical estimates of the constants in the inequality chain.

All fitted constants are suprema over a finite test family and therefore
lower bounds on the best constants.

Single-site quantities are evaluated for a whole batch of boundary values at
once (:class:`SiteBatch`): every single-site measure shares the same nodes,
so family values are plain vectors and expectations are matrix products.
Multi-site quantities use the exact tensor-grid torus measure from
:func:`gibbs_lsi.measures.build_gibbs_proxy`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, xlogy

from .errors import DegenerateInput, DivergenceError, OutOfRange
from .functionals import GridFunction, basis_family
from .measures import ConditionalMeasure
from .model import ModelSpec
from .quadrature import grid_for_phase

K1_CAP = 10.0
K2_GRID = np.concatenate([[0.0], np.geomspace(1e-10, 1.0, 401)])
ZERO_TOL = 1e-13


# -- boundary-value grids ------------------------------------------------------

@dataclass(frozen=True)
class OmegaGrid:
    """Boundary values ``-omega_max, ..., omega_max`` with spacing ``step``.

    ``tuples(k)`` is the product grid over ``k`` neighbors, or the diagonal
    (all neighbors equal) when the product exceeds ``max_tuples``.
    """

    omega_max: float = 3.0
    step: float = 0.5
    max_tuples: int = 5000

    def values(self) -> np.ndarray:
        n = int(round(self.omega_max / self.step))
        return self.step * np.arange(-n, n + 1)

    def tuples(self, degree: int) -> np.ndarray:
        vals = self.values()
        if len(vals) ** degree <= self.max_tuples:
            return np.array(list(itertools.product(vals, repeat=degree)))
        return np.repeat(vals[:, None], degree, axis=1)

    def refined(self) -> "OmegaGrid":
        return OmegaGrid(self.omega_max, self.step / 2, self.max_tuples * 4)

    def describe(self) -> str:
        return f"|omega|<={self.omega_max:g} step {self.step:g}"


class SiteBatch:
    """Single-site conditional measures for a batch of boundary tuples.

    Row ``t`` of ``prob`` is the measure at site ``site`` with its sorted
    neighbors at ``tuples[t]``.
    """

    def __init__(self, spec: ModelSpec, tuples: np.ndarray, *, site: int = 0,
                 n_nodes: int = 128, rule: str = "gauss", L: float | None = None,
                 tol: float = 1e-16):
        self.spec = spec
        self.site = site
        self.tuples = np.atleast_2d(np.asarray(tuples, dtype=float))
        self.grid = grid_for_phase(spec.phase, tol, n_nodes, rule=rule, L=L)
        x = self.grid.nodes
        self.x = x
        cols = [self.tuples[:, c:c + 1] for c in range(self.tuples.shape[1])]
        energy = spec.site_energy(x[None, :], cols)
        logd = self.grid.log_weights[None, :] - energy
        self.log_z = logsumexp(logd, axis=1)
        self.logp = logd - self.log_z[:, None]
        self.prob = np.exp(self.logp)

    def __len__(self):
        return len(self.tuples)

    def expect(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return self.prob @ values
        return np.sum(self.prob * values, axis=-1)

    def family(self, name: str = "default") -> list:
        out = []
        for b in basis_family(name):
            out.append((b.name, b.f(self.x), b.df(self.x)))
        return out

    def stiffness(self, t: int) -> tuple:
        """Three-point flux discretization of the Dirichlet form of row ``t``.

        Returns ``(diag, off, log_mass)`` of the matrix ``K`` with
        ``u^T K u ~ E |u'|^2``; the mass matrix is ``diag(exp(log_mass))``.
        Edge conductances use the geometric mean of neighboring densities.
        """
        x, logw, logm = self.x, self.grid.log_weights, self.logp[t]
        logrho = logm - logw
        dx = np.diff(x)
        cond = np.exp(0.5 * (logrho[:-1] + logrho[1:])) / dx
        diag = np.zeros_like(x)
        diag[:-1] += cond
        diag[1:] += cond
        return diag, -cond, logm

    def generator_gap(self, t: int) -> float:
        """Smallest nonzero eigenvalue of the discretized generator of row ``t``."""
        diag, off, logm = self.stiffness(t)
        keep = logm > logm.max() - 46.0    # mass ratio 1e-20
        lo, hi = np.argmax(keep), len(keep) - np.argmax(keep[::-1])
        d, o, lm = diag[lo:hi].copy(), off[lo:hi - 1], logm[lo:hi]
        # boundary conductances to the dropped nodes are removed (Neumann closure)
        if lo > 0:
            d[0] += off[lo - 1]
        if hi < len(diag):
            d[-1] += off[hi - 1]
        scale = np.exp(-0.5 * lm)
        sd = d * scale ** 2
        so = o * scale[:-1] * scale[1:]
        w = eigh_tridiagonal(sd, so, eigvals_only=True, select="i", select_range=(0, 1))
        return float(w[1])


def _sanitize_ratio(num, den):
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape))
    pos = den > 0
    out = np.where(pos, num / np.where(pos, den, 1.0), out)
    out = np.where(~pos & (num > ZERO_TOL), np.inf, out)
    return out


# -- single-site LS / SG -------------------------------------------------------

@dataclass
class LSEstimate:
    tuples: np.ndarray
    c_ls: np.ndarray
    c_sg: np.ndarray
    c_sg_eig: np.ndarray
    argmax_ls: list
    family_size: int
    resolution: str

    @property
    def c(self) -> float:
        return float(np.max(self.c_ls))

    @property
    def c_SG(self) -> float:
        return float(np.max(self.c_sg))

    @property
    def c_SG_eig(self) -> float:
        return float(np.max(self.c_sg_eig))

    header = ["omega", "c_LS_lower", "c_SG_lower", "c_SG_eig", "argmax_LS"]

    def rows(self) -> list:
        return [["(" + ",".join(f"{v:g}" for v in w) + ")", f"{a:.10g}", f"{b:.10g}",
                 f"{e:.10g}", n]
                for w, a, b, e, n in zip(self.tuples, self.c_ls, self.c_sg, self.c_sg_eig,
                                         self.argmax_ls)]


def estimate_ls_sg(spec: ModelSpec, omega: OmegaGrid | np.ndarray | None = None,
                   family: str | list = "default", *, n_nodes: int = 128,
                   eig: bool = True, batch: SiteBatch | None = None) -> LSEstimate:
    """Single-site LS and SG lower estimates at every boundary tuple.

    ``c_LS_lower(omega)`` is the larger of ``max Ent/Dir`` and
    ``2 max Var/Dir`` over the family (the second term is the small-tilt
    limit of the entropy ratio, so the LS estimate never falls below twice
    the SG estimate).  ``c_SG_eig`` is ``1/lambda_1`` of the discretized
    generator and serves as a cross-check.
    """
    if batch is None:
        tuples = _tuples(spec, omega)
        batch = SiteBatch(spec, tuples, n_nodes=n_nodes)
    fam = batch.family(family) if isinstance(family, str) else family
    T = len(batch)
    c_ls = np.zeros(T)
    c_sg = np.zeros(T)
    best = [""] * T
    used = 0
    for name, f, df in fam:
        dirich = batch.expect(df ** 2)
        if np.all(dirich <= ZERO_TOL):
            continue
        used += 1
        f2 = f ** 2
        m2 = batch.expect(f2)
        ent = np.maximum(np.sum(batch.prob * xlogy(f2[None, :], f2[None, :] / m2[:, None]),
                                axis=1), 0.0)
        m1 = batch.expect(f)
        var = np.maximum(m2 - m1 ** 2, 0.0)
        r_ent = _sanitize_ratio(ent, dirich)
        r_var = _sanitize_ratio(var, dirich)
        cand = np.maximum(r_ent, 2 * r_var)
        upd = cand > c_ls
        for t in np.nonzero(upd)[0]:
            best[t] = name
        c_ls = np.maximum(c_ls, cand)
        c_sg = np.maximum(c_sg, r_var)
    if used == 0:
        raise DegenerateInput("test family contains only constants")
    c_eig = np.array([1.0 / batch.generator_gap(t) for t in range(T)]) if eig else np.full(T, np.nan)
    return LSEstimate(batch.tuples, c_ls, c_sg, c_eig, best, used,
                      f"{batch.grid.size} nodes, L={batch.grid.L:g}")


def _tuples(spec, omega):
    if omega is None:
        omega = OmegaGrid()
    if isinstance(omega, OmegaGrid):
        return omega.tuples(spec.lattice.degree)
    return np.atleast_2d(np.asarray(omega, dtype=float))


def product_ls(spec: ModelSpec, tuples_a, tuples_b, family: str = "default",
               n_nodes: int = 64) -> tuple:
    """LS estimates of two single-site measures and of their product.

    The product lives on two independent copies of the site grid; its family
    is the lifted single-site functions plus all pairwise products.  Returns
    ``(c_a, c_b, c_product)``.
    """
    a = SiteBatch(spec, np.atleast_2d(tuples_a), n_nodes=n_nodes)
    b = SiteBatch(spec, np.atleast_2d(tuples_b), n_nodes=n_nodes)
    ca = estimate_ls_sg(spec, family=family, batch=a, eig=False).c
    cb = estimate_ls_sg(spec, family=family, batch=b, eig=False).c
    pa, pb = a.prob[0], b.prob[0]
    fa, fb = a.family(family), b.family(family)
    one = (" 1", np.ones_like(a.x), np.zeros_like(a.x))
    best = 0.0
    for (na, f1, d1), (nb, f2, d2) in itertools.product(fa + [one], fb + [one]):
        F = np.outer(f1, f2)
        dir_ = pa @ (np.outer(d1, f2) ** 2) @ pb + pa @ (np.outer(f1, d2) ** 2) @ pb
        if dir_ <= ZERO_TOL:
            continue
        F2 = F ** 2
        m2 = pa @ F2 @ pb
        ent = max(pa @ xlogy(F2, F2 / m2) @ pb, 0.0)
        var = max(m2 - (pa @ F @ pb) ** 2, 0.0)
        best = max(best, ent / dir_, 2 * var / dir_)
    return ca, cb, best


# -- U-bound ---------------------------------------------------------------------

@dataclass
class UBoundResult:
    r: float
    tuples: np.ndarray
    profile: np.ndarray
    reference: np.ndarray
    family_size: int
    resolution: str

    @property
    def C(self) -> float:
        return float(np.max(self.profile))

    @property
    def C_reference(self) -> float:
        return float(np.max(self.reference))

    @property
    def flatness(self) -> float:
        """Relative spread ``(max - min) / max`` of the profile."""
        return float((self.profile.max() - self.profile.min()) / self.profile.max())


def ubound_constant(spec: ModelSpec, r: float, omega: OmegaGrid | np.ndarray | None = None,
                    family: str = "default", *, n_nodes: int = 128,
                    reference: bool = True) -> UBoundResult:
    """Smallest ``C`` with ``E(d^r f^2) <= C E|f'|^2 + C E f^2`` over the family.

    ``reference`` adds the best constant over all grid functions from the
    generalized eigenproblem ``diag(d^r m) u = C (K + diag(m)) u``.
    """
    pmax = 2 * (spec.phase.p - 1)
    if not 0 <= r <= pmax:
        raise OutOfRange(f"r={r:g} outside [0, 2(p-1)] = [0, {pmax:g}]")
    batch = SiteBatch(spec, _tuples(spec, omega), n_nodes=n_nodes)
    fam = basis_family(family)
    dr = np.abs(batch.x) ** r
    prof = np.zeros(len(batch))
    fam_vals = [("1", np.ones_like(batch.x), np.zeros_like(batch.x))] + batch.family(family)
    for name, f, df in fam_vals:
        num = batch.expect(dr * f ** 2)
        den = batch.expect(df ** 2) + batch.expect(f ** 2)
        prof = np.maximum(prof, _sanitize_ratio(num, den))
    ref = np.full(len(batch), np.nan)
    if reference:
        for t in range(len(batch)):
            diag, off, logm = batch.stiffness(t)
            m = np.exp(logm)
            K = np.diag(diag + m) + np.diag(off, 1) + np.diag(off, -1)
            w = scipy.linalg.eigh(np.diag(dr * m), K, eigvals_only=True,
                                  subset_by_index=[len(m) - 1, len(m) - 1])
            ref[t] = float(w[-1])
    return UBoundResult(float(r), batch.tuples, prof, ref, len(fam) + 1,
                        f"{batch.grid.size} nodes, L={batch.grid.L:g}")


# -- two-constant fits --------------------------------------------------------

@dataclass
class TwoConstantFit:
    """Triples ``(a, b1, b2)`` per test function for ``a <= K1 b1 + K2 b2``."""

    name: str
    a: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    labels: list
    k1_cap: float = K1_CAP
    k2_grid: np.ndarray = field(default_factory=lambda: K2_GRID.copy())

    def __post_init__(self):
        self.a = np.asarray(self.a, float)
        self.b1 = np.asarray(self.b1, float)
        self.b2 = np.asarray(self.b2, float)
        self.k1 = np.array([self.k1_for(k2) for k2 in self.k2_grid])

    def _tol(self):
        return ZERO_TOL * max(1.0, float(np.max(np.abs(self.a), initial=0.0)))

    def k1_for(self, k2: float) -> float:
        """Smallest ``K1`` making every triple feasible at ``K2 = k2``."""
        rest = self.a - k2 * self.b2
        tol = self._tol()
        pos = self.b1 > 0
        if np.any(~pos & (rest > tol)):
            return math.inf
        if not pos.any():
            return 0.0
        with np.errstate(over="ignore"):
            return max(0.0, float(np.max(rest[pos] / self.b1[pos])))

    def k2_for(self, k1: float) -> float:
        """Smallest ``K2`` making every triple feasible at ``K1 = k1``."""
        rest = self.a - k1 * self.b1
        tol = self._tol()
        pos = self.b2 > 0
        if np.any(~pos & (rest > tol)):
            return math.inf
        if not pos.any():
            return 0.0
        with np.errstate(over="ignore"):
            return max(0.0, float(np.max(rest[pos] / self.b2[pos])))

    def frontier(self) -> list:
        """Pareto-reduced ``(K1, K2)`` points of the grid scan, by increasing K2."""
        pts = [(k1, k2) for k1, k2 in zip(self.k1, self.k2_grid) if np.isfinite(k1)]
        out = []
        best = math.inf
        for k1, k2 in pts:
            if k1 < best - 1e-15:
                out.append((k1, k2))
                best = k1
        return out

    @property
    def headline(self) -> tuple:
        """``(K1, K2)`` with the smallest ``K2`` subject to ``K1 <= k1_cap``."""
        k2 = self.k2_for(self.k1_cap)
        if not np.isfinite(k2):
            return math.inf, math.inf
        return self.k1_for(k2), k2

    @property
    def success(self) -> bool:
        return self.headline[1] < 1

    def slack(self, k1: float, k2: float) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.min(k1 * self.b1 + k2 * self.b2 - self.a))

    def contains(self, k1: float, k2: float, tol: float = 1e-10) -> bool:
        return self.slack(k1, k2) >= -tol

    @property
    def family_size(self) -> int:
        return len(self.a)


@dataclass
class SingleConstantFit:
    """``a <= K b`` per test function."""

    name: str
    a: np.ndarray
    b: np.ndarray
    labels: list

    @property
    def value(self) -> float:
        r = _sanitize_ratio(self.a, self.b)
        return float(np.max(r, initial=0.0))

    @property
    def argmax(self) -> str:
        r = _sanitize_ratio(self.a, self.b)
        return self.labels[int(np.argmax(r))] if len(r) else ""

    @property
    def family_size(self) -> int:
        return len(self.a)


def _nonconstant(family):
    fam = [f for f in family if not f.is_constant()]
    if not fam:
        raise DegenerateInput("test family contains only constants")
    return fam


def _gsq(nu, f, sites):
    return nu.mean(f.grad_sq(sites))


def sweepout_fit(nu: ConditionalMeasure, family: Sequence[GridFunction], i: int, j: int,
                 k1_cap: float = K1_CAP) -> TwoConstantFit:
    """``nu|grad_j E^i f|^2 <= D1 nu|grad_j f|^2 + D2 nu|grad_i f|^2``."""
    fam = _nonconstant(family)
    Ei = nu.sub((i,))
    a, b1, b2 = [], [], []
    for f in fam:
        g = Ei.condition(f, (j,))
        a.append(_gsq(nu, g, (j,)))
        b1.append(_gsq(nu, f, (j,)))
        b2.append(_gsq(nu, f, (i,)))
    return TwoConstantFit(f"sweepout[{i},{j}]", a, b1, b2, [f.name for f in fam], k1_cap)


def weighted_variance_fit(nu: ConditionalMeasure, family: Sequence[GridFunction], i: int,
                          j: int, s: float | None = None) -> SingleConstantFit:
    """``nu E^j((f - E^i f)^2 d^s(x_j)) <= D3 (nu|grad_j f|^2 + nu|grad_i f|^2)``."""
    s = nu.spec.interaction.s if s is None else s
    fam = _nonconstant(family)
    Ei = nu.sub((i,))
    w = np.abs(nu.grid.coord(j)) ** s
    a, b = [], []
    for f in fam:
        dev = f.values - Ei.expect_values(f.values)
        a.append(nu.mean(dev ** 2 * w))
        b.append(_gsq(nu, f, (i, j)))
    return SingleConstantFit(f"weighted_variance[{i},{j}]", np.array(a), np.array(b),
                             [f.name for f in fam])


def block_sweepout_fit(nu: ConditionalMeasure, family: Sequence[GridFunction],
                       k1_cap: float = K1_CAP) -> TwoConstantFit:
    """``nu|grad_G1 E^G0 f|^2 <= R1 nu|grad_G1 f|^2 + R2 nu|grad_G0 f|^2``."""
    g0, g1 = nu.spec.lattice.classes()
    fam = _nonconstant(family)
    E0 = nu.sub(g0)
    a, b1, b2 = [], [], []
    for f in fam:
        g = E0.condition(f, g1)
        a.append(_gsq(nu, g, g1))
        b1.append(_gsq(nu, f, g1))
        b2.append(_gsq(nu, f, g0))
    return TwoConstantFit("block_sweepout", a, b1, b2, [f.name for f in fam], k1_cap)


def sqrt_sweepout_fit(nu: ConditionalMeasure, family: Sequence[GridFunction],
                      orientation: tuple = (0, 1), k1_cap: float = K1_CAP) -> TwoConstantFit:
    """``nu|grad_Gi (E^Gj f^2)^(1/2)|^2 <= C1 nu|grad_Gi f|^2 + C2 nu|grad_Gj f|^2``
    with ``(i, j) = orientation``."""
    classes = nu.spec.lattice.classes()
    gi, gj = classes[orientation[0]], classes[orientation[1]]
    fam = _nonconstant(family)
    Ej = nu.sub(gj)
    a, b1, b2 = [], [], []
    for f in fam:
        g = Ej.condition(f.square(), gi).sqrt()
        a.append(_gsq(nu, g, gi))
        b1.append(_gsq(nu, f, gi))
        b2.append(_gsq(nu, f, gj))
    return TwoConstantFit(f"sqrt_sweepout[{orientation[0]}<-{orientation[1]}]", a, b1, b2,
                          [f.name for f in fam], k1_cap)


def edge_sqrt_fit(nu: ConditionalMeasure, family: Sequence[GridFunction], i: int, j: int,
                  k1_cap: float = K1_CAP) -> TwoConstantFit:
    """``nu|grad_i (E^j f^2)^(1/2)|^2 <= G1 nu|grad_i f|^2
    + G2 (nu|grad_j f|^2 + sum_{t~j, t!=i} nu|grad_t f|^2)``."""
    lat = nu.spec.lattice
    others = tuple(t for t in lat.neighbors(j) if t != i)
    fam = _nonconstant(family)
    Ej = nu.sub((j,))
    a, b1, b2 = [], [], []
    for f in fam:
        g = Ej.condition(f.square(), (i,)).sqrt()
        a.append(_gsq(nu, g, (i,)))
        b1.append(_gsq(nu, f, (i,)))
        b2.append(_gsq(nu, f, (j,) + others))
    return TwoConstantFit(f"edge_sqrt[{i},{j}]", a, b1, b2, [f.name for f in fam], k1_cap)


# -- covariance weight ------------------------------------------------------------

@dataclass
class MomentTable:
    tuples: np.ndarray
    log_moment: np.ndarray
    edge_fraction: np.ndarray
    eps: float

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.log_moment)) and np.all(self.edge_fraction < 1e-8))

    header = ["omega", "eps", "log_moment", "edge_fraction", "finite"]

    def rows(self) -> list:
        return [["(" + ",".join(f"{v:g}" for v in w) + ")", f"{self.eps:g}", f"{m:.10g}",
                 f"{e:.3e}", str(bool(np.isfinite(m) and e < 1e-8)).lower()]
                for w, m, e in zip(self.tuples, self.log_moment, self.edge_fraction)]


def weight_moment_table(spec: ModelSpec, omega: OmegaGrid | np.ndarray | None = None,
                        eps: float | None = None, *, n_nodes: int = 128) -> MomentTable:
    """``log E^{j,omega} exp(eps |W|^2)`` for the pair-energy gradient ``W``
    towards each neighbor; reports the worst neighbor per tuple.

    ``edge_fraction`` is the share of the tilted mass carried by the two
    outermost nodes; a large value means the moment is not resolved by the
    truncated grid (divergent or nearly so).
    """
    eps = spec.interaction.eps_h if eps is None else eps
    batch = SiteBatch(spec, _tuples(spec, omega), n_nodes=n_nodes)
    x = batch.x[None, :]
    logm = np.full(len(batch), -np.inf)
    edge = np.zeros(len(batch))
    for c in range(batch.tuples.shape[1]):
        w = spec.pair_weight_grad(0, 1, x, batch.tuples[:, c:c + 1])
        with np.errstate(over="ignore"):
            tilted = batch.logp + eps * w ** 2
            lm = logsumexp(tilted, axis=1)
            frac = np.exp(np.logaddexp(tilted[:, 0], tilted[:, -1]) - lm)
        frac = np.where(np.isfinite(lm), frac, 1.0)
        edge = np.where(lm > logm, frac, edge)
        logm = np.maximum(logm, lm)
    return MomentTable(batch.tuples, logm, edge, eps)


def covariance_weight_bound(nu: ConditionalMeasure, family: Sequence[GridFunction], i: int,
                            j: int) -> SingleConstantFit:
    """``nu A(f) <= m0 (nu|grad_j f|^2 + sum_{t~j} nu|grad_t f|^2)`` where
    ``A(f) = |E^j(f^2; W)|^2 / E^j f^2`` and ``W`` is the gradient in ``x_i``
    of the pair energy between ``j`` and ``i`` (without the coupling)."""
    spec = nu.spec
    fam = _nonconstant(family)
    Ej = nu.sub((j,))
    W = spec.pair_weight_grad(j, i, nu.grid.coord(j), nu.grid.coord(i))
    EW = Ej.expect_values(W)
    sites = (j,) + spec.lattice.neighbors(j)
    a, b = [], []
    for f in fam:
        f2 = f.values ** 2
        m = Ej.expect_values(f2)
        cov = Ej.expect_values(f2 * W) - m * EW
        A = np.where(m > 0, cov ** 2 / np.where(m > 0, m, 1.0), 0.0)
        a.append(nu.mean(A))
        b.append(_gsq(nu, f, sites))
    return SingleConstantFit(f"covariance_weight[{i},{j}]", np.array(a), np.array(b),
                             [f.name for f in fam])


def covariance_constant(spec: ModelSpec, omega: OmegaGrid | np.ndarray | None = None,
                        family: str = "default", *, n_nodes: int = 128) -> float:
    """Smallest ``c0`` in the covariance bound over the family and the
    boundary grid, with ``h = W`` (the pair-energy gradient)."""
    batch = SiteBatch(spec, _tuples(spec, omega), n_nodes=n_nodes)
    x = batch.x[None, :]
    c0 = 0.0
    for c in range(batch.tuples.shape[1]):
        h = spec.pair_weight_grad(0, 1, x, batch.tuples[:, c:c + 1])
        h2 = h ** 2
        Eh = batch.expect(h)
        Eh2 = batch.expect(h2)
        for _, f, _ in batch.family(family):
            f2 = f[None, :] ** 2
            m2 = batch.expect(f2)
            lhs = np.abs(batch.expect(f2 * h) - m2 * Eh)
            dev = (f[None, :] - batch.expect(f)[:, None]) ** 2
            rhs = np.sqrt(m2 * np.maximum(batch.expect(dev * (h2 + Eh2[:, None])), 0.0))
            c0 = max(c0, float(np.max(_sanitize_ratio(lhs, rhs))))
    return c0


# -- assembly --------------------------------------------------------------------

def assemble_constants(c: float, C1: float, C2: float) -> tuple:
    """``A = 1/(1 - C2^2)`` and ``B = max{cA(C1/C2 + C2 + C1), cA}``."""
    if not C2 < 1:
        raise DivergenceError(f"C2={C2:g} >= 1: geometric series diverges")
    if C2 <= 0:
        raise DivergenceError("C2 must be positive (C1/C2 term)")
    A = 1.0 / (1.0 - C2 ** 2)
    B = max(c * A * (C1 / C2 + C2 + C1), c * A)
    return A, B


@dataclass(frozen=True)
class Assembly:
    c: float
    C1: float
    C2: float
    A: float
    B: float


def choose_sqrt_constants(fits: Sequence[TwoConstantFit], c: float) -> Assembly:
    """Pick ``(C1, C2)`` valid for every fit (both orientations) minimizing ``B``.

    For each ``C2`` on the shared grid, ``C1`` is the largest of the per-fit
    minimal ``K1``; the minimizer of ``B`` over ``0 < C2 < 1`` is then
    polished by a bounded scalar search between its grid neighbors.
    """
    grid = fits[0].k2_grid

    def k1(k2):
        return max(f.k1_for(k2) for f in fits)

    def total(k2):
        val = k1(k2)
        if not np.isfinite(val) or k2 <= 0 or k2 >= 1:
            return math.inf
        return assemble_constants(c, val, k2)[1]

    vals = np.array([total(k2) for k2 in grid])
    if not np.any(np.isfinite(vals)):
        raise DivergenceError("no fitted C2 < 1 on the frontier: the global bound does not apply")
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(total, bounds=(max(lo, 1e-300), min(hi, 1 - 1e-12)), method="bounded",
                          options={"xatol": 1e-12})
    best = grid[k] if not (res.success and res.fun < vals[k]) else float(res.x)
    C1 = k1(best)
    A, B = assemble_constants(c, C1, best)
    return Assembly(c, C1, float(best), A, B)
