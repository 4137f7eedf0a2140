"""Model class: phase, interaction, couplings and the periodic lattice.

Sites live on the real line with distance ``d(x) = |x|``, so ``|grad d| = 1``
and ``laplacian d = 0`` away from the origin.  The phase is
``phi(x) = alpha |x|**p`` and the pair potential is
``V(x, y) = epsilon (|x| + rho |y|)**s``.

The local Hamiltonian of a region ``M`` given the outside configuration ``z``
is built in one of two ways (``ModelSpec.pair_terms``):

``"both"`` (default)
    every edge ``{i, j}`` touching ``M`` contributes
    ``J_ij (V(z_i, z_j) + V(z_j, z_i))``.  These local Hamiltonians come
    from one global energy, so the conditional measures are consistent.
``"outgoing"``
    only ``J_ij V(x_i, z_j)`` for ``i`` in ``M``.  This drops the reversed
    term on boundary edges and is kept for comparison; the resulting family
    of conditional measures is not consistent when ``rho > 0``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, ModelRejected
from .quadrature import grid_for_phase

REGION_MARGIN = 1e-9


@dataclass(frozen=True)
class SiteGeometry:
    """The real line: ``xi = tau = 1`` and ``theta = 0``."""

    dimension: int = 1
    xi: float = 1.0
    tau: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        if self.dimension != 1:
            raise ConfigError("only the real line is supported as site space")
        if not 0 < self.xi <= self.tau:
            raise ConfigError("need 0 < xi <= tau")


@dataclass(frozen=True)
class Phase:
    alpha: float = 1.0
    p: float = 4.0
    k0: float | None = None
    k1: float | None = None
    allow_low_p: bool = False

    def __post_init__(self):
        if self.alpha <= 0:
            raise ModelRejected(f"alpha must be positive, got {self.alpha}")
        if self.p <= 1:
            raise ModelRejected(f"phase exponent p={self.p} is not confining enough")
        if self.p < 3 and not self.allow_low_p:
            raise ConfigError(f"p={self.p} < 3 requires allow_low_p (oracle models only)")

    def value(self, x):
        return self.alpha * np.abs(x) ** self.p

    def grad(self, x):
        return self.d1(np.abs(x)) * np.sign(x)

    def d1(self, d):
        return self.alpha * self.p * np.abs(d) ** (self.p - 1)

    def d2(self, d):
        return self.alpha * self.p * (self.p - 1) * np.abs(d) ** (self.p - 2)


@dataclass(frozen=True)
class Interaction:
    epsilon: float = 1.0
    rho: float = 0.5
    s: float = 2.0
    k2: float | None = None
    kgrowth: float | None = None
    m_star: float = 1.0
    eps_h: float = 0.05

    def __post_init__(self):
        if self.rho < 0:
            raise ConfigError(f"rho must be nonnegative, got {self.rho}")
        if self.s <= 0:
            raise ConfigError(f"s must be positive, got {self.s}")

    def _base(self, du, dv):
        return np.abs(du) + self.rho * np.abs(dv)

    def value(self, x, y):
        return self.epsilon * self._base(x, y) ** self.s

    # radial derivatives in the first (d1, d11) and second (d2, d22) argument
    def d1(self, du, dv):
        return self.epsilon * self.s * self._base(du, dv) ** (self.s - 1)

    def d11(self, du, dv):
        return self.epsilon * self.s * (self.s - 1) * self._base(du, dv) ** (self.s - 2)

    def d2(self, du, dv):
        return self.rho * self.d1(du, dv)

    def d22(self, du, dv):
        return self.rho ** 2 * self.d11(du, dv)

    def grad_x(self, x, y):
        return self.d1(x, y) * np.sign(x)

    def grad_y(self, x, y):
        return self.d2(x, y) * np.sign(y)


@dataclass(frozen=True)
class CouplingMatrix:
    J: float = 0.05
    overrides: Mapping = field(default_factory=dict)
    J_max: float = 1.0

    def __post_init__(self):
        if self.J < 0:
            raise ConfigError(f"J must be nonnegative, got {self.J}")
        clean = {tuple(sorted(k)): float(v) for k, v in dict(self.overrides).items()}
        object.__setattr__(self, "overrides", clean)

    def __call__(self, i: int, j: int) -> float:
        return self.overrides.get((min(i, j), max(i, j)), self.J)

    def max_abs(self, edges) -> float:
        return max((abs(self(i, j)) for i, j in edges), default=0.0)


@dataclass(frozen=True)
class LatticeTorus:
    dim: int = 1
    side: int = 4

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.side < 2 or self.side % 2:
            raise ConfigError(f"side must be an even integer >= 2, got {self.side}")

    @property
    def n_sites(self) -> int:
        return self.side ** self.dim

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.dim

    def coords(self, site: int) -> tuple:
        return tuple(int(c) for c in np.unravel_index(site, self.shape))

    def site(self, coords: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(c % self.side for c in coords), self.shape))

    def neighbors(self, site: int) -> tuple:
        c = self.coords(site)
        out = set()
        for axis in range(self.dim):
            for step in (-1, 1):
                nc = list(c)
                nc[axis] += step
                out.add(self.site(nc))
        out.discard(site)
        return tuple(sorted(out))

    @property
    def degree(self) -> int:
        return len(self.neighbors(0))

    @property
    def edges(self) -> tuple:
        return tuple(sorted({(min(i, j), max(i, j))
                             for i in range(self.n_sites) for j in self.neighbors(i)}))

    def parity(self, site: int) -> int:
        return sum(self.coords(site)) % 2

    @property
    def gamma0(self) -> tuple:
        return tuple(i for i in range(self.n_sites) if self.parity(i) == 0)

    @property
    def gamma1(self) -> tuple:
        return tuple(i for i in range(self.n_sites) if self.parity(i) == 1)

    def classes(self) -> tuple:
        return self.gamma0, self.gamma1


@dataclass(frozen=True)
class ModelSpec:
    phase: Phase = field(default_factory=Phase)
    interaction: Interaction = field(default_factory=Interaction)
    coupling: CouplingMatrix = field(default_factory=CouplingMatrix)
    lattice: LatticeTorus = field(default_factory=LatticeTorus)
    geometry: SiteGeometry = field(default_factory=SiteGeometry)
    pair_terms: str = "both"

    def __post_init__(self):
        if self.pair_terms not in ("both", "outgoing"):
            raise ConfigError(f"pair_terms must be 'both' or 'outgoing', got {self.pair_terms!r}")
        self.check_integrable()

    def check_integrable(self) -> None:
        """Raise :class:`ModelRejected` unless ``exp(-H)`` is integrable."""
        eps, s, p = self.interaction.epsilon, self.interaction.s, self.phase.p
        if eps >= 0:
            return
        pull = self.coupling.max_abs(self.lattice.edges) * self.lattice.degree
        pull *= abs(eps) * (1 + self.interaction.rho ** s)
        if s > p or (s == p and pull >= self.phase.alpha):
            raise ModelRejected(
                f"negative interaction of order {s} overwhelms phase of order {p}")

    def replace(self, **changes) -> "ModelSpec":
        """Copy with top-level or nested fields changed (``J=...`` etc.)."""
        parts = {"phase": {}, "interaction": {}, "coupling": {}, "lattice": {}}
        top = {}
        for key, value in changes.items():
            for name in parts:
                if key in getattr(type(self), "_fields_" + name, ()):
                    parts[name][key] = value
                    break
            else:
                top[key] = value
        kw = dict(phase=self.phase, interaction=self.interaction,
                  coupling=self.coupling, lattice=self.lattice,
                  geometry=self.geometry, pair_terms=self.pair_terms)
        for name, upd in parts.items():
            if upd:
                kw[name] = _dc_replace(getattr(self, name), **upd)
        kw.update(top)
        return ModelSpec(**kw)

    _fields_phase = ("alpha", "p", "k0", "k1", "allow_low_p")
    _fields_interaction = ("epsilon", "rho", "s", "k2", "kgrowth", "m_star", "eps_h")
    _fields_coupling = ("J", "overrides", "J_max")
    _fields_lattice = ("dim", "side")

    # -- Hamiltonian pieces -------------------------------------------------
    def pair(self, i: int, j: int, zi, zj):
        """Energy carried by the edge ``{i, j}`` with both endpoints free."""
        v = self.interaction.value
        return self.coupling(i, j) * (v(zi, zj) + v(zj, zi))

    def local_energy(self, region: Sequence[int], z: Mapping[int, object]):
        """``H`` of ``region`` evaluated at the configuration ``z``.

        ``z`` maps every site of the region and of its neighbor shell to an
        array or scalar; arrays broadcast against each other.
        """
        region = tuple(region)
        inside = set(region)
        lat, v = self.lattice, self.interaction.value
        out = 0.0
        for i in region:
            out = out + self.phase.value(z[i])
        if self.pair_terms == "both":
            for i, j in self._edges_touching(inside):
                out = out + self.pair(i, j, z[i], z[j])
        else:
            for i in region:
                for j in lat.neighbors(i):
                    out = out + self.coupling(i, j) * v(z[i], z[j])
        return out

    def local_energy_grad(self, region: Sequence[int], z: Mapping[int, object], k: int):
        """Derivative of :meth:`local_energy` with respect to ``z[k]``."""
        inside = set(region)
        lat, inter = self.lattice, self.interaction
        out = 0.0
        if k in inside:
            out = out + self.phase.grad(z[k])
        for j in lat.neighbors(k):
            Jkj = self.coupling(k, j)
            if self.pair_terms == "both":
                if k in inside or j in inside:
                    out = out + Jkj * (inter.grad_x(z[k], z[j]) + inter.grad_y(z[j], z[k]))
            else:
                if k in inside:
                    out = out + Jkj * inter.grad_x(z[k], z[j])
                if j in inside:
                    out = out + Jkj * inter.grad_y(z[j], z[k])
        return out

    def pair_weight_grad(self, j: int, i: int, zj, zi):
        """Gradient in ``z_i`` of the part of ``H^j`` coupling ``j`` to ``i``,
        without the coupling constant (so it does not vanish at ``J = 0``)."""
        inter = self.interaction
        if self.pair_terms == "both":
            return inter.grad_y(zj, zi) + inter.grad_x(zi, zj)
        return inter.grad_y(zj, zi)

    def _edges_touching(self, inside: set):
        return [(i, j) for i, j in self.lattice.edges if i in inside or j in inside]

    # -- single-site helpers used by the hypothesis and region checks ------
    def site_radial(self, d, omegas: Sequence[float]):
        """Radial first and second derivative of the single-site Hamiltonian.

        ``omegas`` are the neighbor values; all neighbors are assumed to share
        the uniform coupling ``J``.  Returns ``(D, B, S)`` where ``S`` is the
        interaction part of ``D``.
        """
        inter, J = self.interaction, self.coupling.J
        S = 0.0
        Bint = 0.0
        for w in omegas:
            w = np.abs(w)
            S = S + J * inter.d1(d, w)
            Bint = Bint + J * inter.d11(d, w)
            if self.pair_terms == "both":
                S = S + J * inter.d2(w, d)
                Bint = Bint + J * inter.d22(w, d)
        D = self.phase.d1(d) + S
        B = self.phase.d2(d) + Bint
        return D, B, S

    def site_energy(self, x, omegas: Sequence[float]):
        """Single-site Hamiltonian at a site whose neighbors sit at ``omegas``."""
        J, v = self.coupling.J, self.interaction.value
        out = self.phase.value(x)
        for w in omegas:
            out = out + J * v(x, w)
            if self.pair_terms == "both":
                out = out + J * v(w, x)
        return out

    # -- configuration ------------------------------------------------------
    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "ModelSpec":
        try:
            phase = Phase(alpha=float(cfg.get("alpha", 1.0)), p=float(cfg.get("p", 4.0)),
                          k0=_opt(cfg.get("k0")), k1=_opt(cfg.get("k1")),
                          allow_low_p=bool(cfg.get("allow_low_p", False)))
            inter = Interaction(epsilon=float(cfg.get("epsilon", 1.0)),
                                rho=float(cfg.get("rho", 0.5)), s=float(cfg.get("s", 2.0)),
                                k2=_opt(cfg.get("k2")), kgrowth=_opt(cfg.get("kgrowth")),
                                m_star=float(cfg.get("Mstar", 1.0)),
                                eps_h=float(cfg.get("eps_h", 0.05)))
            overrides = {(int(a), int(b)): float(v) for a, b, v in cfg.get("J_edges", [])}
            coupling = CouplingMatrix(J=float(cfg.get("J", 0.05)), overrides=overrides)
            lattice = LatticeTorus(dim=int(cfg.get("dim", 1)), side=int(cfg.get("side", 4)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad model configuration: {exc}") from exc
        return cls(phase, inter, coupling, lattice,
                   pair_terms=str(cfg.get("pair_terms", "both")))


def _opt(value):
    return None if value is None else float(value)


def _dc_replace(obj, **changes):
    import dataclasses
    return dataclasses.replace(obj, **changes)


# -- hypothesis checker -------------------------------------------------------

@dataclass(frozen=True)
class HypothesisScan:
    """Sample points for grid certification of the hypotheses."""

    d_max: float = 6.0
    n_d: int = 600
    omega_max: float = 3.0
    omega_step: float = 0.25
    nodes: int = 128
    max_tuples: int = 1000

    def d_values(self) -> np.ndarray:
        edges = np.linspace(0.0, self.d_max, self.n_d + 1)
        return 0.5 * (edges[:-1] + edges[1:])

    def omega_values(self) -> np.ndarray:
        n = int(round(self.omega_max / self.omega_step))
        return self.omega_step * np.arange(-n, n + 1)

    def boundary_tuples(self, degree: int) -> np.ndarray:
        vals = self.omega_values()
        if len(vals) ** degree <= self.max_tuples:
            return np.array(list(itertools.product(vals, repeat=degree)))
        return np.repeat(vals[:, None], degree, axis=1)

    def describe(self) -> str:
        return (f"d in (0,{self.d_max:g}] n={self.n_d}; |omega|<={self.omega_max:g} "
                f"step {self.omega_step:g}; {self.nodes} nodes")


@dataclass(frozen=True)
class HypothesisResult:
    name: str
    passed: bool
    margin: float
    witness: str
    certified: float | None = None
    note: str = ""

    def row(self) -> list:
        return [self.name, "pass" if self.passed else "fail", _fmt(self.margin),
                self.witness, "" if self.certified is None else _fmt(self.certified),
                self.note]


@dataclass(frozen=True)
class HypothesisReport:
    results: tuple
    resolution: str

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list:
        return [r.name for r in self.results if not r.passed]

    def __getitem__(self, name: str) -> HypothesisResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    header = ["name", "pass", "margin", "witness", "certified", "note"]

    def rows(self) -> list:
        return [r.row() for r in self.results]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x) or math.isnan(x):
        return str(x)
    return f"{x:.10g}"


def _inequality(name, lhs, rhs, points, certified=None, note="", extra_fail=None,
                mask=None):
    """Package ``lhs <= rhs`` over the flattened sample ``points``.

    A relative slack of ``-1e-12`` is tolerated so that a constant certified
    on the same grid passes its own check.
    """
    lhs, rhs = np.broadcast_arrays(np.asarray(lhs, float), np.asarray(rhs, float))
    slack = (rhs - lhs).ravel()
    if mask is not None:
        slack = np.where(np.broadcast_to(mask, lhs.shape).ravel(), slack, np.inf)
    k = int(np.argmin(slack))
    tol = 1e-12 * max(1.0, abs(float(rhs.ravel()[k])))
    passed = bool(slack[k] >= -tol) and not extra_fail
    return HypothesisResult(name, passed, float(slack[k]), points(k), certified,
                            extra_fail or note)


def check_hypotheses(spec: ModelSpec, scan: HypothesisScan | None = None) -> HypothesisReport:
    """Grid-certify the phase/interaction hypotheses for ``spec``.

    Configured constants (``k0``, ``k1``, ``k2``, ``kgrowth``) are checked
    when given; otherwise the smallest constant certified by the scan is used
    and the check passes whenever that constant is finite.
    """
    scan = scan or HypothesisScan()
    spec.check_integrable()
    if scan.n_d < 1:
        raise ConfigError("scan grid is empty")
    ph, it, J = spec.phase, spec.interaction, spec.coupling.J
    d = scan.d_values()
    w = np.abs(scan.omega_values())
    res = []

    # phase
    ratio0 = ph.d1(d) / d ** (ph.p - 1)
    k0_cert = float(ratio0.min())
    k0 = ph.k0 if ph.k0 is not None else k0_cert
    res.append(_inequality("H1.1", k0 * d ** (ph.p - 1), ph.d1(d), lambda k: f"d={d[k]:.6g}",
                           k0_cert, extra_fail="p<3" if ph.p < 3 else None))
    ratio1 = np.abs(ph.d2(d)) / (1 + ph.d1(d))
    k1_cert = float(ratio1.max())
    k1 = ph.k1 if ph.k1 is not None else k1_cert
    res.append(_inequality("H1.2", np.abs(ph.d2(d)), k1 * (1 + ph.d1(d)),
                           lambda k: f"d={d[k]:.6g}", k1_cert))

    # interaction, pointwise on d x |omega|
    D, W = np.meshgrid(d, w, indexing="ij")
    def pts(k):
        return f"d(x)={D.ravel()[k]:.6g},d(y)={W.ravel()[k]:.6g}"
    res.append(_inequality("H1.3", np.zeros_like(D), it.d1(D, W), pts))
    far = D > it.m_star
    d11, d1 = np.abs(it.d11(D, W)), it.d1(D, W)
    k2_cert = float((d11 / (1 + d1))[far].max()) if far.any() else 0.0
    k2 = it.k2 if it.k2 is not None else k2_cert
    res.append(_inequality("H1.4", d11, k2 * (1 + d1), pts, k2_cert,
                           note=f"d(x)>{it.m_star:g}", mask=far))

    s_ok = 0 < it.s <= ph.p - 1
    res.append(HypothesisResult("H1.5", s_ok, float(ph.p - 1 - it.s),
                                f"s={it.s:g},p={ph.p:g}", None,
                                "" if s_ok else ("s>p-1" if it.s > ph.p - 1 else "s<=0")))

    growth = {}
    # (c) |grad_y V(x, y)|^2 and (d) |V(x, y)| against k + k(d^s(x) + d^s(y))
    base = 1 + D ** it.s + W ** it.s
    growth["H1.5(c)"] = (it.d2(D, W) ** 2, base, pts)
    growth["H1.5(d)"] = (np.abs(it.value(D, W)), base, pts)

    # (a), (b), (e): single-site quadrature at every boundary tuple
    tuples = scan.boundary_tuples(spec.lattice.degree)
    g = grid_for_phase(ph, n_nodes=scan.nodes)
    x = g.nodes[None, :]
    H = spec.site_energy(x, [tuples[:, c:c + 1] for c in range(tuples.shape[1])])
    logp = g.log_weights[None, :] - H
    logp = logp - logsumexp(logp, axis=1, keepdims=True)
    prob = np.exp(logp)
    sum_ds = np.sum(np.abs(tuples) ** it.s, axis=1)
    def tpts(k):
        return "omega=(" + ",".join(f"{v:g}" for v in tuples[k]) + ")"
    wgrad2 = np.max([np.sum(prob * it.d2(tuples[:, c:c + 1], x) ** 2, axis=1)
                     for c in range(tuples.shape[1])], axis=0)
    growth["H1.5(a)"] = (wgrad2, 1 + sum_ds, tpts)
    growth["H1.5(b)"] = (np.sum(prob * np.abs(x), axis=1), 1 + sum_ds, tpts)
    with np.errstate(over="ignore"):
        logmom = np.max([logsumexp(logp + it.eps_h * it.d2(tuples[:, c:c + 1], x) ** 2, axis=1)
                         for c in range(tuples.shape[1])], axis=0)
    growth["H1.5(e)"] = (logmom, 1 + sum_ds, tpts)

    for name in ("H1.5(a)", "H1.5(b)", "H1.5(c)", "H1.5(d)", "H1.5(e)"):
        lhs, rhs_unit, where = growth[name]
        cert = float(np.max(lhs / rhs_unit)) if np.all(np.isfinite(lhs)) else math.inf
        k = it.kgrowth if it.kgrowth is not None else cert
        note = f"eps={it.eps_h:g}" if name == "H1.5(e)" else ""
        if not np.all(np.isfinite(lhs)):
            note = "exponential moment diverges on grid"
        res.append(_inequality(name, lhs, k * rhs_unit, where, cert, note=note))

    jmax = spec.coupling.max_abs(spec.lattice.edges)
    jbound = spec.coupling.J_max
    ok = jmax < jbound
    res.append(HypothesisResult("H1.6", ok, float(jbound - jmax), f"max|J_ij|={jmax:g}", jmax))
    return HypothesisReport(tuple(res), scan.describe())


# -- region check ---------------------------------------------------------------

@dataclass(frozen=True)
class RegionReport:
    zeta: float
    passed: bool
    witness: str
    n_points: int
    n_excluded: int
    empty: bool
    M: float
    N: float

    header = ["M", "N", "zeta", "pass", "witness", "points_in_region", "excluded", "empty"]

    def row(self) -> list:
        return [_fmt(self.M), _fmt(self.N), _fmt(self.zeta), "pass" if self.passed else "fail",
                self.witness, self.n_points, self.n_excluded, str(self.empty).lower()]


def region_check(spec: ModelSpec, M: float, N: float,
                 scan: HypothesisScan | None = None) -> RegionReport:
    """Smallest ``zeta`` with ``|D| lap d + B |grad d|^2 <= zeta/2 |D|^2 |grad d|^2``
    on the region where the phase drift exceeds ``M`` or the interaction drift
    exceeds ``N``.

    On the line ``lap d = 0`` and ``|grad d| = 1`` so the ratio is ``2B/D^2``.
    Grid points with ``D = 0`` are counted as excluded, not as failures.
    """
    if M <= 0 or N <= 0:
        raise ConfigError("M and N must be positive")
    scan = scan or HypothesisScan()
    geo = spec.geometry
    d = scan.d_values()
    tuples = scan.boundary_tuples(spec.lattice.degree)
    dd = d[:, None]
    D, B, S = spec.site_radial(dd, [tuples[None, :, c] for c in range(tuples.shape[1])])
    D, B, S = np.broadcast_arrays(D, B, S)
    dphi = np.broadcast_to(spec.phase.d1(dd), D.shape)
    delta = REGION_MARGIN
    region = (dphi > M + delta) | ((dphi < M - delta) & (S > N + delta))
    degenerate = region & (D == 0)
    use = region & ~degenerate
    if not use.any():
        return RegionReport(0.0, False, "", 0, int(degenerate.sum()), True, M, N)
    grad2 = geo.tau ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 2 * (np.abs(D) * geo.theta + B * grad2) / (D ** 2 * grad2)
    ratio = np.where(use, ratio, -np.inf)
    k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    zeta = max(0.0, float(ratio[k]))
    witness = f"d={d[k[0]]:.6g},omega=(" + ",".join(f"{v:g}" for v in tuples[k[1]]) + ")"
    return RegionReport(zeta, zeta < 1, witness, int(use.sum()), int(degenerate.sum()),
                        False, M, N)
