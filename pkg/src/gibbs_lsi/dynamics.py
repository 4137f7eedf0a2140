"""Checkerboard kernel ``P = E^G1 E^G0``, its iteration, and the block sampler.

Exact engine
    Works on the tensor-grid torus measure.  Iterates of ``P`` on functions of
    the even class are handled through the singular value decomposition of the
    normalized joint marginal of the two classes, which gives
    ``||P^n f - nu f||`` without round-off accumulation even when the residual
    falls many orders of magnitude below ``||f||``.
Sampler engine
    Block heat-bath Monte Carlo: each sweep redraws every even site, then every
    odd site, from its single-site conditional by inverse CDF on a midpoint
    grid.  One counter-based (Philox) stream per chain.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import xlogy
from scipy.stats import linregress

from .errors import ConvergenceDiagnosticError, DegenerateInput, InsufficientDecay
from .functionals import GridFunction
from .measures import ConditionalMeasure
from .model import ModelSpec
from .quadrature import choose_truncation, midpoint_grid

SINGULAR_FLOOR = 1e-12
RESIDUAL_FLOOR = 1e-12


# -- exact kernel ---------------------------------------------------------------

class BlockKernel:
    """``P f = E^G1(E^G0 f)`` on the exact torus measure ``nu``."""

    engine = "exact"

    def __init__(self, nu: ConditionalMeasure):
        if not nu.is_full:
            raise DegenerateInput("the kernel needs the full torus measure")
        self.nu = nu
        self.classes = nu.spec.lattice.classes()
        self.E0 = nu.sub(self.classes[0])
        self.E1 = nu.sub(self.classes[1])
        self._svd = None

    def apply(self, f: GridFunction, keep_grads: bool = False) -> GridFunction:
        g0, g1 = self.classes
        if f.is_constant():
            # conditional expectations fix constants; skip the rounding of a sum
            return GridFunction(self.nu.grid, f.values.copy(), {}, f"P[{f.name}]")
        if keep_grads:
            return self.E1.condition(self.E0.condition(f, g1), g0)
        h = self.E0.expect_values(f.values)
        return GridFunction(self.nu.grid, self.E1.expect_values(h), {}, f"P[{f.name}]")

    def norm(self, values) -> float:
        """``L^2(nu)`` norm of ``values - nu(values)``."""
        m = self.nu.mean(values)
        return float(np.sqrt(max(self.nu.mean((values - m) ** 2), 0.0)))

    def _spectral(self):
        if self._svd is None:
            grid = self.nu.grid
            g0, g1 = self.classes
            order = [grid.axis(s) for s in g0] + [grid.axis(s) for s in g1]
            n0 = int(np.prod([grid.shape[grid.axis(s)] for s in g0]))
            joint = np.transpose(np.broadcast_to(self.nu.prob, grid.shape), order)
            N = joint.reshape(n0, -1)
            d0, d1 = N.sum(axis=1), N.sum(axis=0)
            T = N / np.sqrt(d0)[:, None] / np.sqrt(d1)[None, :]
            U, sig, _ = np.linalg.svd(T, full_matrices=False)
            self._svd = (order, n0, d0, U, sig)
        return self._svd

    def singular_values(self) -> np.ndarray:
        return self._spectral()[4]

    def residuals(self, f: GridFunction, n_max: int) -> np.ndarray:
        """``||P^n f - nu f||_{L^2(nu)}`` for ``n = 0..n_max``."""
        order, n0, d0, U, sig = self._spectral()
        r0 = self.norm(f.full())
        h1 = self.apply(f).values
        r1 = self.norm(h1)
        out = [r0, r1 if r1 > RESIDUAL_FLOOR * max(r0, 1e-300) else 0.0]
        grid = self.nu.grid
        vec = np.transpose(np.broadcast_to(h1, grid.shape), order).reshape(n0, -1)[:, 0]
        coef = U.T @ (np.sqrt(d0) * vec)
        s = np.where(sig > SINGULAR_FLOOR * sig[0], sig, 0.0)
        for n in range(2, n_max + 1):
            out.append(float(np.sqrt(np.sum((s[1:] ** (2 * (n - 1)) * coef[1:]) ** 2))))
        return np.array(out)


def apply_kernel(P: BlockKernel, f: GridFunction, n: int = 1) -> GridFunction:
    for _ in range(n):
        f = P.apply(f)
    return f


@dataclass
class ConvergenceFit:
    residuals: np.ndarray
    n: np.ndarray
    rate: float
    r_squared: float
    leading_rate: float

    header = ["n", "residual"]

    def rows(self) -> list:
        return [[int(k), f"{r:.10e}"] for k, r in enumerate(self.residuals)]


def convergence_fit(P: BlockKernel, f: GridFunction, n_max: int = 6,
                    n_min: int = 1) -> ConvergenceFit:
    """Least-squares geometric rate of ``||P^n f - nu f||`` over ``n_min..n_max``.

    Raises :class:`InsufficientDecay` when fewer than three residuals in the
    range are above the numerical floor.
    """
    res = P.residuals(f, n_max)
    if res[0] <= RESIDUAL_FLOOR:
        raise DegenerateInput("f is constant under nu")
    n = np.arange(n_min, n_max + 1)
    r = res[n_min:]
    usable = r > 0
    if usable.sum() < 3:
        raise InsufficientDecay(
            f"only {int(usable.sum())} residuals above the floor in n={n_min}..{n_max}")
    n, r = n[usable], r[usable]
    fit = linregress(n, np.log(r))
    sig = P.singular_values()
    return ConvergenceFit(res, n, float(np.exp(fit.slope)), float(fit.rvalue ** 2),
                          float(sig[1] ** 2) if len(sig) > 1 else 0.0)


# -- entropy telescoping ----------------------------------------------------------

@dataclass
class TelescopeResult:
    terms: list          # (level, class index, entropy term, Dirichlet term)
    remainder: float
    total: float

    @property
    def residual(self) -> float:
        return abs(sum(t[2] for t in self.terms) + self.remainder - self.total)

    def level_slacks(self, c: float) -> list:
        return [c * d - e for _, _, e, d in self.terms]

    header = ["level", "block", "entropy", "dirichlet"]

    def rows(self) -> list:
        return [[lv, f"G{b}", f"{e:.10e}", f"{d:.10e}"] for lv, b, e, d in self.terms]


def entropy_telescope(nu: ConditionalMeasure, f: GridFunction, n: int = 1) -> TelescopeResult:
    """Split ``Ent_nu(f^2)`` along ``n`` sweeps of alternating block conditionings.

    With ``g_0 = f^2`` and ``g_{k+1} = E^{G(k mod 2)} g_k``, term ``k`` is
    ``nu E^G(g_k log(g_k / E^G g_k))``, evaluated through the conditional
    measure; the remainder is ``Ent_nu(g_{2n})``.  The fourth entry of each
    term is ``nu|grad_G sqrt(g_k)|^2`` for the per-level LS comparison.
    """
    classes = nu.spec.lattice.classes()
    blocks = [nu.sub(classes[0]), nu.sub(classes[1])]
    g = f.square()
    if nu.mean(g) <= 0:
        raise DegenerateInput("nu(f^2) = 0")
    total = _entropy_of(nu, g.values)
    terms = []
    for level in range(2 * n):
        b = level % 2
        E = blocks[b]
        Eg = E.expect_values(g.values)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(Eg > 0, g.values / np.where(Eg > 0, Eg, 1.0), 0.0)
        ent = nu.mean(E.expect_values(xlogy(g.values, ratio)))
        root = g.sqrt()
        dirich = nu.mean(root.grad_sq(classes[b]))
        terms.append((level, b, ent, dirich))
        g = E.condition(g, classes[1 - b])
    return TelescopeResult(terms, _entropy_of(nu, g.values), total)


def _entropy_of(nu, g):
    m = nu.mean(g)
    return nu.mean(xlogy(g, g / m))


# -- global verdict ----------------------------------------------------------------

@dataclass
class GlobalVerdict:
    B: float
    rows_: list
    empirical: float

    @property
    def passed(self) -> bool:
        return all(r[3] >= 0 for r in self.rows_)

    @property
    def min_slack(self) -> float:
        return min(r[3] for r in self.rows_)

    header = ["function", "entropy", "dirichlet", "slack"]

    def rows(self) -> list:
        return [[n, f"{e:.10e}", f"{d:.10e}", f"{s:.10e}"] for n, e, d, s in self.rows_]


def global_ls_verdict(nu: ConditionalMeasure, family: Sequence[GridFunction],
                      B: float) -> GlobalVerdict:
    """``Ent_nu(f^2) <= B nu|grad f|^2`` for every family member, and the
    sharper empirical constant for comparison.

    The empirical constant is the larger of ``max Ent/Dir`` and
    ``2 max Var/Dir`` over the family, the same lower estimator used for the
    single-site constant (the variance term is the small-perturbation limit
    of the entropy ratio around constants).
    """
    sites = nu.grid.sites
    rows = []
    emp = 0.0
    for f in family:
        ent = 0.0 if f.is_constant() else _entropy_of(nu, f.values ** 2)
        ent = max(ent, 0.0)
        d = nu.mean(f.grad_sq(sites))
        rows.append((f.name, ent, d, B * d - ent))
        if d > 0:
            m = nu.mean(f.values)
            var = max(nu.mean((f.values - m) ** 2), 0.0)
            emp = max(emp, ent / d, 2 * var / d)
    return GlobalVerdict(B, rows, emp)


# -- sampler ---------------------------------------------------------------------

@dataclass(frozen=True)
class ChainState:
    """Configurations of all chains, shape ``(chains, sites)``."""

    x: np.ndarray
    sweeps: int = 0
    chain_ids: tuple = ()


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 10
    burn_in: int = 1000
    n_sweeps: int = 10000
    n_nodes: int = 128
    seed: int = 0
    rhat_max: float = 1.1
    tol: float = 1e-16


class HeatBathSampler:
    """Block heat-bath sampler for the torus measure of ``spec``."""

    engine = "mcmc"

    def __init__(self, spec: ModelSpec, config: SamplerConfig = SamplerConfig()):
        self.spec = spec
        self.config = config
        L = choose_truncation(spec.phase, config.tol)
        self.grid = midpoint_grid(L, config.n_nodes)
        lat = spec.lattice
        self.nbrs = np.array([lat.neighbors(i) for i in range(lat.n_sites)], dtype=int)
        self.J = np.array([[spec.coupling(i, j) for j in row] for i, row in enumerate(self.nbrs)])
        self.classes = tuple(np.array(c, dtype=int) for c in lat.classes())
        seqs = np.random.SeedSequence(config.seed).spawn(config.n_chains)
        self.rngs = [np.random.Generator(np.random.Philox(s)) for s in seqs]
        self._phi = spec.phase.value(self.grid.nodes)

    def _uniforms(self, k: int) -> np.ndarray:
        return np.stack([rng.random(k) for rng in self.rngs])

    def _draw(self, energy: np.ndarray) -> np.ndarray:
        """Inverse-CDF draws from ``exp(-energy)`` on the midpoint cells."""
        logits = -(energy - energy.min(axis=-1, keepdims=True))
        p = np.exp(logits)
        p /= p.sum(axis=-1, keepdims=True)
        cdf = np.cumsum(p, axis=-1)
        u = self._uniforms(energy.shape[1])
        k = np.minimum((cdf < u[..., None]).sum(axis=-1), energy.shape[-1] - 1)
        pk = np.take_along_axis(p, k[..., None], -1)[..., 0]
        prev = np.take_along_axis(cdf, k[..., None], -1)[..., 0] - pk
        frac = np.clip((u - prev) / pk, 0.0, 1.0)
        edges = self.grid.edges
        return edges[k] + frac * (edges[k + 1] - edges[k])

    def initial_state(self) -> ChainState:
        energy = np.broadcast_to(self._phi, (len(self.rngs), self.spec.lattice.n_sites,
                                             self.grid.size))
        return ChainState(self._draw(energy), 0, tuple(range(len(self.rngs))))

    def conditional_energy(self, x: np.ndarray, sites: np.ndarray) -> np.ndarray:
        """Energy on the site grid for each chain and site in ``sites``."""
        inter = self.spec.interaction
        g = self.grid.nodes[None, None, None, :]
        z = x[:, self.nbrs[sites]][..., None]
        J = self.J[sites][None, :, :, None]
        pair = inter.value(g, z)
        if self.spec.pair_terms == "both":
            pair = pair + inter.value(z, g)
        return self._phi + np.sum(J * pair, axis=2)

    def step(self, state: ChainState, which: int) -> ChainState:
        sites = self.classes[which]
        x = state.x.copy()
        x[:, sites] = self._draw(self.conditional_energy(state.x, sites))
        return ChainState(x, state.sweeps + (which == 1), state.chain_ids)

    def sweep(self, state: ChainState) -> ChainState:
        return self.step(self.step(state, 0), 1)

    def run(self, n_sweeps: int | None = None, burn_in: int | None = None,
            state: ChainState | None = None) -> tuple:
        """Trajectory of shape ``(chains, n_sweeps, sites)`` after burn-in."""
        n_sweeps = self.config.n_sweeps if n_sweeps is None else n_sweeps
        burn_in = self.config.burn_in if burn_in is None else burn_in
        state = self.initial_state() if state is None else state
        for _ in range(burn_in):
            state = self.sweep(state)
        traj = np.empty((state.x.shape[0], n_sweeps, state.x.shape[1]))
        for k in range(n_sweeps):
            state = self.sweep(state)
            traj[:, k] = state.x
        return traj, state


def block_heatbath_step(sampler: HeatBathSampler, state: ChainState, which: int) -> ChainState:
    """Redraw every site of class ``which`` given the current other class."""
    return sampler.step(state, which)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    se: float
    rhat: float


def obm_variance(y: np.ndarray) -> float:
    """Overlapping-batch-means estimate of the asymptotic variance of ``y``."""
    n = len(y)
    b = max(1, int(np.sqrt(n)))
    if n - b < 1:
        return float(np.var(y))
    c = np.concatenate([[0.0], np.cumsum(y - y.mean())])
    means = (c[b:] - c[:-b]) / b
    return float(n * b / ((n - b) * (n - b + 1)) * np.sum(means ** 2))


def gelman_rubin(chains: np.ndarray) -> float:
    """Potential scale reduction factor for an array ``(chains, draws)``."""
    m, n = chains.shape
    if m < 2 or n < 2:
        return 1.0
    w = np.mean(np.var(chains, axis=1, ddof=1))
    b = n * np.var(chains.mean(axis=1), ddof=1)
    if w <= 0:
        return 1.0
    var = (n - 1) / n * w + b / n
    return float(np.sqrt(var / w))


def mc_estimate(samples: np.ndarray) -> MCEstimate:
    """Pooled mean, standard error and R-hat from ``(chains, draws)`` samples."""
    samples = np.asarray(samples, dtype=float)
    m, n = samples.shape
    var = np.array([obm_variance(c) for c in samples])
    se = float(np.sqrt(np.sum(var / n)) / m)
    return MCEstimate(float(samples.mean()), se, gelman_rubin(samples))


def require_converged(estimates: Sequence[MCEstimate], rhat_max: float) -> None:
    bad = [e.rhat for e in estimates if not e.rhat <= rhat_max]
    if bad:
        raise ConvergenceDiagnosticError(
            f"R-hat {max(bad):.3f} exceeds {rhat_max:g}: chains not equilibrated")


# -- concentration ------------------------------------------------------------------

@dataclass
class ConcentrationReport:
    mean_f: MCEstimate
    moments: list       # (lambda, estimate, se, bound, pass)
    tails: list         # (h, frequency, se, bound, pass)
    B: float

    @property
    def passed(self) -> bool:
        return all(r[4] for r in self.moments) and all(r[4] for r in self.tails)

    header = ["kind", "param", "estimate", "se", "bound", "pass"]

    def rows(self) -> list:
        out = [["moment", f"{l:g}", f"{e:.10e}", f"{s:.3e}", f"{b:.10e}", str(p).lower()]
               for l, e, s, b, p in self.moments]
        out += [["tail", f"{h:g}", f"{e:.10e}", f"{s:.3e}", f"{b:.10e}", str(p).lower()]
                for h, e, s, b, p in self.tails]
        return out


def linear_statistic(n_sites: int, weights: np.ndarray | None = None) -> tuple:
    """``f(x) = sum_i w_i x_i`` with ``w = 1/sqrt(n)`` by default; returns
    ``(callable, |grad f|^2)``."""
    w = np.full(n_sites, 1 / np.sqrt(n_sites)) if weights is None else np.asarray(weights, float)
    return (lambda x: x @ w), float(np.sum(w ** 2))


def concentration_check(sampler: HeatBathSampler, B: float,
                        f: Callable | None = None, grad_bound: float | None = None,
                        lambdas: Sequence[float] = (0.25, 0.5, 1.0),
                        hs: Sequence[float] = (0.5, 1.0, 2.0),
                        traj: np.ndarray | None = None) -> ConcentrationReport:
    """Exponential-moment and tail bounds for a unit-gradient observable.

    Passes when ``estimate <= bound + 2 SE`` for every ``lambda`` and ``h``.
    Raises :class:`ConvergenceDiagnosticError` when R-hat of ``f`` exceeds
    the configured limit.
    """
    if f is None:
        f, grad_bound = linear_statistic(sampler.spec.lattice.n_sites)
    if grad_bound is not None and grad_bound > 1 + 1e-12:
        raise DegenerateInput(f"|grad f|^2 = {grad_bound:g} exceeds 1")
    if traj is None:
        traj, _ = sampler.run()
    vals = f(traj)
    mf = mc_estimate(vals)
    require_converged([mf], sampler.config.rhat_max)
    moments = []
    for lam in lambdas:
        est = mc_estimate(np.exp(lam * vals))
        bound = float(np.exp(lam * mf.mean + B * lam ** 2))
        moments.append((float(lam), est.mean, est.se, bound, est.mean <= bound + 2 * est.se))
    tails = []
    for h in hs:
        est = mc_estimate((np.abs(vals - mf.mean) >= h).astype(float))
        bound = float(2 * np.exp(-h ** 2 / B))
        tails.append((float(h), est.mean, est.se, bound, est.mean <= bound + 2 * est.se))
    return ConcentrationReport(mf, moments, tails, float(B))


def estimate_iterates(sampler: HeatBathSampler, f: Callable, start: np.ndarray,
                      n_max: int) -> list:
    """Monte Carlo estimates of ``P^n f(start)`` for ``n = 0..n_max``.

    Every chain starts at ``start``; after ``n`` sweeps the chains are
    independent draws from ``P^n(start, .)``, so the standard error is the
    sample standard deviation over chains divided by ``sqrt(chains)``.
    """
    start = np.asarray(start, dtype=float)
    m = len(sampler.rngs)
    state = ChainState(np.repeat(start[None, :], m, axis=0), 0, tuple(range(m)))
    out = []
    for n in range(n_max + 1):
        if n:
            state = sampler.sweep(state)
        vals = np.asarray(f(state.x), dtype=float)
        se = float(np.std(vals, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
        out.append(MCEstimate(float(vals.mean()), se, float("nan")))
    return out
