"""Command-line experiment runner.

Every subcommand reads one TOML file of flat keys, writes ``<subcommand>.csv``
into the output directory and appends its headline constants to
``summary.csv``.  Exit status: 0 pass, 1 verdict fail, 2 configuration or
feasibility error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import dynamics as dyn
from . import inequalities as ineq
from .errors import (ConfigError, ConvergenceDiagnosticError, DivergenceError,
                     GibbsLSIError, InsufficientDecay)
from .functionals import ConstantLedger, GridFunction, basis_family, lattice_family
from .measures import build_gibbs_proxy
from .model import HypothesisScan, ModelSpec, check_hypotheses, region_check

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODEL_KEYS = {"alpha", "p", "k0", "k1", "epsilon", "rho", "s", "k2", "kgrowth", "Mstar",
              "J", "dim", "side", "eps_h", "allow_low_p", "pair_terms", "J_edges"}

SUBCOMMANDS = ("check-hypotheses", "region", "estimate-ls", "ubound", "sweepout",
               "blockfit", "iterate", "pipeline", "concentration")

OBSERVABLES = ("x0^2", "x0^2+0.5x1^2", "sum x^2", "x0*x1")


@dataclass(frozen=True)
class RunConfig:
    """Model keys plus run settings; see ``docs/configuration.md``."""

    model: dict = field(default_factory=dict)
    engine: str = "exact"
    nodes_per_site: int | None = None
    omega_max: float = 3.0
    omega_step: float = 0.5
    J_list: tuple = (0.0, 0.02, 0.05, 0.1)
    r_list: tuple = (1.0, 2.0, 4.0)
    lambda_list: tuple = (0.25, 0.5, 1.0)
    h_list: tuple = (0.5, 1.0, 2.0)
    family: str = "default"
    seed: int = 0
    n_chains: int = 10
    burn_in: int = 1000
    n_sweeps: int = 10000
    k1_cap: float = ineq.K1_CAP
    region_M: float = 10.0
    region_N: float = 10.0
    n_iterate: int = 6
    telescope_levels: int = 2
    observable: str = "x0^2"
    bound: float | None = None
    scan_d_max: float = 6.0
    scan_n_d: int = 600
    scan_omega_step: float = 0.25
    dump_trajectory: bool = False
    threads: int | None = None
    out: str = "out"

    def __post_init__(self):
        if self.engine not in ("exact", "mcmc"):
            raise ConfigError(f"engine must be 'exact' or 'mcmc', got {self.engine!r}")
        basis_family(self.family)
        for name in ("J_list", "r_list", "lambda_list", "h_list"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must be nonempty")
        if self.observable not in OBSERVABLES:
            raise ConfigError(f"observable must be one of {OBSERVABLES}")
        if self.omega_step <= 0 or self.omega_max < 0:
            raise ConfigError("omega grid must be nonempty")
        if min(self.n_chains, self.n_sweeps) < 1 or self.burn_in < 0:
            raise ConfigError("sampler sizes must be positive")

    @classmethod
    def from_mapping(cls, raw: dict, **overrides) -> "RunConfig":
        run_keys = {f for f in cls.__dataclass_fields__ if f != "model"}
        unknown = [k for k in raw if k not in MODEL_KEYS | run_keys]
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kw = {k: v for k, v in raw.items() if k in run_keys}
        for k in ("J_list", "r_list", "lambda_list", "h_list"):
            if k in kw:
                kw[k] = tuple(float(v) for v in kw[k])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(model={k: v for k, v in raw.items() if k in MODEL_KEYS}, **kw)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_mapping(raw, **overrides)

    def spec(self, **changes) -> ModelSpec:
        model = dict(self.model)
        model.update(changes)
        return ModelSpec.from_mapping(model)

    def omega(self) -> ineq.OmegaGrid:
        return ineq.OmegaGrid(self.omega_max, self.omega_step)

    def scan(self) -> HypothesisScan:
        return HypothesisScan(d_max=self.scan_d_max, n_d=self.scan_n_d,
                              omega_max=self.omega_max, omega_step=self.scan_omega_step)

    def sampler(self, spec: ModelSpec) -> dyn.HeatBathSampler:
        return dyn.HeatBathSampler(spec, dyn.SamplerConfig(
            n_chains=self.n_chains, burn_in=self.burn_in, n_sweeps=self.n_sweeps,
            n_nodes=self.nodes_per_site or 128, seed=self.seed))


@dataclass
class Outcome:
    verdict: bool
    constants: dict
    message: str = ""


# -- CSV output ------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def write_csv(path: Path, title: str, header: list, rows: list) -> None:
    """Write one comment line (with the timestamp), a header and the rows."""
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# gibbs-lsi {title} {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def append_summary(out: Path, sub: str, outcome: Outcome) -> None:
    path = out / "summary.csv"
    new = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            fh.write(f"# gibbs-lsi summary {stamp}\n")
            w.writerow(["subcommand", "verdict", "constant", "value"])
        verdict = "pass" if outcome.verdict else "fail"
        if not outcome.constants:
            w.writerow([sub, verdict, "", ""])
        for k, v in outcome.constants.items():
            w.writerow([sub, verdict, k, _fmt(v)])


# -- observables -------------------------------------------------------------------

def observable_grid(name: str, grid) -> GridFunction:
    x = {s: GridFunction.coordinate(grid, s) for s in grid.sites}
    if name == "x0^2":
        return x[0].square()
    if name == "x0^2+0.5x1^2":
        return x[0].square() + 0.5 * x[1].square()
    if name == "x0*x1":
        return x[0] * x[1]
    total = x[grid.sites[0]].square()
    for s in grid.sites[1:]:
        total = total + x[s].square()
    return total


def observable_samples(name: str) -> Callable:
    return {
        "x0^2": lambda x: x[..., 0] ** 2,
        "x0^2+0.5x1^2": lambda x: x[..., 0] ** 2 + 0.5 * x[..., 1] ** 2,
        "x0*x1": lambda x: x[..., 0] * x[..., 1],
        "sum x^2": lambda x: np.sum(x ** 2, axis=-1),
    }[name]


# -- subcommands -------------------------------------------------------------------

def _exact_only(cfg: RunConfig, what: str) -> None:
    if cfg.engine != "exact":
        raise ConfigError(f"{what} needs the exact engine (tensor-grid torus)")


def _proxy(cfg: RunConfig, spec: ModelSpec):
    nu = build_gibbs_proxy(spec, n_nodes=cfg.nodes_per_site)
    fam = lattice_family(nu.grid, spec.lattice.edges, cfg.family)
    return nu, fam


def cmd_check_hypotheses(cfg: RunConfig, out: Path) -> Outcome:
    rep = check_hypotheses(cfg.spec(), cfg.scan())
    write_csv(out / "check-hypotheses.csv", f"check-hypotheses [{rep.resolution}]",
              rep.header, rep.rows())
    msg = "" if rep.passed else "failing: " + ", ".join(
        f"{n}" + (f" ({rep[n].note})" if rep[n].note else "") for n in rep.failures())
    return Outcome(rep.passed, {r.name: r.margin for r in rep.results}, msg)


def cmd_region(cfg: RunConfig, out: Path) -> Outcome:
    rep = region_check(cfg.spec(), cfg.region_M, cfg.region_N, cfg.scan())
    write_csv(out / "region.csv", "region", rep.header, [rep.row()])
    msg = "" if rep.passed else ("empty region" if rep.empty else f"zeta={rep.zeta:.4g} >= 1")
    return Outcome(rep.passed, {"zeta": rep.zeta, "M": rep.M, "N": rep.N}, msg)


def cmd_estimate_ls(cfg: RunConfig, out: Path) -> Outcome:
    est = ineq.estimate_ls_sg(cfg.spec(), cfg.omega(), cfg.family,
                              n_nodes=cfg.nodes_per_site or 128)
    write_csv(out / "estimate-ls.csv", f"estimate-ls [{est.resolution}; {cfg.omega().describe()}]",
              est.header, est.rows())
    ok = bool(np.isfinite(est.c) and np.all(est.c_sg <= est.c_ls * (1 + 1e-12)))
    return Outcome(ok, {"c": est.c, "c_SG": est.c_SG, "c_SG_eig": est.c_SG_eig})


def cmd_ubound(cfg: RunConfig, out: Path) -> Outcome:
    spec = cfg.spec()
    rows, consts = [], {}
    prev, monotone, ok = -math.inf, True, True
    for r in cfg.r_list:
        u = ineq.ubound_constant(spec, r, cfg.omega(), cfg.family,
                                 n_nodes=cfg.nodes_per_site or 128)
        fine = ineq.ubound_constant(spec, r, cfg.omega().refined(), cfg.family,
                                    n_nodes=cfg.nodes_per_site or 128, reference=False)
        rel = abs(fine.C - u.C) / u.C
        monotone &= u.C >= prev
        prev = u.C
        ok &= bool(np.isfinite(u.C)) and rel <= 0.15
        rows.append([r, u.C, u.C_reference, u.flatness, fine.C, rel, rel <= 0.15])
        consts[f"C(r={r:g})"] = u.C
    write_csv(out / "ubound.csv", "ubound",
              ["r", "C_family", "C_best_grid", "profile_spread", "C_refined_omega",
               "refinement_change", "stable"], rows)
    consts["nondecreasing_in_r"] = monotone
    msg = [] if monotone else ["C is not nondecreasing in r"]
    if not ok:
        msg.append("C not finite or not stable under omega refinement")
    return Outcome(ok and monotone, consts, "; ".join(msg))


def cmd_sweepout(cfg: RunConfig, out: Path) -> Outcome:
    _exact_only(cfg, "sweepout")
    rows, consts = [], {}
    base = cfg.spec()
    i = 0
    j = base.lattice.neighbors(i)[0]
    J_values = sorted(set(cfg.J_list) | {base.coupling.J})
    for J in J_values:
        spec = base.replace(J=J)
        nu, fam = _proxy(cfg, spec)
        fit = ineq.sweepout_fit(nu, fam, i, j, cfg.k1_cap)
        d3 = ineq.weighted_variance_fit(nu, fam, i, j)
        D1, D2 = fit.headline
        rows.append([J, D1, D2, d3.value, fit.success, len(fit.frontier()), fit.family_size])
        if J == base.coupling.J:
            consts.update(D1=D1, D2=D2, D3=d3.value)
    write_csv(out / "sweepout.csv", f"sweepout [edge {i}-{j}; K1 cap {cfg.k1_cap:g}]",
              ["J", "D1", "D2", "D3", "D2_below_1", "frontier_points", "family_size"], rows)
    ok = consts["D2"] < 1
    return Outcome(ok, consts, "" if ok else f"D2={consts['D2']:.4g} >= 1")


def _block_constants(cfg: RunConfig, spec: ModelSpec, c: float, ledger: ConstantLedger,
                     nu=None, fam=None) -> tuple:
    nu, fam = (nu, fam) if nu is not None else _proxy(cfg, spec)
    res = f"{nu.grid.shape[0]} nodes/site"
    n = len(fam)
    blk = ineq.block_sweepout_fit(nu, fam, cfg.k1_cap)
    R1, R2 = blk.headline
    ledger.record("R1", R1, "block sweep-out fit", resolution=res, family_size=n)
    ledger.record("R2", R2, "block sweep-out fit", resolution=res, family_size=n)
    fits = [ineq.sqrt_sweepout_fit(nu, fam, o, cfg.k1_cap) for o in ((0, 1), (1, 0))]
    asm = ineq.choose_sqrt_constants(fits, c)
    for name, v in (("C1", asm.C1), ("C2", asm.C2)):
        ledger.record(name, v, "square-root sweep-out fit, both orientations, B-minimizing",
                      resolution=res, family_size=n,
                      slack=min(f.slack(asm.C1, asm.C2) for f in fits))
    i = spec.lattice.gamma1[0]
    j = spec.lattice.neighbors(i)[0]
    edge = ineq.edge_sqrt_fit(nu, fam, i, j, cfg.k1_cap)
    G1, G2 = edge.headline
    ledger.record("G1", G1, "per-edge square-root fit", resolution=res, family_size=n)
    ledger.record("G2", G2, "per-edge square-root fit", resolution=res, family_size=n)
    m0 = ineq.covariance_weight_bound(nu, fam, i, j)
    ledger.record("m0", m0.value, "covariance-weight ratio", resolution=res, family_size=n)
    return nu, fam, blk, fits, asm, edge


def cmd_blockfit(cfg: RunConfig, out: Path) -> Outcome:
    _exact_only(cfg, "blockfit")
    spec = cfg.spec()
    c = ineq.estimate_ls_sg(spec, cfg.omega(), cfg.family, eig=False).c
    ledger = ConstantLedger()
    nu, fam, blk, fits, asm, edge = _block_constants(cfg, spec, c, ledger)
    rows = []
    for fit in [blk] + fits + [edge]:
        k1, k2 = fit.headline
        rows.append([fit.name, k1, k2, fit.success, len(fit.frontier()), fit.family_size])
    rows.append(["assembly(C1,C2)", asm.C1, asm.C2, asm.C2 < 1, "", len(fam)])
    rows.append(["covariance_weight(m0)", ledger["m0"], "", "", "", len(fam)])
    write_csv(out / "blockfit.csv", f"blockfit [K1 cap {cfg.k1_cap:g}]",
              ["fit", "K1", "K2", "K2_below_1", "frontier_points", "family_size"], rows)
    ok = blk.success and asm.C2 < 1
    consts = {k: ledger[k] for k in ("R1", "R2", "C1", "C2", "G1", "G2", "m0")}
    return Outcome(ok, consts, "" if ok else "R2 or C2 not below 1")


def cmd_iterate(cfg: RunConfig, out: Path) -> Outcome:
    spec = cfg.spec()
    if cfg.engine == "mcmc":
        smp = cfg.sampler(spec)
        f = observable_samples(cfg.observable)
        start = np.ones(spec.lattice.n_sites)
        est = dyn.estimate_iterates(smp, f, start, cfg.n_iterate)
        write_csv(out / "iterate.csv", f"iterate [mcmc; f={cfg.observable}; start=1]",
                  ["n", "estimate", "se"], [[n, e.mean, e.se] for n, e in enumerate(est)])
        return Outcome(True, {"P^n f": est[-1].mean})
    nu, fam = _proxy(cfg, spec)
    P = dyn.BlockKernel(nu)
    f = observable_grid(cfg.observable, nu.grid)
    conv = dyn.convergence_fit(P, f, cfg.n_iterate)
    R2 = ineq.block_sweepout_fit(nu, fam, cfg.k1_cap).headline[1]
    tel = dyn.entropy_telescope(nu, 1.0 + f, cfg.telescope_levels)
    write_csv(out / "iterate.csv", f"iterate [exact; f={cfg.observable}]",
              ["n", "residual"], conv.rows())
    write_csv(out / "iterate_telescope.csv", f"iterate telescope [f=1+{cfg.observable}]",
              tel.header, tel.rows() + [["remainder", "", f"{tel.remainder:.10e}", ""],
                                        ["total", "", f"{tel.total:.10e}", ""]])
    ok = conv.r_squared >= 0.99 and conv.rate <= R2 ** 2 + 0.05 and tel.residual < 1e-8
    return Outcome(ok, {"rate": conv.rate, "r_squared": conv.r_squared, "R2": R2,
                        "telescope_residual": tel.residual})


def run_pipeline(cfg: RunConfig, spec: ModelSpec) -> tuple:
    """Fit every constant on the exact torus and assemble ``A`` and ``B``."""
    ledger = ConstantLedger()
    hyp = check_hypotheses(spec, cfg.scan())
    reg = region_check(spec, cfg.region_M, cfg.region_N, cfg.scan())
    ledger.record("zeta", reg.zeta, "region scan", resolution=cfg.scan().describe())
    ledger.record("M", reg.M, "configured")
    ledger.record("N", reg.N, "configured")
    ls = ineq.estimate_ls_sg(spec, cfg.omega(), cfg.family, n_nodes=cfg.nodes_per_site or 128)
    res1 = f"{ls.resolution}; {cfg.omega().describe()}"
    ledger.record("c", ls.c, "single-site LS, sup over omega", resolution=res1,
                  family_size=ls.family_size)
    ledger.record("c_SG", ls.c_SG, "single-site SG, sup over omega", resolution=res1,
                  family_size=ls.family_size)
    ub = ineq.ubound_constant(spec, spec.interaction.s, cfg.omega(), cfg.family, reference=False)
    ledger.record("C", ub.C, f"U-bound at r=s={spec.interaction.s:g}", resolution=res1,
                  family_size=ub.family_size)
    ledger.record("c0", ineq.covariance_constant(spec, cfg.omega(), cfg.family),
                  "covariance bound, h = pair gradient", resolution=res1)
    nu, fam = _proxy(cfg, spec)
    res = f"{nu.grid.shape[0]} nodes/site"
    i = spec.lattice.gamma0[0]
    j = spec.lattice.neighbors(i)[0]
    sw = ineq.sweepout_fit(nu, fam, i, j, cfg.k1_cap)
    D1, D2 = sw.headline
    ledger.record("D1", D1, "sweep-out fit", resolution=res, family_size=len(fam))
    ledger.record("D2", D2, "sweep-out fit", resolution=res, family_size=len(fam))
    ledger.record("D3", ineq.weighted_variance_fit(nu, fam, i, j).value, "weighted variance",
                  resolution=res, family_size=len(fam))
    _, _, blk, fits, asm, _ = _block_constants(cfg, spec, ls.c, ledger, nu, fam)
    ledger.record("A", asm.A, "1/(1-C2^2)")
    ledger.record("B", asm.B, "max{cA(C1/C2+C2+C1), cA}")
    verdict = dyn.global_ls_verdict(nu, fam, asm.B)
    return ledger, hyp, verdict


def cmd_pipeline(cfg: RunConfig, out: Path) -> Outcome:
    _exact_only(cfg, "pipeline")
    spec = cfg.spec()
    ledger, hyp, verdict = run_pipeline(cfg, spec)
    write_csv(out / "pipeline.csv", "pipeline constants (empirical lower bounds)",
              ledger.header, ledger.rows())
    write_csv(out / "pipeline_verdict.csv",
              f"pipeline global LS verdict [B={verdict.B:.6g}]", verdict.header,
              verdict.rows() + [["empirical_global_constant", "", "", f"{verdict.empirical:.10e}"]])
    ok = hyp.passed and verdict.passed and verdict.empirical <= verdict.B and \
        ledger["D2"] < 1 and ledger["R2"] < 1 and ledger["C2"] < 1
    consts = {k: ledger[k] for k in ("c", "C", "D1", "D2", "R1", "R2", "C1", "C2", "A", "B")}
    consts["empirical_global"] = verdict.empirical
    msg = "" if ok else ("hypotheses failing: " + ",".join(hyp.failures()) if not hyp.passed
                         else "global verdict or a sweep-out constant failed")
    return Outcome(ok, consts, msg)


def bound_lattice(spec: ModelSpec) -> ModelSpec:
    """Largest exact-engine torus of the same dimension (4 sites)."""
    side = 4 if spec.lattice.dim == 1 else 2
    return spec.replace(side=side)


def cmd_concentration(cfg: RunConfig, out: Path) -> Outcome:
    spec = cfg.spec()
    if cfg.bound is not None:
        B, source = float(cfg.bound), "configured"
    else:
        small = bound_lattice(spec)
        ledger, _, _ = run_pipeline(replace(cfg, engine="exact"), small)
        B, source = ledger["B"], f"pipeline on {small.lattice.dim}-D side {small.lattice.side}"
    smp = cfg.sampler(spec)
    traj, _ = smp.run()
    if cfg.dump_trajectory:
        c0 = traj[0]
        write_csv(out / "trajectory.csv", "trajectory chain 0", ["sweep", "site", "value"],
                  [[k, s, c0[k, s]] for k in range(c0.shape[0]) for s in range(c0.shape[1])])
    rep = dyn.concentration_check(smp, B, lambdas=cfg.lambda_list, hs=cfg.h_list, traj=traj)
    write_csv(out / "concentration.csv",
              f"concentration [B={B:.6g} {source}; {cfg.n_chains} chains x {cfg.n_sweeps} sweeps]",
              rep.header, rep.rows())
    return Outcome(rep.passed, {"B": B, "nu_f": rep.mean_f.mean, "rhat": rep.mean_f.rhat})


COMMANDS = {
    "check-hypotheses": cmd_check_hypotheses,
    "region": cmd_region,
    "estimate-ls": cmd_estimate_ls,
    "ubound": cmd_ubound,
    "sweepout": cmd_sweepout,
    "blockfit": cmd_blockfit,
    "iterate": cmd_iterate,
    "pipeline": cmd_pipeline,
    "concentration": cmd_concentration,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gibbs-lsi", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="TOML file with flat keys")
    ap.add_argument("--out", default=None, help="output directory (default: config 'out')")
    ap.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    ap.add_argument("--engine", choices=("exact", "mcmc"), default=None)
    ap.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    return ap


def run(subcommand: str, config: str, *, out: str | None = None, seed: int | None = None,
        engine: str | None = None, threads: int | None = None) -> int:
    """Execute one subcommand; returns the exit code."""
    try:
        cfg = RunConfig.from_file(config, seed=seed, engine=engine, threads=threads, out=out)
        if seed is not None and seed < 0:
            raise ConfigError("seed must be nonnegative")
        out_dir = Path(cfg.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if not _writable(out_dir):
            raise ConfigError(f"output directory not writable: {out_dir}")
        outcome = _limited(cfg.threads, lambda: COMMANDS[subcommand](cfg, out_dir))
    except (DivergenceError, ConvergenceDiagnosticError, InsufficientDecay) as exc:
        print(f"gibbs-lsi {subcommand}: fail: {exc}", file=sys.stderr)
        return 1
    except (GibbsLSIError, OSError) as exc:
        print(f"gibbs-lsi {subcommand}: error: {exc}", file=sys.stderr)
        return 2
    append_summary(out_dir, subcommand, outcome)
    status = "pass" if outcome.verdict else "fail"
    print(f"{subcommand}: {status}" + (f" ({outcome.message})" if outcome.message else ""))
    return 0 if outcome.verdict else 1


def _writable(path: Path) -> bool:
    probe = path / ".write-probe"
    try:
        probe.write_text("")
        probe.unlink()
        return True
    except OSError:
        return False


def _limited(threads, fn):
    if threads is None:
        return fn()
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=threads):
        return fn()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.subcommand, args.config, out=args.out, seed=args.seed,
               engine=args.engine, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
