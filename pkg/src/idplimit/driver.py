"""Run orchestration: scheme assembly, the time loop with dt-halving
retries, snapshot and diagnostics output, error norms and convergence
studies."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .constraints import (
    ComponentBounds,
    ConcaveLowerBound,
    ConstraintInfeasibleError,
    ConstraintSet,
    EntropyInequality,
    SpecificEntropyMin,
)
from .dgsem import DgsemMesh1D, DgsemMesh2D, DgsemScheme1D, DgsemScheme2D, lobatto_basis
from .fluxes import make_interface_flux, make_volume_flux
from .fv import FvMesh1D, FvScheme1D
from .limiter import LimiterConfig, boundary_residue
from .newton import SolverFailure
from .physics import (
    AdmissibilityError,
    Burgers1D,
    Burgers2D,
    Euler1D,
    Kpp2D,
    LinearAdvection1D,
    kruzhkov_entropy_pair,
)
from .presets import PRESETS, RunConfig, initial_condition
from .riemann import exact_linear_advection, exact_riemann_euler
from .timeint import (
    MULTISTEP,
    StepContext,
    StepDiagnostics,
    TABLEAUX,
    lo_single_step,
    multistep_step,
    rk_step,
    timedg_step,
)


def make_law(cfg: RunConfig):
    if cfg.law == "euler1d":
        return Euler1D(gamma=cfg.gamma)
    if cfg.law == "linear1d":
        return LinearAdvection1D()
    if cfg.law == "burgers1d":
        return Burgers1D(u_max=cfg.u_max)
    if cfg.law == "burgers2d":
        return Burgers2D(u_max=cfg.u_max)
    if cfg.law == "kpp2d":
        return Kpp2D()
    raise KeyError(f"unknown law '{cfg.law}'")


def make_scheme(cfg: RunConfig, law, u0_sup_speed=None):
    iflux = make_interface_flux(cfg.interface_flux, law)
    if cfg.space == "fv":
        if cfg.dim != 1:
            raise ValueError("the FV discretization is one-dimensional")
        mesh = FvMesh1D(cfg.nx, cfg.domain[0], bc=cfg.bc)
        return FvScheme1D(law, mesh, iflux, slope_limiter=cfg.slope_limiter)
    vflux = make_volume_flux(cfg.volume_flux, law)
    if cfg.viscosity_mode == "none":
        visc = 0.0
    elif cfg.viscosity_mode == "lipschitz":
        visc = cfg.viscosity_factor * law.lipschitz
    elif cfg.viscosity_mode == "lambda0":
        if u0_sup_speed is None:
            raise ValueError("lambda0 viscosity needs the initial wave speed")
        visc = cfg.viscosity_factor * u0_sup_speed
    else:
        raise KeyError(f"unknown viscosity mode '{cfg.viscosity_mode}'")
    basis = lobatto_basis(cfg.p)
    if cfg.dim == 1:
        mesh = DgsemMesh1D(cfg.nx, cfg.domain[0], bc=cfg.bc)
        return DgsemScheme1D(law, mesh, basis, vflux, iflux, viscosity=visc)
    mesh = DgsemMesh2D(cfg.nx, cfg.ny, cfg.domain, bc=cfg.bc)
    return DgsemScheme2D(law, mesh, basis, vflux, iflux, viscosity=visc)


# ------------------------------------------------------------- constraints

class ConstraintBuilder:
    """Builds the per-step constraint sets described in the configuration."""

    def __init__(self, cfg, law, scheme, u0):
        self.cfg = cfg
        self.law = law
        self.scheme = scheme
        self.mu = cfg.mu
        self.ic_min = float(u0[..., 0].min())
        self.ic_max = float(u0[..., 0].max())

    def _instantiate(self, specs, u_n, u_lo, dt):
        chain = []
        for spec in specs:
            kind = spec[0]
            if kind == "rho_min":
                chain.append(ComponentBounds(0, lower=float(spec[1]), name="rho min"))
            elif kind == "rhoe_min":
                chain.append(ConcaveLowerBound(self.law.internal_energy_density,
                                               float(spec[1]), name="rho e min"))
            elif kind == "entropy_stencil":
                s_n = self.law.specific_entropy(self.scheme.averages(u_n))
                bound = self.scheme.stencil_min(s_n)
                if u_lo is not None:
                    s_lo = self.law.specific_entropy(self.scheme.averages(u_lo))
                    bound = np.minimum(bound, s_lo)
                chain.append(SpecificEntropyMin(self.law, bound))
            elif kind == "bounds_ic":
                chain.append(ComponentBounds(0, lower=self.ic_min, upper=self.ic_max,
                                             name="maximum principle"))
            elif kind == "bounds":
                chain.append(ComponentBounds(0, lower=float(spec[1]),
                                             upper=float(spec[2]), name="bounds"))
            elif kind == "kruzhkov_budget":
                pair = kruzhkov_entropy_pair(self.law, K=float(spec[1]))
                avg_n = self.scheme.averages(u_n)
                budget = pair.eta(avg_n)
                if u_lo is not None and dt is not None:
                    q_lo = self.scheme.entropy_flux_divergence(
                        u_lo, pair, lam=self.law.lipschitz)
                    budget = budget - dt / self.scheme.cell_measure() * q_lo
                    # never infeasible at the LO average (assumed inequality)
                    budget = np.maximum(budget, pair.eta(self.scheme.averages(u_lo)))
                chain.append(EntropyInequality(pair, budget, name="kruzhkov budget"))
            else:
                raise KeyError(f"unknown constraint '{kind}'")
        return ConstraintSet(chain, mu=self.mu)

    def factory(self, dt):
        def build(u_n, u_lo):
            cset = self._instantiate(self.cfg.constraints, u_n, u_lo, dt)
            zs = None
            if self.cfg.zs_constraints:
                zs = self._instantiate(self.cfg.zs_constraints, u_n, u_lo, dt)
            return cset, zs

        return build


# ------------------------------------------------------------------ output

@dataclass
class Snapshot:
    time: float
    columns: list
    data: np.ndarray
    config_hash: str
    meta: dict = field(default_factory=dict)


def make_snapshot(cfg, scheme, u, t):
    law = scheme.law
    if cfg.dim == 1:
        x = np.asarray(scheme.coords()).reshape(-1)
        coords = [("x", x)]
    else:
        x, y = scheme.coords()
        coords = [("x", x.reshape(-1)), ("y", y.reshape(-1))]
    flat = u.reshape(-1, scheme.n_eq)
    columns = [name for name, _ in coords] + [f"u{i}" for i in range(scheme.n_eq)]
    arrays = [arr for _, arr in coords] + [flat[:, i] for i in range(scheme.n_eq)]
    if isinstance(law, Euler1D):
        columns += ["rho", "v", "p", "s"]
        arrays += [flat[:, 0], law.velocity(flat), law.pressure(flat),
                   law.specific_entropy(flat)]
    data = np.column_stack(arrays)
    return Snapshot(time=t, columns=columns, data=data,
                    config_hash=cfg.config_hash(),
                    meta={"scheme": cfg.space, "name": cfg.name})


def write_snapshot(snapshot: Snapshot, path):
    """CSV with two comment header lines; 17 significant digits per cell."""
    buf = io.StringIO()
    buf.write(f"# idp-limit v{__version__}\n")
    buf.write(f"# config={snapshot.config_hash} t={snapshot.time:.17g}\n")
    buf.write(",".join(snapshot.columns) + "\n")
    for row in snapshot.data:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def read_snapshot(path):
    with open(path, encoding="utf-8") as fh:
        version_line = fh.readline().strip()
        meta_line = fh.readline().strip()
        reader = csv.reader(fh)
        columns = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    t = float(meta_line.split("t=")[1])
    cfg_hash = meta_line.split("config=")[1].split()[0]
    return Snapshot(time=t, columns=columns, data=data, config_hash=cfg_hash,
                    meta={"version_line": version_line})


@dataclass
class RunResult:
    status: int  # 0 ok, 2 admissibility abort, 3 solver failure
    config: RunConfig
    snapshot: Snapshot | None
    diagnostics: list
    error: dict | None = None
    scheme: object = None
    state: np.ndarray | None = None
    limiter_history: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == 0


DIAG_ERROR_KEYS = ("step", "reason", "detail")


def _diag_row(cfg, scheme, law, u, t, dt, step, sdiag: StepDiagnostics):
    row = {"step": step, "t": t, "dt": dt}
    flat = u.reshape(-1, scheme.n_eq)
    if isinstance(law, Euler1D):
        row["min_rho"] = float(flat[:, 0].min())
        row["min_e"] = float(law.internal_energy(flat).min())
        row["min_rhoe"] = float(law.internal_energy_density(flat).min())
        row["min_s"] = float(law.specific_entropy(flat).min())
    else:
        row["min_u"] = float(flat[:, 0].min())
        row["max_u"] = float(flat[:, 0].max())
    totals = scheme.total(u)
    for i, v in enumerate(np.atleast_1d(totals)):
        row[f"total_u{i}"] = float(v)
    bd = sdiag.boundary_change
    if bd is None:
        bd = np.zeros(scheme.n_eq)
    for i, v in enumerate(np.atleast_1d(bd)):
        row[f"boundary_u{i}"] = float(v)
    row["limiter_iterations"] = sdiag.limiter_iterations
    row["newton_iterations"] = sdiag.newton_iterations
    row["floored_evaluations"] = sdiag.floored_evaluations
    return row


def run_case(cfg: RunConfig, out_dir=None, verbose=False):
    """Execute the configured run; never raises for physics/solver aborts."""
    law = make_law(cfg)
    if cfg.space == "dgsem" and cfg.viscosity_mode == "lambda0":
        probe_scheme = make_scheme(cfg, law, u0_sup_speed=1.0)
        u_probe = probe_scheme.interpolate(initial_condition(cfg, law))
        sup = float(law.max_wave_speed(u_probe).max())
        scheme = make_scheme(cfg, law, u0_sup_speed=sup)
    else:
        scheme = make_scheme(cfg, law)
    if cfg.mode == "ho" and hasattr(scheme, "trace_fallback"):
        scheme.trace_fallback = False  # bare unlimited scheme, no safety nets
    u = scheme.interpolate(initial_condition(cfg, law))
    scheme.check_admissible(u, "initial data")
    builder = ConstraintBuilder(cfg, law, scheme, u)
    limiter_cfg = LimiterConfig(k_max=cfg.k_max, tol=cfg.tol, beta=cfg.beta)

    tableau = TABLEAUX[cfg.scheme]() if cfg.scheme in TABLEAUX else None
    multistep = MULTISTEP.get(cfg.scheme)
    fixed_dt = None
    ramping = False
    if multistep is not None or cfg.scheme == "timedg":
        # uniform steps: Adams weights assume them, slabs just benefit
        dt0 = _dt_rule(cfg, scheme, u)
        if cfg.scheme == "timedg" and cfg.max_slab_cfl > 0.0:
            cap = cfg.max_slab_cfl * scheme.mesh.diameter() / scheme.law.lipschitz
            dt0 = min(dt0, cap)
        nsteps = max(1, int(np.ceil(cfg.t_final / dt0 - 1e-12)))
        fixed_dt = cfg.t_final / nsteps
        if cfg.scheme == "timedg" and nsteps > 1:
            # warm-up: grow the slab from an easy size instead of paying for
            # expensive stalled solves at the target size
            target_dt = fixed_dt
            fixed_dt = fixed_dt / 8.0
            ramping = True

    diagnostics = [_diag_row(cfg, scheme, law, u, 0.0, 0.0, 0, StepDiagnostics())]
    limiter_history = []
    history = []  # multistep residual history, newest first
    t, step = 0.0, 0
    status, error = 0, None

    try:
        while t < cfg.t_final * (1.0 - 1e-12):
            dt = fixed_dt if fixed_dt is not None else _dt_rule(cfg, scheme, u)
            dt = min(dt, cfg.t_final - t)
            u_next = None
            sdiag = None
            for attempt in range(4):
                try:
                    u_next, sdiag = _advance(cfg, scheme, builder, limiter_cfg,
                                             tableau, multistep, history, u, dt)
                    break
                except SolverFailure as err:
                    if attempt == 3:
                        raise
                    dt *= 0.5
            u = u_next
            if fixed_dt is not None and dt < fixed_dt:
                fixed_dt = dt  # keep a solver-forced reduction for later steps
                ramping = False
            elif ramping:
                fixed_dt = min(2.0 * fixed_dt, target_dt)
                ramping = fixed_dt < target_dt
            t += dt
            step += 1
            diagnostics.append(_diag_row(cfg, scheme, law, u, t, dt, step, sdiag))
            for stage, rep in enumerate(sdiag.limiter_reports):
                for it, r in enumerate(rep.residuals, start=1):
                    limiter_history.append(
                        {"step": step, "stage": stage, "iteration": it, "r": r,
                         "r0": rep.r0})
            if multistep is not None:
                history.insert(0, scheme.ho_residual_and_fluxes(u))
                del history[len(multistep):]
            if verbose:
                print(f"step {step}: t = {t:.6g}, dt = {dt:.3e}")
            if cfg.snapshot_cadence and out_dir and step % cfg.snapshot_cadence == 0:
                snap = make_snapshot(cfg, scheme, u, t)
                write_snapshot(snap, os.path.join(out_dir, f"snap_{step:05d}.csv"))
    except (AdmissibilityError, ConstraintInfeasibleError) as err:
        status, error = 2, {"step": step, "reason": "admissibility", "detail": str(err)}
    except SolverFailure as err:
        status, error = 3, {"step": step, "reason": "solver", "detail": str(err)}

    snapshot = make_snapshot(cfg, scheme, u, t) if status == 0 else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        if snapshot is not None:
            write_snapshot(snapshot, os.path.join(out_dir, "final.csv"))
        _write_diagnostics(os.path.join(out_dir, "diagnostics.csv"), diagnostics, error)
        _write_limiter_history(os.path.join(out_dir, "limiter.csv"), limiter_history)
        if error is not None:
            with open(os.path.join(out_dir, "error.json"), "w") as fh:
                json.dump(error, fh, indent=1)
    return RunResult(status=status, config=cfg, snapshot=snapshot,
                     diagnostics=diagnostics, error=error, scheme=scheme,
                     state=u, limiter_history=limiter_history)


def _advance(cfg, scheme, builder, limiter_cfg, tableau, multistep, history, u, dt):
    ctx = StepContext(
        scheme=scheme,
        dt=dt,
        limiter_config=limiter_cfg,
        constraint_factory=builder.factory(dt),
        limiter_enabled=(cfg.mode == "limited"),
    )
    if cfg.mode == "lo":
        diag = StepDiagnostics()
        theta = 1 if (tableau is not None and tableau.implicit) or cfg.scheme in (
            "timedg", "am2", "be") else 0
        u_next, phi_lo = lo_single_step(ctx, diag, u, theta, 1.0)
        scheme.check_admissible(u_next, "low-order update")
        diag.boundary_change = -dt * boundary_residue(scheme.graph, phi_lo)
        return u_next, diag
    if cfg.scheme == "timedg":
        return timedg_step(ctx, u, cfg.q)
    if multistep is not None:
        needed = len(multistep) - 1
        if len(history) < needed:
            # start-up: one limited SSP-RK3 step of matching accuracy
            return rk_step(ctx, u, TABLEAUX["erk3"]())
        return multistep_step(ctx, u, multistep, history)
    return rk_step(ctx, u, tableau)


def _dt_rule(cfg, scheme, u):
    if cfg.dt_rule == "lipschitz":
        return cfg.cfl * scheme.mesh.diameter() / scheme.law.lipschitz
    return scheme.max_stable_dt(u, cfg.cfl)


def _write_diagnostics(path, rows, error):
    if not rows and error is None:
        return
    keys = list(rows[0].keys()) if rows else list(DIAG_ERROR_KEYS)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        if error is not None:
            fh.write(f"# error: {json.dumps(error)}\n")
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _write_limiter_history(path, rows):
    if not rows:
        return
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------- analysis

def error_norms(scheme, u, reference):
    """Mass-weighted L1/L2/Linf per variable against a reference sampler."""
    mass = scheme.mass().reshape(-1)
    flat = u.reshape(-1, scheme.n_eq)
    coords = scheme.coords()
    if isinstance(coords, tuple):
        ref = reference(coords[0].reshape(-1), coords[1].reshape(-1))
    else:
        ref = reference(np.asarray(coords).reshape(-1))
    ref = np.asarray(ref, dtype=float)
    if ref.ndim == 1:
        ref = ref[:, None]
    e = np.abs(flat - ref)
    return {
        "l1": (mass[:, None] * e).sum(axis=0),
        "l2": np.sqrt((mass[:, None] * e**2).sum(axis=0)),
        "linf": e.max(axis=0),
    }


def reference_sampler(cfg: RunConfig, law):
    """Exact-solution sampler for presets with a known reference, else None."""
    if cfg.ic == "toro_pb3":
        ul = law.from_primitive(1.0, 0.0, (law.gamma - 1.0) * 2.5e-2)
        ur = law.from_primitive(1.0, 0.0, (law.gamma - 1.0) * 2.5e3)
        sol = exact_riemann_euler(law, ul, ur)
        return lambda x: sol.sample_at(x, cfg.t_final)
    if cfg.law == "linear1d":
        u0 = initial_condition(cfg, law)
        dom = cfg.domain[0]
        return lambda x: exact_linear_advection(u0, x, cfg.t_final, domain=dom)
    return None


def conservation_report(diagnostics):
    """Max boundary-audited relative drift of each conserved total.

    Each step predicts its totals change through the boundary faces (zero on
    periodic meshes); the report compares the recorded totals against the
    accumulated prediction, so a clean periodic run and a clean transmissive
    run both read as round-off.
    """
    if not diagnostics:
        return {}
    out = {}
    n_var = len([k for k in diagnostics[0] if k.startswith("total_")])
    for i in range(n_var):
        totals = np.array([row[f"total_u{i}"] for row in diagnostics])
        influx = np.array([row.get(f"boundary_u{i}", 0.0) for row in diagnostics])
        expected = totals[0] + np.cumsum(influx) - influx[0]
        scale = max(np.abs(totals).max(), np.abs(expected - totals[0]).max(), 1e-300)
        out[f"total_u{i}"] = float(np.abs(totals - expected).max() / scale)
    return out


def convergence_study(cfg: RunConfig, meshes, out=None):
    """Run the configuration on a mesh sequence; returns errors and orders."""
    law = make_law(cfg)
    results = []
    for n in meshes:
        c = cfg.with_overrides([f"nx={n}"] + ([f"ny={n}"] if cfg.dim == 2 else []))
        res = run_case(c)
        if not res.ok:
            raise RuntimeError(f"run failed on mesh {n}: {res.error}")
        ref = reference_sampler(c, law)
        if ref is None:
            raise RuntimeError("no exact reference for this configuration")
        errs = error_norms(res.scheme, res.state, ref)
        results.append({"n": n, **{k: v.tolist() for k, v in errs.items()}})
    for i in range(1, len(results)):
        e0 = np.asarray(results[i - 1]["l2"])
        e1 = np.asarray(results[i]["l2"])
        ratio = results[i]["n"] / results[i - 1]["n"]
        with np.errstate(divide="ignore", invalid="ignore"):
            results[i]["observed_order"] = (np.log(e0 / e1) / np.log(ratio)).tolist()
    return results
