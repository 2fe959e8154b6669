"""Jacobian-free Newton-Krylov solver for the implicit time discretizations.

Directional derivatives come from central finite differences of the residual,
inner solves from restarted GMRES without preconditioning, and globalization
from residual-norm backtracking.  Residual evaluation must be deterministic
and side-effect free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres


class SolverFailure(RuntimeError):
    """Newton diverged or hit its iteration cap; consumed by dt-retry logic."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class NonlinearSystem:
    residual: callable  # G(u) over the flattened DOF vector
    u0: np.ndarray
    tol_rel: float = 1e-10
    tol_abs: float = 1e-12
    max_newton: int = 30
    max_krylov: int = 200
    krylov_restart: int = 100
    max_backtracks: int = 12
    #: optional (G, u0, g0) -> LinearOperator; built once and reused
    precond_factory: callable = None


@dataclass
class SolveReport:
    newton_iterations: int = 0
    residual_evaluations: int = 0
    final_residual: float = 0.0
    initial_residual: float = 0.0
    history: list = field(default_factory=list)
    best_u: np.ndarray = None  # last accepted iterate (stall diagnostics)


def solve_nonlinear(system: NonlinearSystem):
    """Solve G(u) = 0; returns (u, report) or raises SolverFailure."""
    u = np.array(system.u0, dtype=float).ravel().copy()
    if not np.all(np.isfinite(u)):
        raise SolverFailure("initial guess is not finite")
    report = SolveReport()

    def G(x):
        report.residual_evaluations += 1
        return np.asarray(system.residual(x), dtype=float).ravel()

    g = G(u)
    norm0 = float(np.linalg.norm(g))
    report.initial_residual = norm0
    target = system.tol_rel * norm0 + system.tol_abs
    norm = norm0
    report.history.append(norm)
    eta = 0.1  # Eisenstat-Walker forcing term
    stagnation = 0
    precond = None
    if system.precond_factory is not None and norm > target:
        precond = system.precond_factory(G, u, g)

    tau = np.inf  # pseudo-transient damping; inf means pure Newton

    for it in range(system.max_newton):
        if norm <= target:
            break

        def jv(v, u=u, g=g):
            nv = np.linalg.norm(v)
            if nv == 0.0:
                return np.zeros_like(v)
            sigma = np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(u)) / nv
            out = (G(u + sigma * v) - G(u - sigma * v)) / (2.0 * sigma)
            if np.isfinite(tau):
                out = out + v / tau
            return out

        # loose early, tight near convergence; never oversolve past target
        inner_rtol = float(np.clip(eta, 0.5 * target / norm, 0.1))
        restart = min(system.krylov_restart, len(u))
        maxiter = max(1, system.max_krylov // restart)
        if inner_rtol >= 0.05:
            maxiter = 1  # loose solves never need more than one cycle

        accepted = False
        norm_prev = norm
        for _ in range(3):  # re-solve with pseudo-transient damping on failure
            op = LinearOperator((len(u), len(u)), matvec=jv)
            step, info = gmres(op, -g, rtol=inner_rtol, atol=0.0,
                               restart=restart, maxiter=maxiter, M=precond)
            if not np.all(np.isfinite(step)):
                raise SolverFailure("Krylov step is not finite", report)
            lam = 1.0
            for _ in range(system.max_backtracks + 1):
                trial = u + lam * step
                g_trial = G(trial)
                norm_trial = float(np.linalg.norm(g_trial))
                good = norm_trial < norm * (1.0 - 1e-4 * lam) or norm_trial <= target
                if np.isfinite(norm_trial) and good:
                    u, g, norm = trial, g_trial, norm_trial
                    accepted = True
                    break
                lam *= 0.5
            if accepted:
                # relax the damping as the residual falls (SER)
                if np.isfinite(tau):
                    tau = np.inf if norm <= 1e-3 * norm0 else tau * max(
                        2.0, norm_prev / max(norm, 1e-300))
                break
            # failed full-Newton step: damp toward steepest descent
            tau = min(tau, 0.3 * (1.0 + np.linalg.norm(u)) / max(norm, 1e-300))
            tau = max(tau / 10.0 if tau < np.inf else tau, 1e-12)
        eta = min(0.1, 0.9 * (norm / norm_prev) ** 2) if accepted else 0.1
        report.newton_iterations = it + 1
        report.history.append(norm)
        stagnation = stagnation + 1 if norm > norm_prev * (1.0 - 1e-3) else 0
        if not accepted or stagnation >= 4:
            report.final_residual = norm
            report.best_u = u.copy()
            raise SolverFailure(
                f"line search stalled at |G| = {norm:.3e} (target {target:.3e})",
                report,
            )

    report.final_residual = norm
    if norm > target:
        report.best_u = u.copy()
        raise SolverFailure(
            f"Newton cap reached at |G| = {norm:.3e} (target {target:.3e})", report
        )
    return u, report
