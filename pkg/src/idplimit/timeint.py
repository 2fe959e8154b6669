"""Time integration with per-stage invariant-domain limiting.

Runge-Kutta (explicit and diagonally implicit), Adams multistep and
DG-in-time steppers share one construction: a single low-order solve with
the c_inf-scaled step serves every stage through convex combinations, and
stage antidiffusive fluxes are weighted sums of low/high-order face-flux
differences.

Implicit fields are re-assembled in conservative form from the converged
iterate's residuals, so conservation holds to round-off independent of the
nonlinear-solve tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dgsem import lobatto_basis
from .limiter import LimiterConfig, boundary_residue
from .newton import NonlinearSystem, SolverFailure, solve_nonlinear


def _dirk33_gamma():
    """Root of x^3 - 3x^2 + 3x/2 - 1/6 in (1/3, 1)."""
    roots = np.roots([1.0, -3.0, 1.5, -1.0 / 6.0])
    real = roots[np.abs(roots.imag) < 1e-12].real
    sel = real[(real > 1.0 / 3.0) & (real < 1.0)]
    return float(sel[0])


class ButcherTableau:
    """RK coefficients; ``implicit`` distinguishes DIRK from explicit."""

    def __init__(self, name, a, b, implicit):
        self.name = name
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.implicit = bool(implicit)
        if abs(self.b.sum() - 1.0) > 1e-12:
            raise ValueError("stage weights must sum to one")
        if np.any(self.c < -1e-14):
            raise ValueError("negative stage abscissae are not supported")

    @property
    def stages(self):
        return len(self.b)

    @property
    def theta(self):
        return 1 if self.implicit else 0

    @property
    def c(self):
        """c_k = sum_{l <= k + theta - 1} a_kl (1-based stage index k)."""
        s = self.stages
        return np.array([self.a[k, : k + self.theta].sum() for k in range(s)])

    @property
    def c_inf(self):
        return max(float(self.c.max()), 1.0)

    @property
    def stiffly_accurate(self):
        return self.implicit and np.allclose(self.a[-1], self.b, atol=1e-14)


def forward_euler():
    return ButcherTableau("erk1", [[0.0]], [1.0], implicit=False)


def ssp_rk3():
    a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]]
    return ButcherTableau("erk3", a, [1 / 6, 1 / 6, 2 / 3], implicit=False)


def backward_euler():
    return ButcherTableau("be", [[1.0]], [1.0], implicit=True)


def dirk33():
    g = _dirk33_gamma()
    b1 = -(6 * g * g - 16 * g + 1.0) / 4.0
    b2 = (6 * g * g - 20 * g + 5.0) / 4.0
    a = [[g, 0.0, 0.0], [(1 - g) / 2.0, g, 0.0], [b1, b2, g]]
    return ButcherTableau("dirk33", a, [b1, b2, g], implicit=True)


TABLEAUX = {
    "erk1": forward_euler,
    "erk3": ssp_rk3,
    "be": backward_euler,
    "dirk33": dirk33,
}

#: Adams methods as 1-based weights b_0..b_S of R(u^{n+1-l}); b_0 != 0 is implicit
MULTISTEP = {
    "ab2": np.array([0.0, 1.5, -0.5]),
    "am2": np.array([0.5, 0.5]),
}


@dataclass
class StepContext:
    """Everything a step needs besides the field itself."""

    scheme: object
    dt: float
    limiter_config: LimiterConfig
    constraint_factory: callable  # (u_n, u_lo_global) -> (cset, zs_cset)
    limiter_enabled: bool = True
    newton_tol_rel: float = 1e-10
    newton_tol_abs: float = 1e-12
    track_ranges: bool = False


@dataclass
class StepDiagnostics:
    newton_iterations: int = 0
    limiter_iterations: int = 0
    limiter_reports: list = field(default_factory=list)
    floored_evaluations: int = 0
    #: predicted change of the conserved totals through boundary faces
    boundary_change: np.ndarray = None


def _proxied(scheme, u):
    """Positivity-floored proxy for residual evaluation at bad iterates."""
    law = scheme.law
    if hasattr(law, "floor_state") and not np.all(law.admissible(u)):
        proxy, _ = law.floor_state(u)
        return proxy, True
    return u, False


class _Evaluator:
    """Caches nothing; wraps proxying and diagnostics for residual calls."""

    def __init__(self, scheme, diag):
        self.scheme = scheme
        self.diag = diag

    def lo(self, u):
        u, flagged = _proxied(self.scheme, u)
        self.diag.floored_evaluations += int(flagged)
        return self.scheme.lo_residual_and_fluxes(u)

    def ho(self, u):
        u, flagged = _proxied(self.scheme, u)
        self.diag.floored_evaluations += int(flagged)
        return self.scheme.ho_residual_and_fluxes(u)


#: systems below this size converge fine without preconditioning
PRECOND_MIN_DOFS = 1024


def _block_jacobi_factory(scheme, shape, elem_axis):
    """Element-block Jacobi preconditioner assembled by colored FD probing.

    All elements of one checkerboard color are perturbed simultaneously, one
    local DOF at a time, so the diagonal blocks of the Jacobian come out of
    2 * blocksize residual evaluations.  Same-color wrap-around neighbors on
    odd periodic meshes only blur the preconditioner, never the solution.
    """
    nel = scheme.mesh.num_elements
    idx = np.moveaxis(np.arange(int(np.prod(shape))).reshape(shape),
                      elem_axis, 0).reshape(nel, -1)
    m = idx.shape[1]
    colors = scheme.element_colors()

    def factory(G, u0, g0):
        from scipy.sparse.linalg import LinearOperator

        blocks = np.zeros((nel, m, m))
        sigma = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(u0).max())
        for color in (0, 1):
            sel = colors == color
            rows = idx[sel]
            for j in range(m):
                pert = u0.copy()
                pert[rows[:, j]] += sigma
                col = (G(pert) - g0) / sigma
                blocks[sel, :, j] = col[rows]
        ridge = 1e-12 * max(1.0, float(np.abs(blocks).max()))
        blocks += ridge * np.eye(m)
        try:
            inv = np.linalg.inv(blocks)
        except np.linalg.LinAlgError:
            return None

        def apply(v):
            out = np.array(v, dtype=float)
            vb = np.einsum("eij,ej->ei", inv, v[idx.ravel()].reshape(nel, m))
            out[idx.ravel()] = vb.ravel()
            return out

        # block-Jacobi only helps when the blocks dominate; validate it and
        # fall back to plain GMRES when cross-element coupling wins
        rng = np.random.default_rng(0)
        v = rng.normal(size=u0.size)
        v /= np.linalg.norm(v)
        sigma_v = np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(u0))
        jvv = (G(u0 + sigma_v * v) - g0) / sigma_v
        if np.linalg.norm(apply(jvv) - v) > 0.7:
            return None

        n = len(u0)
        return LinearOperator((n, n), matvec=apply)

    return factory


def _solve(ctx, diag, residual_of_field, guess, shape, elem_axis=0):
    def G(flat):
        return residual_of_field(flat.reshape(shape)).ravel()

    guess = np.asarray(guess, dtype=float)
    factory = None
    if guess.size >= PRECOND_MIN_DOFS and hasattr(ctx.scheme, "element_colors"):
        factory = _block_jacobi_factory(ctx.scheme, shape, elem_axis)
    system = NonlinearSystem(
        residual=G,
        u0=guess.ravel(),
        tol_rel=ctx.newton_tol_rel,
        tol_abs=ctx.newton_tol_abs,
        precond_factory=factory,
    )
    w, report = solve_nonlinear(system)
    diag.newton_iterations += report.newton_iterations
    return w.reshape(shape)


#: stalled high-order stage solves are accepted at this relative residual;
#: the unlimited stage target can lack an admissible root near strong shocks
#: (floored-proxy plateaus), and the limiter downstream owns the IDP property
STAGE_STALL_REL = 5e-2


def _solve_with_fallback_guesses(ctx, diag, G, guesses, shape, allow_stall=False,
                                 elem_axis=0):
    """Try each initial guess in turn; strong shocks make basins matter.

    With ``allow_stall`` the best stalled iterate is accepted when its
    residual is below STAGE_STALL_REL of the initial one (high-order stage
    systems only; low-order solves must meet the strict tolerance).
    """
    last = None
    for guess in guesses:
        try:
            return _solve(ctx, diag, G, guess, shape, elem_axis=elem_axis)
        except SolverFailure as err:
            last = err
            rep = err.report
            if allow_stall and rep.best_u is not None and (
                    rep.final_residual
                    <= STAGE_STALL_REL * (rep.initial_residual + 1e-300)):
                return rep.best_u.reshape(shape)
    raise last


def _implicit_ho_data(ctx, diag, ev, u_n, coef, known, guesses, lag_sweeps=2):
    """Solve w = u_n - dt (coef R_HO(w) + known)/M; return (R, Phi) at w.

    Slope-limited reconstructions make the fully coupled system nonsmooth
    (the limiter state can chatter between Newton branches), so schemes that
    expose a limiter state are solved quasi-Newton style: the state is
    frozen, the smooth system is solved to full tolerance, and the state is
    lagged for a few sweeps.  The returned residual and face fluxes are
    evaluated under the accepted state so the antidiffusive-flux identity
    is exact.
    """
    scheme = ctx.scheme
    m = scheme.mass()[..., None]
    dt = ctx.dt

    def G(w):
        return w - u_n + dt * (coef * ev.ho(w)[0] + known) / m

    if not getattr(scheme, "can_lag", False):
        w = _solve_with_fallback_guesses(ctx, diag, G, guesses, u_n.shape,
                                         allow_stall=True)
        r, phi = ev.ho(w)
        return r, phi
    guess = guesses[0]

    g0 = float(np.linalg.norm(G(guess)))
    target = ctx.newton_tol_rel * g0 + ctx.newton_tol_abs
    w = guess
    r = phi = None
    for sweep in range(lag_sweeps):
        ref, _ = _proxied(scheme, w)
        scheme.set_solver_state(scheme.solver_state(ref))
        try:
            starts = [w] + list(guesses[1:]) if sweep == 0 else [w]
            w_new = _solve_with_fallback_guesses(ctx, diag, G, starts, u_n.shape,
                                                 allow_stall=True)
            # evaluate under the same frozen state: the accepted (R, Phi)
            # stay self-consistent even when the nonsmooth state chatters
            r, phi = ev.ho(w_new)
        finally:
            scheme.set_solver_state(None)
        converged = float(np.linalg.norm(G(w_new))) <= target
        stalled = np.allclose(w_new, w, rtol=1e-12, atol=1e-14)
        w = w_new
        if converged or stalled:
            break
    return r, phi


def _limit(ctx, diag, u_lo, u_ho, a_faces, u_n, u_lo_global):
    scheme = ctx.scheme
    if not ctx.limiter_enabled:
        scheme.check_admissible(u_ho, "unlimited high-order update")
        return u_ho, None
    cset, zs = ctx.constraint_factory(u_n, u_lo_global)
    if scheme.limits_cell_averages:
        u, report = scheme.limit_update(u_lo, u_ho, a_faces, ctx.dt, cset,
                                        ctx.limiter_config, zs_constraints=zs,
                                        track_ranges=ctx.track_ranges)
    else:
        u, report = scheme.limit_update(u_lo, u_ho, a_faces, ctx.dt, cset,
                                        ctx.limiter_config,
                                        track_ranges=ctx.track_ranges)
    diag.limiter_iterations += report.iterations
    diag.limiter_reports.append(report)
    return u, report


def _boundary_change(scheme, dt, weights, phi_list, report):
    """Predicted totals change of one limited update through the boundary."""
    out = sum(w * boundary_residue(scheme.graph, phi)
              for w, phi in zip(weights, phi_list))
    out = -dt * out if np.ndim(out) else np.zeros(scheme.n_eq)
    if report is not None and getattr(report, "residual_fluxes", None) is not None:
        out = out - dt * boundary_residue(scheme.graph, report.residual_fluxes)
    return out


def lo_single_step(ctx, diag, u_n, theta, c_inf):
    """One forward/backward Euler low-order solve with the c_inf-scaled step.

    Returns (u_lo, lo face fluxes at u_lo^{n+theta}).  Implicit solutions are
    re-assembled in conservative form from the converged iterate.
    """
    ev = _Evaluator(ctx.scheme, diag)
    m = ctx.scheme.mass()[..., None]
    h = c_inf * ctx.dt
    if theta == 0:
        r, phi = ev.lo(u_n)
        return u_n - h * r / m, phi

    def G(w):
        return w - u_n + h * ev.lo(w)[0] / m

    w = _solve(ctx, diag, G, u_n, u_n.shape)
    r, phi = ev.lo(w)
    return u_n - h * r / m, phi


def stage_lo_state(u_n, u_lo, c_k, c_inf):
    """(1 - c_k/c_inf) u^n + (c_k/c_inf) u_lo, DOF-wise convex combination."""
    if c_k < 0.0 or c_k > c_inf + 1e-14:
        raise ValueError("stage abscissa outside [0, c_inf]")
    w = c_k / c_inf
    return (1.0 - w) * u_n + w * u_lo


def stage_antidiffusive(weights, phi_lo, phi_history):
    """sum_l a_kl (Phi_LO - Phi_HO^(l)) per face."""
    a = np.zeros_like(phi_lo)
    for w, phi in zip(weights, phi_history):
        if w != 0.0:
            a += w * (phi_lo - phi)
    return a


def rk_step(ctx, u_n, tableau: ButcherTableau, diag=None):
    """One limited Runge-Kutta step (explicit or diagonally implicit)."""
    diag = diag if diag is not None else StepDiagnostics()
    scheme = ctx.scheme
    ev = _Evaluator(scheme, diag)
    m = scheme.mass()[..., None]
    dt = ctx.dt
    theta = tableau.theta
    c = tableau.c
    c_inf = tableau.c_inf

    u_lo_global, phi_lo = lo_single_step(ctx, diag, u_n, theta, c_inf)
    scheme.check_admissible(u_lo_global, "low-order update")

    res_hist, phi_hist = [], []
    stage_fields = []
    for k in range(tableau.stages):
        weights = tableau.a[k, : k + theta]
        if theta == 0 and k == 0:
            u_stage = u_n
        else:
            known = sum(w * r for w, r in zip(weights[: k], res_hist))
            u_lo_stage = stage_lo_state(u_n, u_lo_global, c[k], c_inf)
            if theta == 0:
                u_ho = u_n - dt * known / m
                phi_stage_list = phi_hist[:k]
            else:
                akk = weights[k]
                # the stage-LO state sits in the right attraction basin even
                # across strong shocks; the previous stage is the backup
                guesses = [u_lo_stage] + ([stage_fields[-1]] if stage_fields else [])
                r_sol, phi_sol = _implicit_ho_data(ctx, diag, ev, u_n, akk, known,
                                                   guesses)
                u_ho = u_n - dt * (akk * r_sol + known) / m
                phi_stage_list = phi_hist[:k] + [phi_sol]
            a_faces = stage_antidiffusive(weights, phi_lo, phi_stage_list)
            u_stage, rep = _limit(ctx, diag, u_lo_stage, u_ho, a_faces, u_n,
                                  u_lo_global)
            last_bd = _boundary_change(scheme, dt, weights, phi_stage_list, rep)
        stage_fields.append(u_stage)
        r_k, phi_k = ev.ho(u_stage)
        res_hist.append(r_k)
        phi_hist.append(phi_k)

    if tableau.stiffly_accurate:
        diag.boundary_change = last_bd
        return stage_fields[-1], diag

    u_ho = u_n - dt * sum(b * r for b, r in zip(tableau.b, res_hist)) / m
    u_lo_tilde = stage_lo_state(u_n, u_lo_global, 1.0, c_inf)
    a_faces = stage_antidiffusive(tableau.b, phi_lo, phi_hist)
    u_next, rep = _limit(ctx, diag, u_lo_tilde, u_ho, a_faces, u_n, u_lo_global)
    diag.boundary_change = _boundary_change(scheme, dt, tableau.b, phi_hist, rep)
    return u_next, diag


def multistep_step(ctx, u_n, coeffs, history, diag=None):
    """One limited Adams step.

    coeffs = (b_0, ..., b_S) with b_0 = 0 for Adams-Bashforth.  ``history``
    holds the high-order (residual, face fluxes) of past accepted solutions,
    newest first: history[0] belongs to u^n, history[1] to u^{n-1}, and so
    on; S entries are required.
    """
    diag = diag if diag is not None else StepDiagnostics()
    scheme = ctx.scheme
    ev = _Evaluator(scheme, diag)
    m = scheme.mass()[..., None]
    dt = ctx.dt
    coeffs = np.asarray(coeffs, dtype=float)
    b0 = coeffs[0]
    lagged = coeffs[1:]
    if len(history) < len(lagged):
        raise ValueError("insufficient residual history (start-up path)")
    theta = 0 if b0 == 0.0 else 1

    u_lo, phi_lo = lo_single_step(ctx, diag, u_n, theta, 1.0)
    scheme.check_admissible(u_lo, "low-order update")

    known = sum(b * r for b, (r, _) in zip(lagged, history))
    phi_list = [phi for _, phi in history[: len(lagged)]]
    if theta == 0:
        u_ho = u_n - dt * known / m
        a_faces = stage_antidiffusive(lagged, phi_lo, phi_list)
        weights, phis = lagged, phi_list
    else:
        r_sol, phi_sol = _implicit_ho_data(ctx, diag, ev, u_n, b0, known,
                                           [u_lo, u_n])
        u_ho = u_n - dt * (b0 * r_sol + known) / m
        weights = np.concatenate([[b0], lagged])
        phis = [phi_sol] + phi_list
        a_faces = stage_antidiffusive(weights, phi_lo, phis)
    u_next, rep = _limit(ctx, diag, u_lo, u_ho, a_faces, u_n, u_lo)
    diag.boundary_change = _boundary_change(scheme, dt, weights, phis, rep)
    return u_next, diag


def _picard_slab(ctx, diag, ev, u_n, guess, w_t, d_t, m, max_iters=300):
    """Damped fixed-point solve of the slab system; (best iterate, converged).

    Bails out quickly when the map is not contracting (Newton handles those
    cases); contraction holds for capped slab sizes and needs only a few
    residual evaluations per sweep.
    """
    nt = len(w_t)
    dt = ctx.dt
    t_mat = np.zeros((nt, nt))
    for k in range(nt):
        for r in range(nt):
            t_mat[k, r] = (1.0 if (k == nt - 1 and r == nt - 1) else 0.0) \
                - w_t[r] * d_t[r, k]
    t_inv = np.linalg.inv(t_mat)

    def residual(w):
        res = [ev.ho(w[r])[0] / m for r in range(nt)]
        out = np.empty_like(w)
        for k in range(nt):
            acc = dt * w_t[k] * res[k] - sum(w_t[r] * d_t[r, k] * w[r]
                                             for r in range(nt))
            if k == nt - 1:
                acc = acc + w[nt - 1]
            if k == 0:
                acc = acc - u_n
            out[k] = acc
        return out, res

    def fixed_point(res):
        b = np.stack([(u_n if k == 0 else np.zeros_like(u_n))
                      - dt * w_t[k] * res[k] for k in range(nt)])
        return np.einsum("kr,r...->k...", t_inv, b)

    w = guess
    g, res = residual(w)
    g0 = float(np.linalg.norm(g))
    target = ctx.newton_tol_rel * g0 + ctx.newton_tol_abs
    if g0 <= target:
        return w, True
    gn = g0
    omega = 1.0
    for it in range(1, max_iters + 1):
        try:
            w_new = (1.0 - omega) * w + omega * fixed_point(res)
            g_new, res_new = residual(w_new)
            g_norm = float(np.linalg.norm(g_new))
        except Exception:
            g_norm = np.inf
        if np.isfinite(g_norm) and g_norm < gn:
            w, gn, res = w_new, g_norm, res_new
            diag.newton_iterations += 1
            if gn <= target:
                return w, True
        else:
            omega *= 0.5
        if omega < 1e-3 or (it >= 12 and gn > 0.5 * g0):
            break
    return w, False


def timedg_step(ctx, u_n, q, diag=None):
    """One limited DG-in-time slab of temporal degree q.

    Lobatto collocation in time on [0, 1] with weights normalized to sum to
    one; the coupled space-time system is solved at once, the end-of-slab
    high-order field is re-assembled from the slab-integral identity, and
    the usual backward-Euler low-order solution anchors the limiter.
    """
    diag = diag if diag is not None else StepDiagnostics()
    scheme = ctx.scheme
    ev = _Evaluator(scheme, diag)
    m = scheme.mass()[..., None]
    dt = ctx.dt
    basis = lobatto_basis(q)
    w_t = basis.weights / 2.0  # sum to one on the unit slab
    d_t = 2.0 * basis.diff  # d/dtau on [0, 1]
    nt = q + 1

    shape = (nt,) + u_n.shape

    def G(big):
        res_nodes = [ev.ho(big[r])[0] / m for r in range(nt)]
        out = np.empty(shape)
        for k in range(nt):
            acc = dt * w_t[k] * res_nodes[k]
            acc = acc - sum(w_t[r] * d_t[r, k] * big[r] for r in range(nt))
            if k == nt - 1:
                acc = acc + big[nt - 1]
            if k == 0:
                acc = acc - u_n
            out[k] = acc
        return out

    u_lo, phi_lo = lo_single_step(ctx, diag, u_n, theta=1, c_inf=1.0)
    scheme.check_admissible(u_lo, "low-order update")

    # causality-respecting guess: interpolate u^n -> u_LO across the slab
    tau_nodes = (basis.nodes + 1.0) / 2.0
    interp = np.stack([(1.0 - t) * u_n + t * u_lo for t in tau_nodes])

    # damped fixed-point pass first: the temporal operator is a constant
    # invertible (q+1)^2 matrix, so W <- T^-1 b(W) needs no linearization
    # and is immune to the oscillatory flux landscapes that stall Newton
    big, picard_ok = _picard_slab(ctx, diag, ev, u_n, interp, w_t, d_t, m)
    guesses = [big, np.broadcast_to(u_n, shape).copy()]
    if picard_ok:
        res_fluxes = [ev.ho(big[r]) for r in range(nt)]
        r_sum = sum(w * r for w, (r, _) in zip(w_t, res_fluxes))
        u_ho_end = u_n - dt * r_sum / m
        a_faces = stage_antidiffusive(w_t, phi_lo, [phi for _, phi in res_fluxes])
        u_next, rep = _limit(ctx, diag, u_lo, u_ho_end, a_faces, u_n, u_lo)
        diag.boundary_change = _boundary_change(scheme, dt, w_t,
                                                [phi for _, phi in res_fluxes], rep)
        return u_next, diag
    if getattr(scheme, "can_lag", False):
        big = guesses[0]
        g0 = float(np.linalg.norm(G(big)))
        target = ctx.newton_tol_rel * g0 + ctx.newton_tol_abs
        res_fluxes = None
        for sweep in range(2):
            states = [scheme.solver_state(_proxied(scheme, big[r])[0])
                      for r in range(nt)]

            def G_frozen(w, states=states):
                try:
                    out = np.empty(shape)
                    res = []
                    for r in range(nt):
                        scheme.set_solver_state(states[r])
                        res.append(ev.ho(w[r])[0] / m)
                    scheme.set_solver_state(None)
                    for k in range(nt):
                        acc = dt * w_t[k] * res[k]
                        acc = acc - sum(w_t[r] * d_t[r, k] * w[r] for r in range(nt))
                        if k == nt - 1:
                            acc = acc + w[nt - 1]
                        if k == 0:
                            acc = acc - u_n
                        out[k] = acc
                    return out
                finally:
                    scheme.set_solver_state(None)

            starts = [big] + guesses[1:] if sweep == 0 else [big]
            big_new = _solve_with_fallback_guesses(ctx, diag, G_frozen, starts,
                                                   shape, allow_stall=True,
                                                   elem_axis=1)
            try:
                res_fluxes = []
                for r in range(nt):
                    scheme.set_solver_state(states[r])
                    res_fluxes.append(ev.ho(big_new[r]))
            finally:
                scheme.set_solver_state(None)
            converged = float(np.linalg.norm(G(big_new))) <= target
            stalled = np.allclose(big_new, big, rtol=1e-12, atol=1e-14)
            big = big_new
            if converged or stalled:
                break
    else:
        big = _solve_with_fallback_guesses(ctx, diag, G, guesses, shape,
                                           allow_stall=True, elem_axis=1)
        res_fluxes = [ev.ho(big[r]) for r in range(nt)]
    r_sum = sum(w * r for w, (r, _) in zip(w_t, res_fluxes))
    u_ho_end = u_n - dt * r_sum / m
    a_faces = stage_antidiffusive(w_t, phi_lo, [phi for _, phi in res_fluxes])
    u_next, rep = _limit(ctx, diag, u_lo, u_ho_end, a_faces, u_n, u_lo)
    diag.boundary_change = _boundary_change(scheme, dt, w_t,
                                            [phi for _, phi in res_fluxes], rep)
    return u_next, diag
