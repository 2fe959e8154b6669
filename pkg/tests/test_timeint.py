import numpy as np
import pytest

from idplimit.constraints import ComponentBounds, ConstraintSet
from idplimit.dgsem import DgsemMesh1D, DgsemScheme1D, lobatto_basis
from idplimit.fluxes import GodunovFlux, RusanovFlux, make_volume_flux
from idplimit.fv import FvMesh1D, FvScheme1D
from idplimit.limiter import LimiterConfig, mass_weighted_norm
from idplimit.physics import LinearAdvection1D
from idplimit.timeint import (
    MULTISTEP,
    StepContext,
    backward_euler,
    dirk33,
    forward_euler,
    multistep_step,
    rk_step,
    ssp_rk3,
    stage_antidiffusive,
    stage_lo_state,
    timedg_step,
)


WIDE = ConstraintSet([ComponentBounds(0, lower=-100.0, upper=100.0)], mu=1.0)


def wide_constraints(u_n, u_lo):
    return WIDE, None


def fv_linear(n=24, bc="periodic"):
    law = LinearAdvection1D()
    return FvScheme1D(law, FvMesh1D(n, (0.0, 1.0), bc=bc), RusanovFlux(law))


def dg_linear(n=8, viscosity=None):
    law = LinearAdvection1D()
    v = 9.708 * law.lipschitz if viscosity is None else viscosity
    return DgsemScheme1D(law, DgsemMesh1D(n, (0.0, 1.0), bc="periodic"),
                         lobatto_basis(3), make_volume_flux("ec", law),
                         GodunovFlux(law), viscosity=v)


def make_ctx(scheme, dt, limiter=True, beta=1.0, k_max=50, tol=1e-8,
             constraints=wide_constraints):
    return StepContext(
        scheme=scheme,
        dt=dt,
        limiter_config=LimiterConfig(k_max=k_max, tol=tol, beta=beta),
        constraint_factory=constraints,
        limiter_enabled=limiter,
    )


# ---------------------------------------------------------------- tableaux

def test_tableaux_weights_sum_to_one():
    for t in (forward_euler(), ssp_rk3(), backward_euler(), dirk33()):
        assert t.b.sum() == pytest.approx(1.0)
        assert np.all(t.c >= -1e-14)


def test_dirk33_gamma_and_abscissae():
    t = dirk33()
    g = t.a[0, 0]
    # root of x^3 - 3x^2 + 3x/2 - 1/6 in (1/3, 1)
    assert g == pytest.approx(0.4358665215, abs=1e-9)
    assert abs(g**3 - 3 * g**2 + 1.5 * g - 1.0 / 6.0) < 1e-13
    np.testing.assert_allclose(t.c, [g, (1 + g) / 2, 1.0], atol=1e-13)
    assert t.c_inf == pytest.approx(1.0)
    assert t.stiffly_accurate
    assert t.a[1, 0] == pytest.approx((1 - g) / 2)


def test_ssp_rk3_abscissae():
    t = ssp_rk3()
    np.testing.assert_allclose(t.c, [0.0, 1.0, 0.5])
    assert t.c_inf == pytest.approx(1.0)


# ------------------------------------------------------------ stage algebra

def test_stage_lo_state_endpoints():
    rng = np.random.default_rng(0)
    u_n = rng.uniform(0, 1, (5, 1))
    u_lo = rng.uniform(0, 1, (5, 1))
    np.testing.assert_allclose(stage_lo_state(u_n, u_lo, 0.0, 1.0), u_n)
    np.testing.assert_allclose(stage_lo_state(u_n, u_lo, 1.0, 1.0), u_lo)
    mid = stage_lo_state(u_n, u_lo, 0.5, 1.0)
    np.testing.assert_allclose(mid, 0.5 * (u_n + u_lo))
    lo = np.minimum(u_n, u_lo) - 1e-15
    hi = np.maximum(u_n, u_lo) + 1e-15
    assert np.all((mid >= lo) & (mid <= hi))
    with pytest.raises(ValueError):
        stage_lo_state(u_n, u_lo, 2.0, 1.0)


def test_stage_antidiffusive_reductions():
    scheme = fv_linear()
    rng = np.random.default_rng(1)
    u = rng.uniform(-1, 1, (24, 1))
    _, phi_lo = scheme.lo_residual_and_fluxes(u)
    _, phi_ho = scheme.ho_residual_and_fluxes(u)
    # all-zero weights
    assert np.all(stage_antidiffusive([0.0], phi_lo, [phi_ho]) == 0.0)
    # single forward-Euler stage reproduces the first-order-in-time fluxes
    np.testing.assert_allclose(
        stage_antidiffusive([1.0], phi_lo, [phi_ho]), phi_lo - phi_ho
    )


def test_stage_antidiffusive_matches_dense_assembly():
    # ERK3 stage 3 on a 3-cell problem, against an index-by-index loop
    scheme = fv_linear(3)
    t = ssp_rk3()
    rng = np.random.default_rng(2)
    fields = [rng.uniform(-1, 1, (3, 1)) for _ in range(2)]
    phi_lo = scheme.lo_residual_and_fluxes(fields[0])[1]
    phis = [scheme.ho_residual_and_fluxes(f)[1] for f in fields]
    a = stage_antidiffusive(t.a[2, :2], phi_lo, phis)
    dense = np.zeros_like(phi_lo)
    for f in range(scheme.graph.num_pairs):
        for l in range(2):
            dense[f] += t.a[2, l] * (phi_lo[f] - phis[l][f])
    np.testing.assert_allclose(a, dense, rtol=1e-14)


# ------------------------------------------------------------------ rk_step

def test_forward_euler_without_limiter_is_classic():
    scheme = fv_linear()
    rng = np.random.default_rng(3)
    u = rng.uniform(-1, 1, (24, 1))
    dt = 0.5 * scheme.mesh.dx
    ctx = make_ctx(scheme, dt, limiter=False)
    out, _ = rk_step(ctx, u, forward_euler())
    expected = u - dt * scheme.ho_residual(u) / scheme.mass()[:, None]
    np.testing.assert_allclose(out, expected, rtol=1e-14)


def test_erk3_limited_matches_unlimited_on_smooth_data():
    scheme = fv_linear(32)
    x = scheme.coords()
    u = (0.5 + 0.25 * np.sin(2 * np.pi * x))[:, None]
    dt = 0.9 * scheme.mesh.dx
    raw, _ = rk_step(make_ctx(scheme, dt, limiter=False), u, ssp_rk3())
    lim, diag = rk_step(make_ctx(scheme, dt, limiter=True), u, ssp_rk3())
    gap = mass_weighted_norm(lim - raw, scheme.mass())
    assert gap <= 1e-10
    assert diag.limiter_iterations <= 3 * 50


def test_dirk33_unlimited_matches_dense_reference():
    # 3-cell periodic linear advection; dense DIRK33 as the oracle
    scheme = fv_linear(3)
    scheme.reconstruct = False  # first-order in space on both routes
    n = 3
    eye = np.eye(n)
    K = np.column_stack([scheme.lo_residual(eye[:, [j]]).ravel() for j in range(n)])
    rng = np.random.default_rng(4)
    u = rng.uniform(-1, 1, (n, 1))
    dt = 0.8 * scheme.mesh.dx
    t = dirk33()
    dx = scheme.mesh.dx

    # dense reference: stage solves (I + dt a_kk K/dx) w = rhs
    res = []
    for k in range(3):
        rhs = u.ravel() - dt / dx * sum(t.a[k, l] * res[l] for l in range(k))
        w = np.linalg.solve(eye + dt / dx * t.a[k, k] * K, rhs)
        res.append(K @ w)
    dense = u.ravel() - dt / dx * sum(t.b[l] * res[l] for l in range(3))

    out, _ = rk_step(make_ctx(scheme, dt, limiter=False), u, t)
    np.testing.assert_allclose(out.ravel(), dense, atol=1e-9)


@pytest.mark.parametrize("tableau", [ssp_rk3(), dirk33()])
def test_rk_step_conserves(tableau):
    scheme = fv_linear(20)
    rng = np.random.default_rng(5)
    u = rng.uniform(0.0, 1.0, (20, 1))
    dt = 0.6 * scheme.mesh.dx
    bounds = ConstraintSet([ComponentBounds(0, lower=0.0, upper=1.0)], mu=1 - 1e-7)
    ctx = make_ctx(scheme, dt, constraints=lambda a, b: (bounds, None))
    out, _ = rk_step(ctx, u, tableau)
    np.testing.assert_allclose(scheme.total(out), scheme.total(u), rtol=1e-12)
    assert out.min() >= -1e-12 and out.max() <= 1.0 + 1e-12


def test_rk_step_dgsem_conserves():
    scheme = dg_linear(6)
    x = scheme.coords()
    u = (0.5 + 0.3 * np.sin(2 * np.pi * x))[..., None]
    dt = 0.2 * scheme.mesh.dx
    bounds = ConstraintSet([ComponentBounds(0, lower=0.0, upper=1.0)], mu=1 - 1e-7)
    ctx = make_ctx(scheme, dt, constraints=lambda a, b: (bounds, None))
    out, _ = rk_step(ctx, u, dirk33())
    np.testing.assert_allclose(scheme.total(out), scheme.total(u), rtol=1e-12)


# ---------------------------------------------------------------- multistep

def test_ab2_reduces_to_assembled_identity_on_three_cells():
    scheme = fv_linear(3)
    rng = np.random.default_rng(6)
    u_n = rng.uniform(-1, 1, (3, 1))
    u_prev = rng.uniform(-1, 1, (3, 1))
    dt = 0.4 * scheme.mesh.dx
    hist = [scheme.ho_residual_and_fluxes(u_n), scheme.ho_residual_and_fluxes(u_prev)]
    ctx = make_ctx(scheme, dt, limiter=False)
    out, _ = multistep_step(ctx, u_n, MULTISTEP["ab2"], hist)
    m = scheme.mass()[:, None]
    expected = u_n - dt * (1.5 * hist[0][0] - 0.5 * hist[1][0]) / m
    np.testing.assert_allclose(out, expected, rtol=1e-13)


def test_am2_trapezoidal_conserves_and_matches_dense():
    scheme = fv_linear(3)
    scheme.reconstruct = False
    n = 3
    eye = np.eye(n)
    K = np.column_stack([scheme.lo_residual(eye[:, [j]]).ravel() for j in range(n)])
    rng = np.random.default_rng(7)
    u = rng.uniform(0.2, 0.8, (n, 1))
    dt = 0.5 * scheme.mesh.dx
    dx = scheme.mesh.dx
    hist = [scheme.ho_residual_and_fluxes(u)]
    ctx = make_ctx(scheme, dt, limiter=False)
    out, _ = multistep_step(ctx, u, MULTISTEP["am2"], hist)
    dense = np.linalg.solve(eye + 0.5 * dt / dx * K, u.ravel() - 0.5 * dt / dx * (K @ u.ravel()))
    np.testing.assert_allclose(out.ravel(), dense, atol=1e-9)

    ctx_lim = make_ctx(scheme, dt, limiter=True)
    out_lim, _ = multistep_step(ctx_lim, u, MULTISTEP["am2"], hist)
    np.testing.assert_allclose(scheme.total(out_lim), scheme.total(u), rtol=1e-12)


def test_multistep_requires_history():
    scheme = fv_linear(3)
    ctx = make_ctx(scheme, 0.1 * scheme.mesh.dx)
    with pytest.raises(ValueError):
        multistep_step(ctx, np.zeros((3, 1)), MULTISTEP["ab2"], [])


# ------------------------------------------------------------------ time DG

def test_timedg_stationary_slab():
    scheme = dg_linear(4)
    u = np.full((4, 4, 1), 0.6)  # uniform: residual vanishes identically
    ctx = make_ctx(scheme, 0.05)
    out, _ = timedg_step(ctx, u, q=3)
    np.testing.assert_allclose(out, u, atol=1e-11)


def test_timedg_conserves():
    scheme = dg_linear(5)
    x = scheme.coords()
    u = (0.5 + 0.3 * np.sin(2 * np.pi * x))[..., None]
    bounds = ConstraintSet([ComponentBounds(0, lower=0.0, upper=1.0)], mu=1 - 1e-7)
    ctx = make_ctx(scheme, 0.2 / 5.0, constraints=lambda a, b: (bounds, None))
    out, _ = timedg_step(ctx, u, q=3)
    np.testing.assert_allclose(scheme.total(out), scheme.total(u), rtol=1e-12)


def test_timedg_temporal_order():
    # fixed space, refine dt against a fine-step reference of the same
    # spatial scheme: isolates the temporal error (observed order ~ 2q)
    scheme = dg_linear(16, viscosity=0.0)
    x = scheme.coords()
    u0 = np.sin(2 * np.pi * x)[..., None]
    T = 0.5

    def run(steps):
        ctx = make_ctx(scheme, T / steps, limiter=False)
        ctx.newton_tol_rel = 1e-12
        u = u0.copy()
        for _ in range(steps):
            u, _ = timedg_step(ctx, u, q=3)
        return u

    ref = run(32)
    errs = [
        mass_weighted_norm((run(s) - ref).reshape(-1, 1), scheme.mass().ravel())
        for s in (2, 4)
    ]
    assert np.log2(errs[0] / errs[1]) >= 3.5
