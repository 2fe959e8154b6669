import numpy as np
import pytest

from idplimit.constraints import (
    ComponentBounds,
    ConstraintInfeasibleError,
    ConstraintSet,
    euler_positivity_constraints,
)
from idplimit.dgsem import (
    DgsemMesh1D,
    DgsemMesh2D,
    DgsemScheme1D,
    DgsemScheme2D,
    lobatto_basis,
)
from idplimit.fluxes import (
    ChandrashekarFlux,
    EcInterfaceFlux,
    GodunovFlux,
    RusanovFlux,
    make_volume_flux,
)
from idplimit.limiter import AntidiffusiveFluxSet, LimiterConfig, mass_weighted_norm
from idplimit.physics import Burgers2D, Euler1D, LinearAdvection1D, euler_entropy_pair


EULER = Euler1D()


def euler_scheme_1d(n, bc="periodic", viscosity=0.0):
    mesh = DgsemMesh1D(n, (0.0, 1.0), bc=bc)
    return DgsemScheme1D(EULER, mesh, lobatto_basis(3), ChandrashekarFlux(EULER),
                         RusanovFlux(EULER), viscosity=viscosity)


def scalar_scheme_2d(nx, ny, bc="periodic", viscosity=0.0, law=None):
    law = law or Burgers2D()
    mesh = DgsemMesh2D(nx, ny, ((0.0, 1.0), (0.0, 1.0)), bc=bc)
    return DgsemScheme2D(law, mesh, lobatto_basis(3), make_volume_flux("ec", law),
                         GodunovFlux(law), viscosity=viscosity)


def random_euler_field(rng, scheme):
    shape = scheme.mass().shape
    rho = rng.uniform(0.5, 2.0, shape)
    v = rng.uniform(-1.0, 1.0, shape)
    p = rng.uniform(0.5, 2.0, shape)
    return EULER.from_primitive(rho, v, p)


def rk4(scheme, u, dt, nsteps):
    m = scheme.mass()[..., None]
    for _ in range(nsteps):
        k1 = -scheme.ho_residual(u) / m
        k2 = -scheme.ho_residual(u + 0.5 * dt * k1) / m
        k3 = -scheme.ho_residual(u + 0.5 * dt * k2) / m
        k4 = -scheme.ho_residual(u + dt * k3) / m
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


# ------------------------------------------------------------------- basis

def test_lobatto_p1_is_trapezoid():
    b = lobatto_basis(1)
    np.testing.assert_allclose(b.nodes, [-1.0, 1.0])
    np.testing.assert_allclose(b.weights, [1.0, 1.0])


def test_lobatto_p3_values():
    b = lobatto_basis(3)
    s5 = 1.0 / np.sqrt(5.0)
    np.testing.assert_allclose(b.nodes, [-1.0, -s5, s5, 1.0], atol=1e-14)
    np.testing.assert_allclose(b.weights, [1 / 6, 5 / 6, 5 / 6, 1 / 6], atol=1e-14)


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_lobatto_invariants(p):
    b = lobatto_basis(p)
    assert b.weights.sum() == pytest.approx(2.0, rel=1e-13)
    # exact for polynomials up to degree 2p-1
    for deg in range(2 * p):
        exact = 2.0 / (deg + 1) if deg % 2 == 0 else 0.0
        assert np.dot(b.weights, b.nodes**deg) == pytest.approx(exact, abs=1e-12)
    assert np.abs(b.diff @ np.ones(p + 1)).max() <= 1e-13
    w = np.diag(b.weights)
    sbp = w @ b.diff + b.diff.T @ w - b.boundary_matrix()
    assert np.abs(sbp).max() <= 1e-13


def test_lobatto_quadrature_x4():
    b = lobatto_basis(3)
    assert np.dot(b.weights, b.nodes**4) == pytest.approx(2.0 / 5.0, rel=1e-13)


def test_lobatto_p0_rejected():
    with pytest.raises(ValueError):
        lobatto_basis(0)


def test_viscosity_factor_matches_reference():
    assert lobatto_basis(3).viscosity_factor() == pytest.approx(9.7, abs=0.05)


# --------------------------------------------------------------- residuals

def test_uniform_states_give_zero_residuals():
    s = euler_scheme_1d(6, viscosity=5.0)
    u = np.broadcast_to(EULER.from_primitive(1.0, 0.3, 2.0), (6, 4, 3)).copy()
    np.testing.assert_allclose(s.ho_residual(u), 0.0, atol=1e-13)
    np.testing.assert_allclose(s.lo_residual(u), 0.0, atol=1e-13)


def test_free_stream_2d():
    for bc in ("periodic", "transmissive"):
        s = scalar_scheme_2d(3, 4, bc=bc, viscosity=2.0)
        u = np.full((12, 4, 4, 1), 0.7)
        np.testing.assert_allclose(s.lo_residual(u), 0.0, atol=1e-13)


def test_semi_discrete_solution_order():
    # integrate the semi-discrete scheme with a tiny RK4 step: the L2
    # solution error converges at p+1 for upwinded linear advection
    law = LinearAdvection1D()
    errs = []
    for n in (8, 16):
        mesh = DgsemMesh1D(n, (0.0, 1.0), bc="periodic")
        s = DgsemScheme1D(law, mesh, lobatto_basis(3), make_volume_flux("ec", law),
                          GodunovFlux(law))
        x = s.coords()
        u = np.sin(2 * np.pi * x)[..., None]
        T = 0.5
        nsteps = int(np.ceil(T / (0.02 * mesh.dx)))
        u = rk4(s, u, T / nsteps, nsteps)
        exact = np.sin(2 * np.pi * (x - T))[..., None]
        errs.append(mass_weighted_norm((u - exact).reshape(-1, 1), s.mass().ravel()))
    assert np.log2(errs[0] / errs[1]) >= 3.5


def test_graph_viscosity_two_node_instance():
    # p=1, 1D: V_i = d * w_i * (w_k/2) (U_i - U_k) with unit metric
    law = LinearAdvection1D()
    mesh = DgsemMesh1D(4, (0.0, 1.0), bc="periodic")
    s = DgsemScheme1D(law, mesh, lobatto_basis(1), make_volume_flux("ec", law),
                      GodunovFlux(law), viscosity=3.0)
    u = np.zeros((4, 2, 1))
    u[:, 0, 0], u[:, 1, 0] = 1.0, 4.0
    v = s.graph_viscosity(u)
    np.testing.assert_allclose(v[:, 0, 0], 3.0 * 1.0 * 0.5 * (1.0 - 4.0), rtol=1e-13)
    np.testing.assert_allclose(v[:, 1, 0], 3.0 * 1.0 * 0.5 * (4.0 - 1.0), rtol=1e-13)
    assert np.abs(v.sum(axis=1)).max() <= 1e-13  # element sums vanish


def test_lo_equals_ho_without_viscosity():
    rng = np.random.default_rng(0)
    s = euler_scheme_1d(6, viscosity=0.0)
    u = random_euler_field(rng, s)
    np.testing.assert_allclose(s.lo_residual(u), s.ho_residual(u), rtol=1e-13)


def test_explicit_lo_maximum_principle_sweep():
    # forward-Euler LO with d = 38.8 L_f keeps the maximum principle for a
    # small enough step (the viscosity dominates the explicit restriction)
    law = LinearAdvection1D()
    mesh = DgsemMesh1D(10, (0.0, 1.0), bc="periodic")
    s = DgsemScheme1D(law, mesh, lobatto_basis(3), make_volume_flux("ec", law),
                      GodunovFlux(law), viscosity=38.8 * law.lipschitz)
    rng = np.random.default_rng(1)
    m = s.mass()[..., None]
    dt = 0.01 * mesh.dx / law.lipschitz
    for _ in range(100):
        u = rng.uniform(-1.0, 1.0, (10, 4, 1))
        out = u - dt * s.lo_residual(u) / m
        assert out.max() <= u.max() + 1e-12
        assert out.min() >= u.min() - 1e-12


# ------------------------------------------------- cell-average antidiffusion

def test_average_antidiffusive_identity():
    rng = np.random.default_rng(2)
    for make in (lambda: euler_scheme_1d(6, viscosity=4.0),
                 lambda: scalar_scheme_2d(3, 4, viscosity=2.0),
                 lambda: scalar_scheme_2d(3, 4, bc="transmissive", viscosity=2.0)):
        s = make()
        shape = s.mass().shape
        if s.n_eq == 3:
            u = random_euler_field(rng, s)
        else:
            u = rng.uniform(-1, 1, shape + (1,))
        dt = 1e-3
        m = s.mass()[..., None]
        r_lo, f_lo = s.lo_residual_and_fluxes(u)
        r_ho, f_ho = s.ho_residual_and_fluxes(u)
        u_lo = u - dt * r_lo / m
        u_ho = u - dt * r_ho / m
        a = f_lo - f_ho
        lhs = (s.cell_measure()[:, None] / dt) * (s.averages(u_ho) - s.averages(u_lo))
        rhs = AntidiffusiveFluxSet(s.graph, a).scatter()
        scale = 1.0 + np.abs(lhs).max()
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale
        n_max_expected = 2 if isinstance(s, DgsemScheme1D) else 4
        assert s.graph.n_max == n_max_expected


def test_cell_average_formula_matches_quadrature():
    s = euler_scheme_1d(5)
    rng = np.random.default_rng(3)
    u = random_euler_field(rng, s)
    avg = s.averages(u)
    direct = np.einsum("ei,eiv->ev", s.mass(), u) / s.cell_measure()[:, None]
    np.testing.assert_allclose(avg, direct, rtol=1e-14)


# ----------------------------------------------- distribution and Zhang-Shu

def test_distribute_endpoints():
    rng = np.random.default_rng(4)
    s = euler_scheme_1d(6, viscosity=4.0)
    u = random_euler_field(rng, s)
    dt = 1e-3
    m = s.mass()[..., None]
    r_lo, f_lo = s.lo_residual_and_fluxes(u)
    r_ho, f_ho = s.ho_residual_and_fluxes(u)
    u_lo = u - dt * r_lo / m
    u_ho = u - dt * r_ho / m
    a = f_lo - f_ho
    # residual fluxes = a means l = 0: averages must equal the LO averages
    lo_like = s.distribute_limited_average(u_ho, a, dt)
    np.testing.assert_allclose(s.averages(lo_like), s.averages(u_lo), atol=1e-13)
    # residual fluxes = 0 means l = 1: field untouched
    ho_like = s.distribute_limited_average(u_ho, np.zeros_like(a), dt)
    np.testing.assert_allclose(ho_like, u_ho)
    # random l: averages follow the limited-average formula
    l = rng.uniform(0, 1, s.graph.num_pairs)
    mixed = s.distribute_limited_average(u_ho, (1 - l)[:, None] * a, dt)
    expected = s.averages(u_lo) + dt / s.cell_measure()[:, None] * AntidiffusiveFluxSet(
        s.graph, l[:, None] * a).scatter()
    np.testing.assert_allclose(s.averages(mixed), expected, atol=1e-13)


def test_zhang_shu_identity_when_admissible():
    s = euler_scheme_1d(4)
    rng = np.random.default_rng(5)
    u = random_euler_field(rng, s)
    cset = euler_positivity_constraints(EULER, 1e-8, 1e-8)
    out, theta = s.zhang_shu_scale(u, s.averages(u), cset)
    np.testing.assert_array_equal(out, u)
    np.testing.assert_array_equal(theta, 1.0)


def test_zhang_shu_squeezes_violating_node():
    s = euler_scheme_1d(4)
    u = np.broadcast_to(EULER.from_primitive(1.0, 0.0, 1.0), (4, 4, 3)).copy()
    u[2, 1] = EULER.from_primitive(-0.2, 0.0, 1.0)  # negative density node
    avg = s.averages(u)
    assert np.all(EULER.admissible(avg))
    m_rho = 1e-8
    cset = euler_positivity_constraints(EULER, m_rho, 1e-8, mu=1.0)
    out, theta = s.zhang_shu_scale(u, avg, cset)
    assert 0.0 < theta[2] < 1.0
    assert np.all(theta[[0, 1, 3]] == 1.0)
    # averages preserved exactly, bound active at the worst node
    np.testing.assert_allclose(s.averages(out), avg, atol=1e-13)
    assert out[..., 0].min() == pytest.approx(m_rho, abs=1e-12)
    assert np.all((0.0 <= theta) & (theta <= 1.0))


def test_zhang_shu_theta_zero_collapses_to_average():
    s = scalar_scheme_2d(2, 2)
    u = np.zeros((4, 4, 4, 1))
    u[0] = np.linspace(-1, 1, 16).reshape(4, 4, 1)
    avg = s.averages(u)
    cset = ConstraintSet([ComponentBounds(0, lower=avg[0, 0] - 1e-15,
                                          upper=avg[0, 0] + 1e-15)], mu=1.0)
    out, theta = s.zhang_shu_scale(u, avg, cset)
    assert theta[0] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(out[0], avg[0, 0], atol=1e-12)


def test_zhang_shu_requires_feasible_average():
    s = euler_scheme_1d(4)
    u = np.broadcast_to(EULER.from_primitive(1.0, 0.0, 1.0), (4, 4, 3)).copy()
    u[1, :, 0] = -1.0  # whole element negative: the average itself violates
    cset = euler_positivity_constraints(EULER, 1e-8, 1e-8)
    with pytest.raises(ConstraintInfeasibleError):
        s.zhang_shu_scale(u, s.averages(u), cset)


def test_limit_update_endpoint_behavior():
    rng = np.random.default_rng(6)
    s = euler_scheme_1d(8, viscosity=4.0)
    u = random_euler_field(rng, s)
    dt = 5e-4
    m = s.mass()[..., None]
    r_lo, f_lo = s.lo_residual_and_fluxes(u)
    r_ho, f_ho = s.ho_residual_and_fluxes(u)
    u_lo = u - dt * r_lo / m
    u_ho = u - dt * r_ho / m
    cset = euler_positivity_constraints(EULER, 1e-8, 1e-8, mu=1.0)
    out, report = s.limit_update(u_lo, u_ho, f_lo - f_ho, dt, cset,
                                 LimiterConfig(k_max=60, tol=1e-12))
    # nothing binds for this smooth field: the limited field matches HO
    assert mass_weighted_norm((out - u_ho).reshape(-1, 3), s.mass().ravel()) <= 1e-10
    # conservation across the limit step
    np.testing.assert_allclose(s.total(out), s.total(u_lo), rtol=1e-12)


# -------------------------------------------------------- entropy behavior

def test_semidiscrete_entropy_conservation_order():
    mesh = DgsemMesh1D(8, (0.0, 1.0), bc="periodic")
    vol = ChandrashekarFlux(EULER)
    s = DgsemScheme1D(EULER, mesh, lobatto_basis(3), vol, EcInterfaceFlux(vol))
    x = s.coords()
    u0 = EULER.from_primitive(2.0 + 0.5 * np.sin(2 * np.pi * x), 0.3,
                              1.0 + 0.2 * np.cos(2 * np.pi * x))
    pair = euler_entropy_pair(EULER)
    m = s.mass()
    total = lambda u: float(np.sum(m * pair.eta(u)))
    lam = float(EULER.max_wave_speed(u0).max())
    dt0 = 0.3 * mesh.dx / lam
    drifts = [abs(total(rk4(s, u0.copy(), dt0 / k, 32 * k)) - total(u0)) for k in (1, 2)]
    assert drifts[1] < drifts[0]
    assert np.log2(drifts[0] / drifts[1]) >= 3.0
