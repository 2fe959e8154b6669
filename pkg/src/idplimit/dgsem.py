"""Nodal spectral-element discontinuous Galerkin method on 1D intervals and
2D Cartesian quadrilaterals.

Gauss-Lobatto collocation with a diagonal mass matrix; the high-order
residual uses entropy-conservative two-point fluxes in the volume terms and
a dissipative flux at element interfaces.  The low-order scheme adds graph
viscosity coupling the nodes of each element.  Antidiffusive fluxes live at
the cell-average level, one per mesh face, and the limited average is pushed
back onto the nodes by a uniform shift plus Zhang-Shu scaling.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre

from .constraints import ConstraintInfeasibleError
from .limiter import AntidiffusiveFluxSet, StencilGraph, iterate_limiter
from .physics import AdmissibilityError


class LobattoBasis:
    """(p+1)-point Gauss-Lobatto nodes, weights and differentiation matrix."""

    def __init__(self, p):
        if p < 1:
            raise ValueError("DGSEM needs p >= 1 (distinct endpoint nodes)")
        self.p = int(p)
        self.nodes, self.weights = _lobatto_rule(self.p)
        self.diff = _differentiation_matrix(self.nodes)

    @property
    def n(self):
        return self.p + 1

    def boundary_matrix(self):
        b = np.zeros((self.n, self.n))
        b[0, 0] = -1.0
        b[-1, -1] = 1.0
        return b

    def viscosity_factor(self):
        """2 max_{k!=l} D_kl / w_l, the graph-viscosity scaling of the basis.

        Only the pairwise (off-diagonal) coupling enters the viscosity term,
        so the diagonal of D is excluded; for p = 3 this evaluates to 9.708.
        """
        ratio = self.diff / self.weights[None, :]
        np.fill_diagonal(ratio, -np.inf)
        return 2.0 * float(ratio.max())

    def lagrange_values(self, x):
        """All Lagrange basis polynomials evaluated at points x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.ones((len(x), self.n))
        for i in range(self.n):
            for j in range(self.n):
                if j != i:
                    vals[:, i] *= (x - self.nodes[j]) / (self.nodes[i] - self.nodes[j])
        return vals


def _lobatto_rule(p):
    """Nodes (+-1 and roots of P_p') and weights 2/(p(p+1) P_p(x)^2)."""
    cp = np.zeros(p + 1)
    cp[p] = 1.0
    interior = legendre.legroots(legendre.legder(cp))
    nodes = np.concatenate([[-1.0], np.sort(interior), [1.0]])
    lp = legendre.legval(nodes, cp)
    weights = 2.0 / (p * (p + 1) * lp**2)
    return nodes, weights


def _differentiation_matrix(nodes):
    n = len(nodes)
    bary = np.ones(n)
    for i in range(n):
        for j in range(n):
            if j != i:
                bary[i] /= nodes[i] - nodes[j]
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d[i, j] = (bary[j] / bary[i]) / (nodes[i] - nodes[j])
        d[i, i] = -d[i].sum()
    return d


def lobatto_basis(p):
    return LobattoBasis(p)


class DgsemMesh1D:
    def __init__(self, n, domain=(0.0, 1.0), bc="periodic"):
        if bc not in ("periodic", "transmissive"):
            raise ValueError(f"unsupported boundary condition '{bc}'")
        self.n = int(n)
        self.domain = (float(domain[0]), float(domain[1]))
        self.bc = bc
        self.dx = (self.domain[1] - self.domain[0]) / self.n

    @property
    def periodic(self):
        return self.bc == "periodic"

    @property
    def num_elements(self):
        return self.n

    def diameter(self):
        return self.dx


class DgsemMesh2D:
    """nx-by-ny Cartesian quadrilateral grid; element el = iy*nx + ix."""

    def __init__(self, nx, ny, domain=((0.0, 1.0), (0.0, 1.0)), bc="periodic"):
        if bc not in ("periodic", "transmissive"):
            raise ValueError(f"unsupported boundary condition '{bc}'")
        self.nx, self.ny = int(nx), int(ny)
        (x0, x1), (y0, y1) = domain
        self.domain = ((float(x0), float(x1)), (float(y0), float(y1)))
        self.bc = bc
        self.dx = (x1 - x0) / self.nx
        self.dy = (y1 - y0) / self.ny

    @property
    def periodic(self):
        return self.bc == "periodic"

    @property
    def num_elements(self):
        return self.nx * self.ny

    def diameter(self):
        return min(self.dx, self.dy)


class _DgsemBase:
    """Shared cell-average limiting machinery for the 1D and 2D schemes."""

    limits_cell_averages = True
    _solver_state = None

    @property
    def can_lag(self):
        return self.flux.freezable

    def set_solver_state(self, state):
        """Freeze the interface flux's nonsmooth data (lagged solves)."""
        self._solver_state = state

    @property
    def n_eq(self):
        return self.law.n_eq

    def total(self, u):
        """Mass-weighted sum per conserved variable."""
        m = self.mass()
        return np.tensordot(m, u, axes=u.ndim - 1)

    def check_admissible(self, u, where=""):
        bad = self.law.violated_predicate(u)
        if bad is not None:
            ok = self.law.admissible(u).reshape(self.mesh.num_elements, -1)
            el = int(np.argmin(ok.all(axis=1)))
            raise AdmissibilityError(bad, where=f"{where} element {el}")

    def lo_residual(self, u):
        return self.lo_residual_and_fluxes(u)[0]

    def ho_residual(self, u):
        return self.ho_residual_and_fluxes(u)[0]

    def _node_rows(self, u):
        nel = self.mesh.num_elements
        return u.reshape(nel, -1, self.n_eq)

    def distribute_limited_average(self, u_ho, a_residual, dt):
        """Shift every node of each element so the averages become limited.

        The shift is -(dt/|k|) sum of the residual (scaled-down) fluxes over
        the element's faces, uniform across the element's nodes.
        """
        res = AntidiffusiveFluxSet(self.graph, a_residual).scatter()
        shift = -(dt / self.cell_measure())[:, None] * res
        rows = self._node_rows(u_ho).copy()
        rows += shift[:, None, :]
        return rows.reshape(u_ho.shape)

    def zhang_shu_scale(self, u, avg, constraints):
        """Squeeze nodal values toward the (feasible) element averages.

        Returns the scaled field and the per-element theta in [0, 1];
        elements whose nodes already satisfy every constraint keep theta = 1
        exactly.  A constraint-infeasible average is fatal.
        """
        nel = self.mesh.num_elements
        rows = self._node_rows(u)
        nn = rows.shape[1]
        el_of_row = np.repeat(np.arange(nel), nn)
        flat = rows.reshape(nel * nn, self.n_eq)
        avg_rows = np.repeat(avg, nn, axis=0)
        ok = constraints.satisfied(flat, dof=el_of_row, tol=0.0)
        theta = np.ones(nel)
        bad_el = ~ok.reshape(nel, nn).all(axis=1)
        if np.any(bad_el):
            sel = np.repeat(bad_el, nn)
            k = constraints.solve(avg_rows[sel], flat[sel] - avg_rows[sel],
                                  dof=el_of_row[sel])
            theta_bad = k.reshape(-1, nn).min(axis=1)
            theta[bad_el] = theta_bad
            scaled = avg[:, None, :] + theta[:, None, None] * (rows - avg[:, None, :])
            out = np.where(bad_el[:, None, None], scaled, rows)
            return out.reshape(u.shape), theta
        return u.copy(), theta

    def limit_update(self, u_lo, u_ho, a_faces, dt, constraints, config,
                     zs_constraints=None, track_ranges=False):
        """Cell-average limiting, nodal distribution and Zhang-Shu scaling."""
        avg_lo = self.averages(u_lo)
        avg_ho = self.averages(u_ho)
        vol = self.cell_measure()
        fluxes = AntidiffusiveFluxSet(self.graph, a_faces)
        scale = dt / vol
        avg_lim, a_res, report = iterate_limiter(
            avg_lo, avg_ho, fluxes, scale, vol, constraints, config,
            track_ranges=track_ranges,
        )
        u = self.distribute_limited_average(u_ho, a_res.a, dt)
        avg_new = self.averages(u)
        u, theta = self.zhang_shu_scale(u, avg_new, zs_constraints or constraints)
        report.theta_min = float(theta.min())
        report.residual_fluxes = a_res.a
        return u, report

    def max_stable_dt(self, u, cfl):
        lam = self.law.max_wave_speed(self.averages(u))
        return cfl * self.mesh.diameter() / float(lam.max())

    def element_colors(self):
        mesh = self.mesh
        if isinstance(mesh, DgsemMesh2D):
            el = np.arange(mesh.num_elements)
            return (el % mesh.nx + el // mesh.nx) % 2
        return np.arange(mesh.num_elements) % 2


class DgsemScheme1D(_DgsemBase):
    """1D DGSEM; fields have shape (n_elements, p+1, n_eq)."""

    def __init__(self, law, mesh: DgsemMesh1D, basis: LobattoBasis,
                 volume_flux, interface_flux, viscosity=0.0):
        self.law = law
        self.mesh = mesh
        self.basis = basis
        self.volume_flux = volume_flux
        self.flux = interface_flux
        self.viscosity = float(viscosity)
        self.jac = 0.5 * mesh.dx

        n = mesh.n
        if mesh.periodic:
            left = np.arange(n)
            right = (np.arange(n) + 1) % n
        else:
            left = np.arange(-1, n)
            right = np.concatenate([np.arange(n), [-1]])
        self.face_left = left
        self.face_right = right
        self.graph = StencilGraph(n, left, right)

    def mass(self):
        return np.broadcast_to(self.basis.weights * self.jac,
                               (self.mesh.n, self.basis.n)).copy()

    def cell_measure(self):
        return np.full(self.mesh.n, self.mesh.dx)

    def coords(self):
        a, _ = self.mesh.domain
        centers = a + (np.arange(self.mesh.n) + 0.5) * self.mesh.dx
        return centers[:, None] + self.jac * self.basis.nodes[None, :]

    def interpolate(self, func):
        vals = np.asarray(func(self.coords()), dtype=float)
        if vals.ndim == 2:
            vals = vals[..., None]
        return vals

    def averages(self, u):
        w = self.basis.weights
        return np.einsum("i,eiv->ev", w, u) / 2.0

    def _face_traces(self, u):
        """(inner-left, inner-right) states at every face."""
        n = self.mesh.n
        if self.mesh.periodic:
            tl = u[:, -1, :]
            tr = u[(np.arange(n) + 1) % n, 0, :]
        else:
            tl = np.concatenate([u[0:1, 0, :], u[:, -1, :]])
            tr = np.concatenate([u[:, 0, :], u[-1:, -1, :]])
        return tl, tr

    def _volume(self, u):
        shape = (u.shape[0], self.basis.n, self.basis.n, self.n_eq)
        a = np.broadcast_to(u[:, :, None, :], shape)
        b = np.broadcast_to(u[:, None, :, :], shape)
        h = self.volume_flux(a, b, 0)
        d = self.basis.diff
        w = self.basis.weights
        return 2.0 * w[None, :, None] * np.einsum("ik,eikv->eiv", d, h)

    def _surface(self, u, f_face):
        out = np.zeros_like(u)
        n = self.mesh.n
        fx_r = self.law.flux(u[:, -1, :], 0)
        fx_l = self.law.flux(u[:, 0, :], 0)
        if self.mesh.periodic:
            right_face = np.arange(n)
            left_face = (np.arange(n) - 1) % n
        else:
            right_face = np.arange(1, n + 1)
            left_face = np.arange(n)
        out[:, -1, :] += f_face[right_face] - fx_r
        out[:, 0, :] -= f_face[left_face] - fx_l
        return out

    def graph_viscosity(self, u):
        """Pairwise nodal coupling d * w_i sum_k (w_k/2)(U_i - U_k)."""
        if self.viscosity == 0.0:
            return np.zeros_like(u)
        w = self.basis.weights
        mean = 0.5 * np.einsum("k,ekv->ev", w, u)
        return self.viscosity * w[None, :, None] * (u - mean[:, None, :])

    def solver_state(self, u):
        tl, tr = self._face_traces(u)
        return self.flux.freeze_data(tl, tr, +1.0) if self.flux.freezable else None

    def face_flux_integrals(self, u):
        tl, tr = self._face_traces(u)
        if self._solver_state is not None:
            return self.flux.frozen(tl, tr, +1.0, self._solver_state)
        return self.flux(tl, tr, +1.0)

    def ho_residual_and_fluxes(self, u):
        self.check_admissible(u, "high-order")
        f_face = self.face_flux_integrals(u)
        r = self._volume(u) + self._surface(u, f_face)
        return r, f_face

    def lo_residual_and_fluxes(self, u):
        self.check_admissible(u, "low-order")
        f_face = self.face_flux_integrals(u)
        r = self._volume(u) + self._surface(u, f_face) + self.graph_viscosity(u)
        return r, f_face

    def entropy_flux_divergence(self, u, pair, lam):
        """Per-element conservative entropy-flux residual (Rusanov form)."""
        from .fluxes import rusanov_entropy_flux

        tl, tr = self._face_traces(u)
        q = rusanov_entropy_flux(self.law, pair, tl, tr, +1.0, lam=lam)
        n = self.mesh.n
        if self.mesh.periodic:
            return q - np.roll(q, 1)
        return q[1:] - q[:-1]


class DgsemScheme2D(_DgsemBase):
    """2D Cartesian DGSEM; fields have shape (nel, p+1, p+1, n_eq).

    Node (i, j) collocates (xi_1, xi_2); i varies along x and j along y.
    """

    def __init__(self, law, mesh: DgsemMesh2D, basis: LobattoBasis,
                 volume_flux, interface_flux, viscosity=0.0):
        self.law = law
        self.mesh = mesh
        self.basis = basis
        self.volume_flux = volume_flux
        self.flux = interface_flux
        self.viscosity = float(viscosity)
        self.jac = 0.25 * mesh.dx * mesh.dy
        self.metric_x = 0.5 * mesh.dy  # J grad(xi_1) on Cartesian grids
        self.metric_y = 0.5 * mesh.dx

        nx, ny = mesh.nx, mesh.ny
        el = lambda ix, iy: iy * nx + ix
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        if mesh.periodic:
            xl = el(ix, iy).ravel()
            xr = el((ix + 1) % nx, iy).ravel()
            ixf, iyf = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
            yl = el(ixf, iyf).ravel()
            yr = el(ixf, (iyf + 1) % ny).ravel()
        else:
            gx, gy = np.meshgrid(np.arange(-1, nx), np.arange(ny), indexing="xy")
            xl = np.where(gx >= 0, el(np.maximum(gx, 0), gy), -1).ravel()
            xr = np.where(gx + 1 < nx, el(np.minimum(gx + 1, nx - 1), gy), -1).ravel()
            gx2, gy2 = np.meshgrid(np.arange(nx), np.arange(-1, ny), indexing="xy")
            yl = np.where(gy2 >= 0, el(gx2, np.maximum(gy2, 0)), -1).ravel()
            yr = np.where(gy2 + 1 < ny, el(gx2, np.minimum(gy2 + 1, ny - 1)), -1).ravel()
        self.xface_left, self.xface_right = xl, xr
        self.yface_left, self.yface_right = yl, yr
        self.num_xfaces = len(xl)
        left = np.concatenate([xl, yl])
        right = np.concatenate([xr, yr])
        self.graph = StencilGraph(mesh.num_elements, left, right)

    def mass(self):
        w = self.basis.weights
        m = np.einsum("i,j->ij", w, w) * self.jac
        return np.broadcast_to(m, (self.mesh.num_elements,) + m.shape).copy()

    def cell_measure(self):
        return np.full(self.mesh.num_elements, self.mesh.dx * self.mesh.dy)

    def coords(self):
        (x0, _), (y0, _) = self.mesh.domain
        nx, ny = self.mesh.nx, self.mesh.ny
        cx = x0 + (np.arange(nx) + 0.5) * self.mesh.dx
        cy = y0 + (np.arange(ny) + 0.5) * self.mesh.dy
        ex, ey = np.meshgrid(cx, cy, indexing="xy")
        ex, ey = ex.ravel(), ey.ravel()
        xn = ex[:, None, None] + 0.5 * self.mesh.dx * self.basis.nodes[None, :, None]
        yn = ey[:, None, None] + 0.5 * self.mesh.dy * self.basis.nodes[None, None, :]
        return np.broadcast_to(xn, (len(ex), self.basis.n, self.basis.n)).copy(), \
            np.broadcast_to(yn, (len(ey), self.basis.n, self.basis.n)).copy()

    def interpolate(self, func):
        x, y = self.coords()
        vals = np.asarray(func(x, y), dtype=float)
        if vals.ndim == 3:
            vals = vals[..., None]
        return vals

    def averages(self, u):
        w = self.basis.weights
        return np.einsum("i,j,eijv->ev", w, w, u) / 4.0

    # -- traces ------------------------------------------------------------
    def _xface_traces(self, u):
        tl = np.where((self.xface_left >= 0)[:, None, None],
                      u[self.xface_left, -1, :, :], u[self.xface_right, 0, :, :])
        tr = np.where((self.xface_right >= 0)[:, None, None],
                      u[self.xface_right, 0, :, :], u[self.xface_left, -1, :, :])
        return tl, tr

    def _yface_traces(self, u):
        tl = np.where((self.yface_left >= 0)[:, None, None],
                      u[self.yface_left, :, -1, :], u[self.yface_right, :, 0, :])
        tr = np.where((self.yface_right >= 0)[:, None, None],
                      u[self.yface_right, :, 0, :], u[self.yface_left, :, -1, :])
        return tl, tr

    def _volume(self, u):
        d = self.basis.diff
        w = self.basis.weights
        ww = w[:, None] * w[None, :]
        ax = u[:, :, None, :, :]
        bx = u[:, None, :, :, :]
        shape = (u.shape[0], self.basis.n, self.basis.n, self.basis.n, self.n_eq)
        hx = self.volume_flux(np.broadcast_to(ax, shape), np.broadcast_to(bx, shape), 0)
        vol = 2.0 * self.metric_x * np.einsum("ik,eikjv->eijv", d, hx)
        ay = u[:, :, :, None, :]
        by = u[:, :, None, :, :]
        shape_y = (u.shape[0], self.basis.n, self.basis.n, self.basis.n, self.n_eq)
        hy = self.volume_flux(np.broadcast_to(ay, shape_y), np.broadcast_to(by, shape_y), 1)
        vol += 2.0 * self.metric_y * np.einsum("jk,eijkv->eijv", d, hy)
        return ww[None, :, :, None] * vol

    def _surface(self, u, hx, hy):
        """Scatter per-node face fluxes; hx: (n_xfaces, p+1, n_eq)."""
        out = np.zeros_like(u)
        w = self.basis.weights
        wx = w[None, :, None] * self.metric_x
        has = self.xface_left >= 0
        els = self.xface_left[has]
        fx = self.law.flux(u[els, -1, :, :], 0)
        out[els, -1, :, :] += wx[0] * (hx[has] - fx)
        has = self.xface_right >= 0
        els = self.xface_right[has]
        fx = self.law.flux(u[els, 0, :, :], 0)
        out[els, 0, :, :] -= wx[0] * (hx[has] - fx)
        wy = w[None, :, None] * self.metric_y
        has = self.yface_left >= 0
        els = self.yface_left[has]
        fy = self.law.flux(u[els, :, -1, :], 1)
        out[els, :, -1, :] += wy[0] * (hy[has] - fy)
        has = self.yface_right >= 0
        els = self.yface_right[has]
        fy = self.law.flux(u[els, :, 0, :], 1)
        out[els, :, 0, :] -= wy[0] * (hy[has] - fy)
        return out

    def graph_viscosity(self, u):
        if self.viscosity == 0.0:
            return np.zeros_like(u)
        w = self.basis.weights
        ww = w[:, None] * w[None, :]
        sum_w = 2.0  # sum of weights
        mean_x = 0.5 * np.einsum("k,ekjv->ejv", w, u)
        mean_y = 0.5 * np.einsum("k,eikv->eiv", w, u)
        term = self.metric_x * (0.5 * sum_w * u - mean_x[:, None, :, :]) \
            + self.metric_y * (0.5 * sum_w * u - mean_y[:, :, None, :])
        return self.viscosity * ww[None, :, :, None] * term

    def solver_state(self, u):
        if not self.flux.freezable:
            return None
        ex = np.array([1.0, 0.0])
        ey = np.array([0.0, 1.0])
        tlx, trx = self._xface_traces(u)
        tly, tr_y = self._yface_traces(u)
        return (self.flux.freeze_data(tlx, trx, ex),
                self.flux.freeze_data(tly, tr_y, ey))

    def _face_node_fluxes(self, u):
        ex = np.array([1.0, 0.0])
        ey = np.array([0.0, 1.0])
        tlx, trx = self._xface_traces(u)
        tly, tr_y = self._yface_traces(u)
        if self._solver_state is not None:
            hx = self.flux.frozen(tlx, trx, ex, self._solver_state[0])
            hy = self.flux.frozen(tly, tr_y, ey, self._solver_state[1])
        else:
            hx = self.flux(tlx, trx, ex)
            hy = self.flux(tly, tr_y, ey)
        return hx, hy

    def face_flux_integrals(self, u, node_fluxes=None):
        hx, hy = node_fluxes if node_fluxes is not None else self._face_node_fluxes(u)
        w = self.basis.weights
        ix = self.metric_x * np.einsum("k,fkv->fv", w, hx)
        iy = self.metric_y * np.einsum("k,fkv->fv", w, hy)
        return np.concatenate([ix, iy], axis=0)

    def ho_residual_and_fluxes(self, u):
        self.check_admissible(u, "high-order")
        hx, hy = self._face_node_fluxes(u)
        r = self._volume(u) + self._surface(u, hx, hy)
        return r, self.face_flux_integrals(u, (hx, hy))

    def lo_residual_and_fluxes(self, u):
        self.check_admissible(u, "low-order")
        hx, hy = self._face_node_fluxes(u)
        r = self._volume(u) + self._surface(u, hx, hy) + self.graph_viscosity(u)
        return r, self.face_flux_integrals(u, (hx, hy))

    def entropy_flux_divergence(self, u, pair, lam):
        from .fluxes import rusanov_entropy_flux

        w = self.basis.weights
        tl, tr = self._xface_traces(u)
        qx = rusanov_entropy_flux(self.law, pair, tl, tr, np.array([1.0, 0.0]), lam=lam)
        qx = self.metric_x * np.einsum("k,fk->f", w, qx)
        tl, tr = self._yface_traces(u)
        qy = rusanov_entropy_flux(self.law, pair, tl, tr, np.array([0.0, 1.0]), lam=lam)
        qy = self.metric_y * np.einsum("k,fk->f", w, qy)
        q = np.concatenate([qx, qy])
        out = np.zeros(self.mesh.num_elements)
        g = self.graph
        mask = g.left >= 0
        np.add.at(out, g.left[mask], q[mask])
        mask = g.right >= 0
        np.add.at(out, g.right[mask], -q[mask])
        return out
