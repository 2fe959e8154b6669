"""1D uniform-mesh finite volumes: first-order low-order residual, MUSCL
high-order residual with superbee-limited parabolic reconstruction, and the
per-face antidiffusive fluxes between them."""

from __future__ import annotations

import logging

import numpy as np

from .limiter import AntidiffusiveFluxSet, StencilGraph, iterate_limiter
from .physics import AdmissibilityError, Euler1D

log = logging.getLogger(__name__)

KAPPA = 1.0 / 3.0  # third-order parabolic reconstruction weight


def superbee(r):
    r = np.asarray(r, dtype=float)
    return np.maximum(0.0, np.maximum(np.minimum(2.0 * r, 1.0), np.minimum(r, 2.0)))


class FvMesh1D:
    """Uniform 1D mesh with transmissive, periodic or reflective ends."""

    def __init__(self, n, domain=(0.0, 1.0), bc="transmissive"):
        if n < 3:
            raise ValueError("need at least 3 cells")
        if bc not in ("transmissive", "periodic", "reflective"):
            raise ValueError(f"unknown boundary condition '{bc}'")
        self.n = int(n)
        self.domain = (float(domain[0]), float(domain[1]))
        self.bc = bc
        self.dx = (self.domain[1] - self.domain[0]) / self.n

    @property
    def periodic(self):
        return self.bc == "periodic"

    @property
    def num_faces(self):
        return self.n if self.periodic else self.n + 1

    def centers(self):
        a, _ = self.domain
        return a + (np.arange(self.n) + 0.5) * self.dx

    def diameter(self):
        return self.dx

    def cell_measure(self):
        return np.full(self.n, self.dx)


class FvScheme1D:
    """Pairs the first-order and MUSCL residuals on one mesh.

    Face f sits between cells ``face_left[f]`` and ``face_right[f]``; fluxes
    are oriented left-to-right and the left cell receives +A.  Ghost indices
    are -1 (transmissive and reflective ends).
    """

    limits_cell_averages = False

    def __init__(self, law, mesh: FvMesh1D, interface_flux, reconstruct=True,
                 slope_limiter="superbee"):
        self.law = law
        self.mesh = mesh
        self.flux = interface_flux
        self.reconstruct = reconstruct
        if slope_limiter not in ("superbee", "none"):
            raise ValueError("slope_limiter must be 'superbee' or 'none'")
        self.slope_limiter = slope_limiter
        # per-face first-order fallback for inadmissible reconstructed traces;
        # disabled when running the bare unlimited scheme
        self.trace_fallback = True
        self.fallback_count = 0
        # frozen limiter/flux state for lagged implicit solves
        self._solver_state = None

        n = mesh.n
        if mesh.periodic:
            self.face_left = np.arange(n)
            self.face_right = (np.arange(n) + 1) % n
        else:
            self.face_left = np.arange(-1, n)
            self.face_right = np.concatenate([np.arange(n), [-1]])
        self.graph = StencilGraph(n, self.face_left, self.face_right)

    # -- field helpers ----------------------------------------------------
    @property
    def n_eq(self):
        return self.law.n_eq

    @property
    def num_dofs(self):
        return self.mesh.n

    def mass(self):
        return self.mesh.cell_measure()

    def coords(self):
        return self.mesh.centers()

    def interpolate(self, func):
        """Initial data sampled at cell centers."""
        u = np.asarray(func(self.coords()), dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        return u

    def _ghosts(self, u):
        """(left ghost, right ghost) states for the non-periodic ends."""
        gl, gr = u[0].copy(), u[-1].copy()
        if self.mesh.bc == "reflective" and isinstance(self.law, Euler1D):
            gl[1] = -gl[1]
            gr[1] = -gr[1]
        return gl, gr

    def _extend(self, u, width=2):
        """Pad with ghost layers according to the boundary condition."""
        if self.mesh.periodic:
            return np.concatenate([u[-width:], u, u[:width]])
        gl, gr = self._ghosts(u)
        pad_l = np.repeat(gl[None, :], width, axis=0)
        pad_r = np.repeat(gr[None, :], width, axis=0)
        return np.concatenate([pad_l, u, pad_r])

    # -- traces -------------------------------------------------------------
    def first_order_traces(self, u):
        """Cell values on both sides of every face."""
        ext = self._extend(u, 1)
        if self.mesh.periodic:
            return u, ext[2:]
        return ext[:-1], ext[1:]

    def _slope_factors(self, u):
        """Superbee factors (phi_r, phi_inv) per cell."""
        ext = self._extend(u, 1)
        delta = np.diff(ext, axis=0)
        d_lo, d_hi = delta[:-1], delta[1:]
        if self.slope_limiter == "none":
            phi_r = phi_inv = np.ones_like(d_lo)
        else:
            guard_lo = np.where(d_lo == 0.0, 1e-30, np.sign(d_lo) * np.maximum(np.abs(d_lo), 1e-30))
            guard_hi = np.where(d_hi == 0.0, 1e-30, np.sign(d_hi) * np.maximum(np.abs(d_hi), 1e-30))
            phi_r = superbee(d_hi / guard_lo)
            phi_inv = superbee(d_lo / guard_hi)
        if not self.mesh.periodic:
            phi_r[0] = phi_r[-1] = 0.0
            phi_inv[0] = phi_inv[-1] = 0.0
        return phi_r, phi_inv

    def _cell_traces(self, u, factors=None):
        """Raw kappa-scheme traces per cell: (left-face, right-face)."""
        ext = self._extend(u, 1)
        delta = np.diff(ext, axis=0)
        d_lo, d_hi = delta[:-1], delta[1:]
        phi_r, phi_inv = factors if factors is not None else self._slope_factors(u)
        up = u + 0.25 * ((1 - KAPPA) * phi_r * d_lo + (1 + KAPPA) * phi_inv * d_hi)
        um = u - 0.25 * ((1 - KAPPA) * phi_inv * d_hi + (1 + KAPPA) * phi_r * d_lo)
        return um, up

    def _face_traces_raw(self, u, factors=None):
        um, up = self._cell_traces(u, factors)
        if self.mesh.periodic:
            return up, np.roll(um, -1, axis=0)
        gl, gr = self._ghosts(u)
        return np.concatenate([gl[None, :], up]), np.concatenate([um, gr[None, :]])

    @property
    def can_lag(self):
        return self.reconstruct or self.flux.freezable

    def solver_state(self, u):
        """Nonsmooth pieces of the HO operator, captured for lagged solves:
        slope factors, the trace-fallback mask, and the flux's own frozen
        data (e.g. the Rusanov dissipation coefficient)."""
        factors = self._slope_factors(u)
        left, right = self._face_traces_raw(u, factors)
        bad = ~(self.law.admissible(left) & self.law.admissible(right))
        if np.any(bad):
            lo_l, lo_r = self.first_order_traces(u)
            left = np.where(bad[:, None], lo_l, left)
            right = np.where(bad[:, None], lo_r, right)
        flux_data = self.flux.freeze_data(left, right, +1.0) \
            if self.flux.freezable else None
        return factors[0], factors[1], bad, flux_data

    def set_solver_state(self, state):
        """Freeze the limiter/flux state, making the HO residual smooth."""
        self._solver_state = state

    def muscl_traces(self, u):
        """Superbee-limited kappa-scheme traces at every face.

        Boundary cells of non-periodic meshes fall back to first order, as
        does any face whose reconstructed state is inadmissible.  With a
        frozen limiter state the switches are fixed and stray inadmissible
        traces are floored instead (keeps implicit solves smooth).
        """
        if self._solver_state is not None:
            phi_r, phi_inv, bad, _ = self._solver_state
            left, right = self._face_traces_raw(u, (phi_r, phi_inv))
            lo_l, lo_r = self.first_order_traces(u)
            left = np.where(bad[:, None], lo_l, left)
            right = np.where(bad[:, None], lo_r, right)
            if hasattr(self.law, "floor_state"):
                if not np.all(self.law.admissible(left)):
                    left, _ = self.law.floor_state(left)
                if not np.all(self.law.admissible(right)):
                    right, _ = self.law.floor_state(right)
            return left, right
        left, right = self._face_traces_raw(u)
        left, right = self._admissible_or_first_order(u, left, right)
        return left, right

    def _admissible_or_first_order(self, u, left, right):
        if not self.trace_fallback:
            return left, right
        ok = self.law.admissible(left) & self.law.admissible(right)
        if np.all(ok):
            return left, right
        lo_l, lo_r = self.first_order_traces(u)
        bad = ~ok
        self.fallback_count += int(bad.sum())
        log.debug("MUSCL fallback to first-order traces at %d faces", int(bad.sum()))
        left = np.where(bad[:, None], lo_l, left)
        right = np.where(bad[:, None], lo_r, right)
        return left, right

    def reconstruct_trace(self, u, cell, side):
        """Raw reconstructed trace of one cell at its left or right face."""
        um, up = self._cell_traces(u)
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        return up[cell] if side == "right" else um[cell]

    # -- residuals ---------------------------------------------------------
    def lo_face_fluxes(self, u):
        self.check_admissible(u, "low-order")
        tl, tr = self.first_order_traces(u)
        return self.flux(tl, tr, +1.0)

    def ho_face_fluxes(self, u):
        self.check_admissible(u, "high-order")
        if not self.reconstruct:
            tl, tr = self.first_order_traces(u)
        else:
            tl, tr = self.muscl_traces(u)
        if self._solver_state is not None and self._solver_state[3] is not None:
            return self.flux.frozen(tl, tr, +1.0, self._solver_state[3])
        return self.flux(tl, tr, +1.0)

    def residual_from_faces(self, f):
        """R_c = F_right(c) - F_left(c); mass matrix entry is dx."""
        if self.mesh.periodic:
            return f - np.roll(f, 1, axis=0)
        return f[1:] - f[:-1]

    def lo_residual(self, u):
        return self.residual_from_faces(self.lo_face_fluxes(u))

    def ho_residual(self, u):
        return self.residual_from_faces(self.ho_face_fluxes(u))

    def lo_residual_and_fluxes(self, u):
        f = self.lo_face_fluxes(u)
        return self.residual_from_faces(f), f

    def ho_residual_and_fluxes(self, u):
        f = self.ho_face_fluxes(u)
        return self.residual_from_faces(f), f

    def total(self, u):
        """Mass-weighted sum per conserved variable."""
        return self.mass() @ u

    def averages(self, u):
        return u

    def antidiffusive_fluxes(self, f_lo, f_hi):
        """A per face = integrated low-order minus high-order flux."""
        return AntidiffusiveFluxSet(self.graph, f_lo - f_hi)

    # -- limiter interface ---------------------------------------------------
    def limiter_mass(self):
        return self.mass()

    def limiter_field(self, u):
        return u

    def limit_update(self, u_lo, u_ho, a_faces, dt, constraints, config,
                     track_ranges=False):
        fluxes = AntidiffusiveFluxSet(self.graph, a_faces)
        scale = dt / self.mass()
        u, a_res, report = iterate_limiter(
            u_lo, u_ho, fluxes, scale, self.mass(), constraints, config,
            track_ranges=track_ranges,
        )
        report.residual_fluxes = a_res.a
        return u, report

    # -- misc ---------------------------------------------------------------
    def element_colors(self):
        return np.arange(self.mesh.n) % 2

    def max_stable_dt(self, u, cfl):
        lam = self.law.max_wave_speed(u)
        return cfl * self.mesh.dx / float(lam.max())

    def stencil_min(self, values):
        """Per-cell min over the cell and its face neighbors."""
        ext = np.empty(len(values) + 2)
        ext[1:-1] = values
        if self.mesh.periodic:
            ext[0], ext[-1] = values[-1], values[0]
        else:
            ext[0], ext[-1] = values[0], values[-1]
        return np.minimum(np.minimum(ext[:-2], ext[1:-1]), ext[2:])

    def check_admissible(self, u, where=""):
        bad = self.law.violated_predicate(u)
        if bad is not None:
            ok = self.law.admissible(u)
            idx = int(np.argmin(ok))
            raise AdmissibilityError(bad, where=f"{where} cell {idx}")
