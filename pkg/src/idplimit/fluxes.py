"""Two-point numerical fluxes: Rusanov, exact scalar Godunov, and
entropy-conservative volume fluxes.

Interface fluxes evaluate h(u-, u+, n) with a unit normal n and satisfy
conservation h(a, b, n) = -h(b, a, -n) and consistency h(u, u, n) = f(u).n.
Volume fluxes are symmetric two-point functions evaluated per direction.
"""

from __future__ import annotations

import numpy as np

from .physics import (
    Burgers1D,
    Burgers2D,
    Euler1D,
    Kpp2D,
    LinearAdvection1D,
    ScalarLaw,
    UnsupportedLawError,
)


def _axis_of_normal(normal):
    """Return (axis, sign) when the normal is axis aligned, else None."""
    normal = np.asarray(normal, dtype=float)
    if normal.ndim == 0:
        return 0, float(normal)
    nz = np.nonzero(normal)[0]
    if len(nz) == 1:
        return int(nz[0]), float(normal[nz[0]])
    return None


def rusanov(law, ul, ur, normal):
    """h = (f(u-)+f(u+)).n/2 - max(lambda-, lambda+) (u+ - u-)/2."""
    ul = np.asarray(ul, dtype=float)
    ur = np.asarray(ur, dtype=float)
    lam = np.maximum(law.max_wave_speed(ul), law.max_wave_speed(ur))
    axis = _axis_of_normal(normal)
    if axis is not None:
        d, s = axis
        fn = 0.5 * s * (law.flux(ul, d) + law.flux(ur, d))
    else:
        fn = 0.5 * (law.flux_dot_normal(ul, normal) + law.flux_dot_normal(ur, normal))
    return fn - 0.5 * lam[..., None] * (ur - ul)


def godunov_scalar(law, ul, ur, normal):
    """Exact Godunov flux for scalar laws (min/max form of the Riemann solution)."""
    if not isinstance(law, ScalarLaw):
        raise UnsupportedLawError("the Godunov flux is implemented for scalar laws")
    ul = np.asarray(ul, dtype=float)
    ur = np.asarray(ur, dtype=float)
    a, b = ul[..., 0], ur[..., 0]
    axis = _axis_of_normal(normal)
    if axis is not None:
        d, s = axis
        fmin, fmax = law.flux_range(a, b, d)
        gmin, gmax = (s * fmin, s * fmax) if s > 0 else (s * fmax, s * fmin)
    else:
        normal = np.asarray(normal, dtype=float)
        t = np.linspace(0.0, 1.0, 1001)
        samples = np.minimum(a, b)[..., None] + t * np.abs(b - a)[..., None]
        g = sum(
            normal[d] * law.flux_scalar(samples, d)
            for d in range(law.space_dim)
            if normal[d] != 0.0
        )
        gmin, gmax = g.min(axis=-1), g.max(axis=-1)
    return np.where(a <= b, gmin, gmax)[..., None]


def logarithmic_mean(a, b):
    """(b - a)/(ln b - ln a) with a guarded series expansion near a = b.

    Arguments are ordered before evaluating so the mean is exactly symmetric,
    which makes fluxes built from it conservative to round-off.
    """
    lo = np.minimum(a, b).astype(float)
    hi = np.maximum(a, b).astype(float)
    zeta = lo / hi
    near = np.abs(zeta - 1.0) < 1e-4
    # series in eta = (hi - lo)/(hi + lo): mean = (a+b)/2 / (1 + eta^2/3 + eta^4/5)
    eta2 = ((hi - lo) / (hi + lo)) ** 2
    series = 0.5 * (lo + hi) / (1.0 + eta2 / 3.0 + eta2**2 / 5.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = np.where(near, 1.0, (hi - lo) / np.log(np.where(near, 2.0, hi / lo)))
    return np.where(near, series, exact)


def ec_flux_scalar(law, ul, ur, direction):
    """Symmetric two-point flux, entropy conservative for eta = u^2/2.

    Closed forms per law: arithmetic mean (linear), the cubic mean
    (u-^2 + u- u+ + u+^2)/6 (Burgers) and difference quotients of the flux
    antiderivative (sin, cos) for the rotating-wave law.
    """
    ul = np.asarray(ul, dtype=float)
    ur = np.asarray(ur, dtype=float)
    a, b = ul[..., 0], ur[..., 0]
    if isinstance(law, LinearAdvection1D):
        h = 0.5 * law.speed * (a + b)
    elif isinstance(law, (Burgers1D, Burgers2D)):
        h = (a * a + a * b + b * b) / 6.0
    elif isinstance(law, Kpp2D):
        db = b - a
        small = np.abs(db) < 1e-7
        mid = 0.5 * (a + b)
        safe = np.where(small, 1.0, db)
        if direction == 0:
            h = np.where(small, np.sin(mid), (np.cos(a) - np.cos(b)) / safe)
        else:
            h = np.where(small, np.cos(mid), (np.sin(b) - np.sin(a)) / safe)
    else:
        raise UnsupportedLawError(f"no EC flux registered for {law.name}")
    return h[..., None]


def ec_flux_chandrashekar(law, ul, ur, direction=0):
    """Kinetic-energy-preserving, entropy-conservative Euler flux.

    Logarithmic means of rho and beta = rho/(2p), arithmetic means elsewhere.
    """
    if not isinstance(law, Euler1D):
        raise UnsupportedLawError("the Chandrashekar flux applies to the Euler law")
    ul = np.asarray(ul, dtype=float)
    ur = np.asarray(ur, dtype=float)
    rho_l, rho_r = ul[..., 0], ur[..., 0]
    v_l, v_r = law.velocity(ul), law.velocity(ur)
    p_l, p_r = law.pressure(ul), law.pressure(ur)
    beta_l, beta_r = rho_l / (2.0 * p_l), rho_r / (2.0 * p_r)

    rho_ln = logarithmic_mean(rho_l, rho_r)
    beta_ln = logarithmic_mean(beta_l, beta_r)
    v_bar = 0.5 * (v_l + v_r)
    v2_bar = 0.5 * (v_l**2 + v_r**2)
    p_tilde = 0.5 * (rho_l + rho_r) / (beta_l + beta_r)

    f_rho = rho_ln * v_bar
    f_mom = v_bar * f_rho + p_tilde
    f_ene = (0.5 / ((law.gamma - 1.0) * beta_ln) - 0.5 * v2_bar) * f_rho + v_bar * f_mom
    return np.stack([f_rho, f_mom, f_ene], axis=-1)


def rusanov_entropy_flux(law, pair, ul, ur, normal, lam=None):
    """Conservative numerical entropy flux matching the Rusanov dissipation."""
    ul = np.asarray(ul, dtype=float)
    ur = np.asarray(ur, dtype=float)
    if lam is None:
        lam = np.maximum(law.max_wave_speed(ul), law.max_wave_speed(ur))
    axis = _axis_of_normal(normal)
    if axis is None:
        raise ValueError("axis-aligned normals only")
    d, s = axis
    qn = 0.5 * s * (pair.q(ul, d) + pair.q(ur, d))
    return qn - 0.5 * lam * (pair.eta(ur) - pair.eta(ul))


# -- flux objects consumed by the space discretizations --------------------

class InterfaceFlux:
    """Dissipative two-point flux evaluated at element interfaces.

    Freezable fluxes expose the nonsmooth part of their formula (upwind
    branches, dissipation coefficients) as data captured from a reference
    state, so implicit solvers can lag it and iterate on a smooth system.
    """

    kind = "interface"
    name = "interface"
    freezable = False

    def __init__(self, law):
        self.law = law

    def __call__(self, ul, ur, normal):
        raise NotImplementedError

    def freeze_data(self, ul, ur, normal):
        return None

    def frozen(self, ul, ur, normal, data):
        return self(ul, ur, normal)


class RusanovFlux(InterfaceFlux):
    name = "rusanov"
    freezable = True

    def __call__(self, ul, ur, normal):
        return rusanov(self.law, ul, ur, normal)

    def freeze_data(self, ul, ur, normal):
        """Lagged dissipation coefficient max(lambda-, lambda+)."""
        return np.maximum(self.law.max_wave_speed(ul), self.law.max_wave_speed(ur))

    def frozen(self, ul, ur, normal, lam):
        ul = np.asarray(ul, dtype=float)
        ur = np.asarray(ur, dtype=float)
        axis = _axis_of_normal(normal)
        if axis is not None:
            d, s = axis
            fn = 0.5 * s * (self.law.flux(ul, d) + self.law.flux(ur, d))
        else:
            fn = 0.5 * (self.law.flux_dot_normal(ul, normal)
                        + self.law.flux_dot_normal(ur, normal))
        return fn - 0.5 * lam[..., None] * (ur - ul)


class GodunovFlux(InterfaceFlux):
    name = "godunov"
    freezable = True

    def __call__(self, ul, ur, normal):
        return godunov_scalar(self.law, ul, ur, normal)

    def freeze_data(self, ul, ur, normal):
        """Lagged upwind branch: which state's flux the min/max form picks.

        Codes 0/1 select the (solution-dependent) left/right trace; code 2
        pins an interior critical point, stored by value.
        """
        ul = np.asarray(ul, dtype=float)
        ur = np.asarray(ur, dtype=float)
        a, b = ul[..., 0], ur[..., 0]
        axis = _axis_of_normal(normal)
        if axis is None:
            raise ValueError("axis-aligned normals only")
        d, s = axis
        umin, umax = self.law.flux_argextreme(a, b, d)
        want_min = (a <= b) if s > 0 else (a > b)
        ustar = np.where(want_min, umin, umax)
        code = np.where(ustar == a, 0, np.where(ustar == b, 1, 2)).astype(np.int8)
        return code, ustar

    def frozen(self, ul, ur, normal, data):
        code, const = data
        a, b = np.asarray(ul)[..., 0], np.asarray(ur)[..., 0]
        d, s = _axis_of_normal(normal)
        ustar = np.where(code == 0, a, np.where(code == 1, b, const))
        return (s * self.law.flux_scalar(ustar, d))[..., None]


class VolumeFlux:
    """Symmetric entropy-conservative two-point flux, evaluated per direction."""

    kind = "volume"
    name = "volume"

    def __init__(self, law):
        self.law = law

    def __call__(self, ul, ur, direction):
        raise NotImplementedError


class SquareEntropyVolumeFlux(VolumeFlux):
    name = "ec-square"

    def __call__(self, ul, ur, direction):
        return ec_flux_scalar(self.law, ul, ur, direction)


class ChandrashekarFlux(VolumeFlux):
    name = "ec-chandrashekar"

    def __call__(self, ul, ur, direction):
        return ec_flux_chandrashekar(self.law, ul, ur, direction)


class EcInterfaceFlux(InterfaceFlux):
    """Central interface flux built from a volume flux (no upwind dissipation)."""

    name = "ec-interface"

    def __init__(self, volume_flux):
        super().__init__(volume_flux.law)
        self.volume_flux = volume_flux

    def __call__(self, ul, ur, normal):
        axis = _axis_of_normal(normal)
        if axis is None:
            raise ValueError("axis-aligned normals only")
        d, s = axis
        return s * self.volume_flux(ul, ur, d)


def make_interface_flux(name, law):
    if name == "rusanov":
        return RusanovFlux(law)
    if name == "godunov":
        return GodunovFlux(law)
    if name == "ec":
        return EcInterfaceFlux(make_volume_flux("ec", law))
    raise ValueError(f"unknown interface flux '{name}'")


def make_volume_flux(name, law):
    if name == "ec":
        if isinstance(law, Euler1D):
            return ChandrashekarFlux(law)
        return SquareEntropyVolumeFlux(law)
    raise ValueError(f"unknown volume flux '{name}'")
