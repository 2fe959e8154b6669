"""Conservation laws, admissible sets and entropy machinery.

States are numpy arrays with a trailing component axis of length ``n_eq``
(scalar laws use ``n_eq = 1``).  All operations are pure and broadcast over
leading axes.
"""

from __future__ import annotations

import numpy as np


class AdmissibilityError(ValueError):
    """Raised when an operation receives a state outside the admissible set."""

    def __init__(self, predicate, where=None):
        self.predicate = predicate
        self.where = where
        msg = f"inadmissible state: {predicate}"
        if where is not None:
            msg += f" at {where}"
        super().__init__(msg)


class UnsupportedLawError(TypeError):
    """Raised when an operation does not apply to the given law."""


def _as_state(u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u[None]
    return u


class ConservationLaw:
    """Base class: fluxes, wave speeds and the admissible set of a law."""

    n_eq = 1
    space_dim = 1
    name = "law"

    def flux(self, u, direction=0):
        raise NotImplementedError

    def max_wave_speed(self, u):
        raise NotImplementedError

    def violated_predicate(self, u):
        """Return a description of the violated admissibility predicate, or None."""
        u = _as_state(u)
        if not np.all(np.isfinite(u)):
            return "state is not finite"
        return None

    def admissible(self, u):
        """Pointwise admissibility as a boolean array over leading axes."""
        u = _as_state(u)
        return np.all(np.isfinite(u), axis=-1)

    def check_admissible(self, u, where=None):
        bad = self.violated_predicate(u)
        if bad is not None:
            raise AdmissibilityError(bad, where)

    def flux_dot_normal(self, u, normal):
        """f(u).n for a unit (or metric-scaled) normal vector."""
        normal = np.atleast_1d(np.asarray(normal, dtype=float))
        out = 0.0
        for d in range(self.space_dim):
            if normal.shape[-1] > d:
                nd = normal[..., d] if normal.ndim > 1 else normal[d]
                if np.any(nd != 0.0):
                    out = out + np.asarray(nd)[..., None] * self.flux(u, d)
        return out + np.zeros_like(_as_state(u))


class ScalarLaw(ConservationLaw):
    """Scalar conservation law with a global Lipschitz bound on the flux."""

    n_eq = 1

    def __init__(self, lipschitz):
        self.lipschitz = float(lipschitz)

    def flux_scalar(self, w, direction):
        raise NotImplementedError

    def flux(self, u, direction=0):
        u = _as_state(u)
        self.check_admissible(u)
        return self.flux_scalar(u[..., 0], direction)[..., None]

    def max_wave_speed(self, u):
        u = _as_state(u)
        self.check_admissible(u)
        return np.full(u.shape[:-1], self.lipschitz)

    def flux_range(self, a, b, direction):
        """Exact (min, max) of the directional flux over [min(a,b), max(a,b)].

        Used by the Godunov flux.  The base implementation samples densely;
        subclasses override with closed forms.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        t = np.linspace(0.0, 1.0, 1001)
        samples = lo[..., None] + t * (hi - lo)[..., None]
        f = self.flux_scalar(samples, direction)
        return f.min(axis=-1), f.max(axis=-1)

    def flux_argextreme(self, a, b, direction):
        """States attaining (min, max) of the flux over [min(a,b), max(a,b)].

        Default: dense sampling; subclasses provide closed forms.  Used to
        freeze the Godunov upwind branch in implicit solves.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        t = np.linspace(0.0, 1.0, 1001)
        samples = lo[..., None] + t * (hi - lo)[..., None]
        f = self.flux_scalar(samples, direction)
        idx_min = np.argmin(f, axis=-1)
        idx_max = np.argmax(f, axis=-1)
        return (np.take_along_axis(samples, idx_min[..., None], -1)[..., 0],
                np.take_along_axis(samples, idx_max[..., None], -1)[..., 0])

    def square_entropy_flux(self, w, direction):
        """Entropy flux q(u) = int u f'(u) du for eta = u^2/2."""
        raise NotImplementedError


class LinearAdvection1D(ScalarLaw):
    """u_t + (a u)_x = 0."""

    space_dim = 1
    name = "linear1d"

    def __init__(self, speed=1.0):
        super().__init__(lipschitz=abs(speed))
        self.speed = float(speed)

    def flux_scalar(self, w, direction):
        return self.speed * w

    def flux_range(self, a, b, direction):
        fa = self.speed * np.asarray(a, dtype=float)
        fb = self.speed * np.asarray(b, dtype=float)
        return np.minimum(fa, fb), np.maximum(fa, fb)

    def flux_argextreme(self, a, b, direction):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        fa, fb = self.speed * a, self.speed * b
        umin = np.where(fa <= fb, a, b)
        umax = np.where(fa <= fb, b, a)
        return umin, umax

    def square_entropy_flux(self, w, direction):
        return 0.5 * self.speed * w**2


class Burgers1D(ScalarLaw):
    """u_t + (u^2/2)_x = 0.  The Lipschitz bound covers |u| <= u_max."""

    space_dim = 1
    name = "burgers1d"

    def __init__(self, u_max=1.0):
        super().__init__(lipschitz=abs(u_max))

    def flux_scalar(self, w, direction):
        return 0.5 * w**2

    def flux_range(self, a, b, direction):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        fa, fb = 0.5 * a**2, 0.5 * b**2
        fmax = np.maximum(fa, fb)
        # u = 0 is the only interior critical point
        straddles = np.minimum(a, b) * np.maximum(a, b) < 0.0
        fmin = np.where(straddles, 0.0, np.minimum(fa, fb))
        return fmin, fmax

    def flux_argextreme(self, a, b, direction):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        fa, fb = 0.5 * a**2, 0.5 * b**2
        umax = np.where(fa >= fb, a, b)
        straddles = np.minimum(a, b) * np.maximum(a, b) < 0.0
        umin = np.where(straddles, 0.0, np.where(fa <= fb, a, b))
        return umin, umax

    def square_entropy_flux(self, w, direction):
        return w**3 / 3.0


class Burgers2D(ScalarLaw):
    """u_t + (u^2/2)_x + (u^2/2)_y = 0, Lipschitz bound sqrt(2)*u_max."""

    space_dim = 2
    name = "burgers2d"

    def __init__(self, u_max=1.0):
        super().__init__(lipschitz=np.sqrt(2.0) * abs(u_max))

    def flux_scalar(self, w, direction):
        return 0.5 * w**2

    def flux_range(self, a, b, direction):
        return Burgers1D.flux_range(self, a, b, direction)

    def flux_argextreme(self, a, b, direction):
        return Burgers1D.flux_argextreme(self, a, b, direction)

    def square_entropy_flux(self, w, direction):
        return w**3 / 3.0


class Kpp2D(ScalarLaw):
    """Rotating-wave law with nonconvex flux (sin u, cos u); |f'| = 1."""

    space_dim = 2
    name = "kpp2d"

    def __init__(self):
        super().__init__(lipschitz=1.0)

    def flux_scalar(self, w, direction):
        return np.sin(w) if direction == 0 else np.cos(w)

    def flux_range(self, a, b, direction):
        # Exact extrema of sin/cos over an interval: endpoints plus any
        # maximizing/minimizing critical point that the interval contains.
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        f = np.sin if direction == 0 else np.cos
        flo, fhi = f(lo), f(hi)
        fmin = np.minimum(flo, fhi)
        fmax = np.maximum(flo, fhi)
        # phase of the first maximum (sin: pi/2, cos: 0) and minimum
        top = np.pi / 2.0 if direction == 0 else 0.0
        bot = top + np.pi
        has_top = np.floor((hi - top) / (2 * np.pi)) >= np.ceil((lo - top) / (2 * np.pi))
        has_bot = np.floor((hi - bot) / (2 * np.pi)) >= np.ceil((lo - bot) / (2 * np.pi))
        fmax = np.where(has_top, 1.0, fmax)
        fmin = np.where(has_bot, -1.0, fmin)
        return fmin, fmax

    def flux_argextreme(self, a, b, direction):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        f = np.sin if direction == 0 else np.cos
        fa, fb = f(a), f(b)
        top = np.pi / 2.0 if direction == 0 else 0.0
        bot = top + np.pi
        # first critical point of each kind inside [lo, hi], if any
        top_in = top + 2 * np.pi * np.ceil((lo - top) / (2 * np.pi))
        bot_in = bot + 2 * np.pi * np.ceil((lo - bot) / (2 * np.pi))
        umax = np.where(top_in <= hi, top_in, np.where(fa >= fb, a, b))
        umin = np.where(bot_in <= hi, bot_in, np.where(fa <= fb, a, b))
        return umin, umax

    def square_entropy_flux(self, w, direction):
        if direction == 0:  # int u cos u du
            return w * np.sin(w) + np.cos(w)
        return w * np.cos(w) - np.sin(w)  # int -u sin u du


class Euler1D(ConservationLaw):
    """1D compressible Euler equations with a polytropic ideal gas law.

    Conserved variables u = (rho, rho v, rho E); p = (gamma - 1) rho e with
    e = E - v^2/2 the specific internal energy.  Admissible iff rho > 0 and
    e > 0.
    """

    n_eq = 3
    space_dim = 1
    name = "euler1d"

    def __init__(self, gamma=1.4):
        if gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        self.gamma = float(gamma)

    # -- primitive quantities -------------------------------------------
    def velocity(self, u):
        u = _as_state(u)
        return u[..., 1] / u[..., 0]

    def internal_energy(self, u):
        """Specific internal energy e = E - v^2/2."""
        u = _as_state(u)
        return u[..., 2] / u[..., 0] - 0.5 * self.velocity(u) ** 2

    def internal_energy_density(self, u):
        """rho e = rho E - (rho v)^2 / (2 rho); concave on {rho > 0}."""
        u = _as_state(u)
        return u[..., 2] - 0.5 * u[..., 1] ** 2 / u[..., 0]

    def pressure(self, u):
        return (self.gamma - 1.0) * self.internal_energy_density(u)

    def sound_speed(self, u):
        u = _as_state(u)
        return np.sqrt(self.gamma * self.pressure(u) / u[..., 0])

    def from_primitive(self, rho, v, p):
        rho = np.asarray(rho, dtype=float)
        v = np.asarray(v, dtype=float)
        p = np.asarray(p, dtype=float)
        E = p / (self.gamma - 1.0) + 0.5 * rho * v**2
        return np.stack(np.broadcast_arrays(rho, rho * v, E), axis=-1)

    # -- law interface ---------------------------------------------------
    def violated_predicate(self, u):
        u = _as_state(u)
        if not np.all(np.isfinite(u)):
            return "state is not finite"
        if np.any(u[..., 0] <= 0.0):
            return "rho <= 0"
        if np.any(self.internal_energy(u) <= 0.0):
            return "internal energy e <= 0"
        return None

    def admissible(self, u):
        u = _as_state(u)
        finite = np.all(np.isfinite(u), axis=-1)
        with np.errstate(all="ignore"):
            ok = (u[..., 0] > 0.0) & (self.internal_energy_density(u) > 0.0)
        return finite & ok

    def flux(self, u, direction=0):
        u = _as_state(u)
        self.check_admissible(u)
        v = self.velocity(u)
        p = self.pressure(u)
        return np.stack([u[..., 1], u[..., 1] * v + p, (u[..., 2] + p) * v], axis=-1)

    def max_wave_speed(self, u):
        u = _as_state(u)
        self.check_admissible(u)
        return np.abs(self.velocity(u)) + self.sound_speed(u)

    # -- entropy machinery -----------------------------------------------
    def specific_entropy(self, u):
        """s = ln e - (gamma - 1) ln rho, up to physically irrelevant constants."""
        u = _as_state(u)
        self.check_admissible(u)
        return np.log(self.internal_energy(u)) - (self.gamma - 1.0) * np.log(u[..., 0])

    def specific_entropy_of_w(self, w):
        """Entropy as a function of w = (1/rho, v, E); concave in w."""
        w = np.asarray(w, dtype=float)
        tau, v, E = w[..., 0], w[..., 1], w[..., 2]
        e = E - 0.5 * v**2
        return np.log(e) + (self.gamma - 1.0) * np.log(tau)

    def w_variables(self, u):
        u = _as_state(u)
        return np.stack(
            [1.0 / u[..., 0], self.velocity(u), u[..., 2] / u[..., 0]], axis=-1
        )

    def entropy_variables(self, u):
        """Gradient of eta = -rho s~ / (gamma - 1), s~ = ln(p rho^-gamma)."""
        u = _as_state(u)
        rho = u[..., 0]
        v = self.velocity(u)
        p = self.pressure(u)
        s = np.log(p) - self.gamma * np.log(rho)
        g = self.gamma
        return np.stack(
            [(g - s) / (g - 1.0) - 0.5 * rho * v**2 / p, rho * v / p, -rho / p],
            axis=-1,
        )

    def flux_potential(self, u, direction=0):
        """psi = v(u) . f(u) - q(u) = rho v for the eta above."""
        u = _as_state(u)
        return u[..., 1]

    def floor_state(self, u, floor=1e-10):
        """Positivity-floored proxy for residual evaluation at bad iterates.

        Returns the proxied states and whether any flooring occurred; keeps
        momentum and floors rho and e at ``floor``.
        """
        u = _as_state(u).copy()
        rho = np.maximum(u[..., 0], floor)
        flagged = np.any(u[..., 0] < floor)
        m = u[..., 1]
        kinetic = 0.5 * m**2 / rho**2
        e = u[..., 2] / rho - kinetic
        # keep the floor above the round-off of E = rho (e + v^2/2)
        e_floor = np.maximum(floor, 16.0 * np.finfo(float).eps * kinetic)
        flagged = flagged or np.any(e < e_floor)
        e = np.maximum(e, e_floor)
        u[..., 0] = rho
        u[..., 2] = rho * (e + kinetic)
        return u, bool(flagged)


class EntropyPair:
    """Entropy/entropy-flux pair (eta, q) compatible with a law."""

    def __init__(self, law, eta, q, name="entropy"):
        self.law = law
        self._eta = eta
        self._q = q
        self.name = name

    def eta(self, u):
        return self._eta(_as_state(u))

    def q(self, u, direction=0):
        return self._q(_as_state(u), direction)


def kruzhkov_entropy_pair(law, K=0.0):
    """eta(u) = |u - K|, q(u) = sgn(u - K) (f(u) - f(K)) for scalar laws."""
    if not isinstance(law, ScalarLaw):
        raise UnsupportedLawError("Kruzhkov entropies apply to scalar laws only")
    K = float(K)

    def eta(u):
        return np.abs(u[..., 0] - K)

    def q(u, direction):
        w = u[..., 0]
        fK = law.flux_scalar(np.asarray(K), direction)
        return np.sign(w - K) * (law.flux_scalar(w, direction) - fK)

    return EntropyPair(law, eta, q, name=f"kruzhkov(K={K:g})")


def square_entropy_pair(law):
    """eta(u) = u^2/2 with the matching entropy flux of the scalar law."""
    if not isinstance(law, ScalarLaw):
        raise UnsupportedLawError("the square entropy applies to scalar laws only")

    def eta(u):
        return 0.5 * u[..., 0] ** 2

    def q(u, direction):
        return law.square_entropy_flux(u[..., 0], direction)

    return EntropyPair(law, eta, q, name="square")


def euler_entropy_pair(law):
    """Physical pair eta = -rho s~/(gamma-1), q = eta v, s~ = ln(p rho^-gamma)."""
    if not isinstance(law, Euler1D):
        raise UnsupportedLawError("physical entropy pair requires the Euler law")
    g = law.gamma

    def eta(u):
        s = np.log(law.pressure(u)) - g * np.log(u[..., 0])
        return -u[..., 0] * s / (g - 1.0)

    def q(u, direction):
        return eta(u) * law.velocity(u)

    return EntropyPair(law, eta, q, name="euler")


# -- spec-level convenience operations ------------------------------------

def flux_eval(law, u, direction=0):
    """Directional flux at an admissible state."""
    return law.flux(u, direction)


def max_wave_speed(law, u):
    return law.max_wave_speed(u)


def admissibility_check(law, u):
    """Total function: (ok, violated predicate or None)."""
    bad = law.violated_predicate(u)
    return bad is None, bad


def specific_entropy(law, u):
    return law.specific_entropy(u)
