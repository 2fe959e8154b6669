"""Exact reference solutions: the 1D Euler Riemann problem, linear
transport, and scalar Burgers Riemann solutions."""

from __future__ import annotations

import numpy as np


class VacuumError(ValueError):
    """The Riemann data generate vacuum; the exact solver does not cover it."""


class RiemannSolution:
    """Exact self-similar solution u(x/t) of a 1D Euler Riemann problem."""

    def __init__(self, law, left, right, p_star, u_star):
        self.law = law
        self.left = left  # (rho, v, p)
        self.right = right
        self.p_star = float(p_star)
        self.u_star = float(u_star)
        self.left_wave = "shock" if p_star > left[2] else "rarefaction"
        self.right_wave = "shock" if p_star > right[2] else "rarefaction"

    def sample_primitive(self, xi):
        """Primitive (rho, v, p) at similarity coordinates xi = x/t."""
        xi = np.asarray(xi, dtype=float)
        g = self.law.gamma
        gm, gp = g - 1.0, g + 1.0
        rho = np.empty_like(xi)
        v = np.empty_like(xi)
        p = np.empty_like(xi)

        for side in ("left", "right"):
            if side == "left":
                rho_k, v_k, p_k = self.left
                sgn = 1.0
                mask_side = xi <= self.u_star
            else:
                rho_k, v_k, p_k = self.right
                sgn = -1.0
                mask_side = xi > self.u_star
            if not np.any(mask_side):
                continue
            a_k = np.sqrt(g * p_k / rho_k)
            pr = self.p_star / p_k
            if pr > 1.0:  # shock
                s = v_k - sgn * a_k * np.sqrt(0.5 * gp / g * pr + 0.5 * gm / g)
                rho_star = rho_k * (pr + gm / gp) / (gm / gp * pr + 1.0)
                pre = sgn * (xi - s) < 0.0
                rho_s = np.where(pre, rho_k, rho_star)
                v_s = np.where(pre, v_k, self.u_star)
                p_s = np.where(pre, p_k, self.p_star)
            else:  # rarefaction
                a_star = a_k * pr ** (0.5 * gm / g)
                head = v_k - sgn * a_k
                tail = self.u_star - sgn * a_star
                rho_star = rho_k * pr ** (1.0 / g)
                # fan profile
                af = (2.0 / gp) * (a_k + sgn * 0.5 * gm * (v_k - xi)) + 0.0 * xi
                vf = (2.0 / gp) * (sgn * a_k + 0.5 * gm * v_k + xi)
                rho_f = rho_k * (af / a_k) ** (2.0 / gm)
                p_f = p_k * (af / a_k) ** (2.0 * g / gm)
                pre = sgn * (xi - head) < 0.0
                post = sgn * (xi - tail) > 0.0
                rho_s = np.where(pre, rho_k, np.where(post, rho_star, rho_f))
                v_s = np.where(pre, v_k, np.where(post, self.u_star, vf))
                p_s = np.where(pre, p_k, np.where(post, self.p_star, p_f))
            rho[mask_side] = rho_s[mask_side]
            v[mask_side] = v_s[mask_side]
            p[mask_side] = p_s[mask_side]
        return rho, v, p

    def sample(self, xi):
        """Conservative states at xi = x/t."""
        rho, v, p = self.sample_primitive(xi)
        return self.law.from_primitive(rho, v, p)

    def sample_at(self, x, t, x0=0.0):
        if t <= 0.0:
            raise ValueError("sampling requires t > 0")
        return self.sample((np.asarray(x, dtype=float) - x0) / t)


def _pressure_function(p, rho_k, p_k, a_k, gamma):
    """Toro's f_K(p) and its derivative."""
    gm, gp = gamma - 1.0, gamma + 1.0
    if p > p_k:  # shock branch
        A = 2.0 / (gp * rho_k)
        B = gm / gp * p_k
        root = np.sqrt(A / (p + B))
        f = (p - p_k) * root
        df = root * (1.0 - 0.5 * (p - p_k) / (p + B))
    else:  # rarefaction branch
        pr = p / p_k
        f = 2.0 * a_k / gm * (pr ** (0.5 * gm / gamma) - 1.0)
        df = pr ** (-0.5 * gp / gamma) / (rho_k * a_k)
    return f, df


def exact_riemann_euler(law, ul, ur):
    """Exact Riemann solution for 1D Euler from conservative left/right data.

    The star pressure solves f_L(p) + f_R(p) + (vR - vL) = 0 by Newton from
    the two-rarefaction guess, falling back to bisection if Newton strays.
    """
    ul = np.asarray(ul, dtype=float)
    ur = np.asarray(ur, dtype=float)
    law.check_admissible(ul, "left state")
    law.check_admissible(ur, "right state")
    g = law.gamma
    gm = g - 1.0
    rho_l, v_l, p_l = ul[0], law.velocity(ul)[()], law.pressure(ul)[()]
    rho_r, v_r, p_r = ur[0], law.velocity(ur)[()], law.pressure(ur)[()]
    a_l = np.sqrt(g * p_l / rho_l)
    a_r = np.sqrt(g * p_r / rho_r)
    dv = v_r - v_l

    if 2.0 * (a_l + a_r) / gm <= dv:
        raise VacuumError("pressure positivity condition violated (vacuum generation)")

    def phi(p):
        fl, dfl = _pressure_function(p, rho_l, p_l, a_l, g)
        fr, dfr = _pressure_function(p, rho_r, p_r, a_r, g)
        return fl + fr + dv, dfl + dfr

    # two-rarefaction initial guess
    z = 0.5 * gm / g
    p = ((a_l + a_r - 0.5 * gm * dv) / (a_l / p_l**z + a_r / p_r**z)) ** (1.0 / z)
    p = max(p, 1e-14)
    ok = False
    for _ in range(100):
        f, df = phi(p)
        step = f / df
        p_new = p - step
        if p_new <= 0.0:
            break
        if abs(p_new - p) <= 1e-12 * p_new:
            p = p_new
            ok = True
            break
        p = p_new
    if not ok:
        lo, hi = 1e-10, 10.0 * max(p_l, p_r)
        flo = phi(lo)[0]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = phi(mid)[0]
            if flo * fm <= 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
            if hi - lo <= 1e-14 * hi:
                break
        p = 0.5 * (lo + hi)

    u_star = 0.5 * (v_l + v_r) + 0.5 * (
        _pressure_function(p, rho_r, p_r, a_r, g)[0]
        - _pressure_function(p, rho_l, p_l, a_l, g)[0]
    )
    return RiemannSolution(law, (rho_l, v_l, p_l), (rho_r, v_r, p_r), p, u_star)


def exact_linear_advection(u0, x, t, domain=(0.0, 1.0), speed=1.0):
    """Exact periodic transport: u(x, t) = u0((x - speed t) mod |domain|)."""
    a, b = domain
    length = b - a
    x = np.asarray(x, dtype=float)
    return u0(a + np.mod(x - speed * t - a, length))


def burgers_riemann_scalar(ul, ur, xi):
    """Entropy solution of the 1D Burgers Riemann problem at xi = x/t."""
    xi = np.asarray(xi, dtype=float)
    if ul > ur:  # shock at speed (ul + ur)/2
        s = 0.5 * (ul + ur)
        return np.where(xi < s, ul, ur)
    # rarefaction fan
    return np.clip(xi, ul, ur)
