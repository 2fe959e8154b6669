"""Closed-form limiting-coefficient solvers for invariant-domain constraints.

Each constraint computes, for a feasible state U and a candidate increment A,
the largest k in [0, 1] such that U + kA still satisfies the constraint.  A
ConstraintSet chains constraints sequentially (scaling A by each k) so every
bound holds simultaneously, then applies a safety factor mu to keep the
result strictly inside the admissible set.

All solvers are vectorized: U and A have shape (n, n_eq) and per-DOF bounds
are gathered through an optional integer index array ``dof``.
"""

from __future__ import annotations

import numpy as np

from .physics import Euler1D

#: slack below which a nominally feasible input is treated as infeasible
FEASIBILITY_TOL = 1e-9


class ConstraintInfeasibleError(RuntimeError):
    """The input state violates a constraint it is required to satisfy."""

    def __init__(self, constraint, worst, index=None):
        self.constraint = constraint
        self.worst = worst
        self.index = index
        msg = f"constraint '{constraint}' infeasible at input (worst slack {worst:.3e}"
        if index is not None:
            msg += f", dof {index}"
        super().__init__(msg + ")")


def _rows(u):
    u = np.asarray(u, dtype=float)
    squeeze = u.ndim == 1
    return (u[None, :] if squeeze else u), squeeze


def _gather(bound, dof, n):
    if bound is None:
        return None
    b = np.asarray(bound, dtype=float)
    if b.ndim == 0:
        return np.full(n, float(b))
    return b if dof is None else b[dof]


class Constraint:
    """One invariant-domain constraint with a closed-form k solver."""

    name = "constraint"

    def functional(self, u):
        """The constrained scalar functional of the state."""
        raise NotImplementedError

    def slack(self, u, dof=None):
        """Signed distance to the bound; nonnegative means satisfied."""
        raise NotImplementedError

    def satisfied(self, u, dof=None, tol=0.0):
        return self.slack(u, dof) >= -tol

    def solve(self, u, a, dof=None):
        raise NotImplementedError

    def _require_feasible(self, slack, scale=1.0):
        tol = FEASIBILITY_TOL * (1.0 + np.abs(scale))
        bad = slack < -tol
        if np.any(bad):
            idx = int(np.argmin(slack - (-tol)))
            raise ConstraintInfeasibleError(self.name, float(slack.min()), idx)


class ComponentBounds(Constraint):
    """m <= u[component] <= M (either bound may be absent)."""

    def __init__(self, component=0, lower=None, upper=None, name=None):
        self.component = component
        self.lower = lower
        self.upper = upper
        self.name = name or f"component[{component}] bounds"

    def functional(self, u):
        u, squeeze = _rows(u)
        val = u[:, self.component]
        return val[0] if squeeze else val

    def slack(self, u, dof=None):
        u, squeeze = _rows(u)
        val = u[:, self.component]
        s = np.full(val.shape, np.inf)
        m = _gather(self.lower, dof, len(val))
        M = _gather(self.upper, dof, len(val))
        if m is not None:
            s = np.minimum(s, val - m)
        if M is not None:
            s = np.minimum(s, M - val)
        return s[0] if squeeze else s

    def solve(self, u, a, dof=None):
        u, squeeze = _rows(u)
        a, _ = _rows(a)
        uc = u[:, self.component]
        ac = a[:, self.component]
        n = len(uc)
        k = np.ones(n)
        m = _gather(self.lower, dof, n)
        M = _gather(self.upper, dof, n)
        if m is not None:
            self._require_feasible(uc - m, scale=m)
            hit = uc + ac < m
            with np.errstate(all="ignore"):
                k = np.where(hit, (m - uc) / ac, k)
        if M is not None:
            self._require_feasible(M - uc, scale=M)
            hit = uc + ac > M
            with np.errstate(all="ignore"):
                k = np.where(hit, (M - uc) / ac, k)
        k = np.clip(k, 0.0, 1.0)
        return k[0] if squeeze else k


class _ChordConstraint(Constraint):
    """Shared chord solver: push f(U + kA) to the bound along the segment."""

    sign = +1.0  # +1: lower bound on concave f; -1: upper bound on convex f

    def __init__(self, func, bound, name):
        self.func = func
        self.bound = bound
        self.name = name

    def functional(self, u):
        u, squeeze = _rows(u)
        val = self.func(u)
        return val[0] if squeeze else val

    def slack(self, u, dof=None):
        u, squeeze = _rows(u)
        val = self.func(u)
        b = _gather(self.bound, dof, len(val))
        s = self.sign * (val - b)
        return s[0] if squeeze else s

    def solve(self, u, a, dof=None):
        u, squeeze = _rows(u)
        a, _ = _rows(a)
        f0 = self.func(u)
        f1 = self.func(u + a)
        b = _gather(self.bound, dof, len(f0))
        self._require_feasible(self.sign * (f0 - b), scale=b)
        viol = self.sign * (f1 - b) < 0.0
        denom = f0 - f1
        with np.errstate(all="ignore"):
            chord = np.clip((f0 - b) / denom, 0.0, 1.0)
        # degenerate chord (f0 == f1): k = 1 if the bound holds at U+A else 0
        k = np.where(viol, np.where(denom * self.sign > 0.0, chord, 0.0), 1.0)
        return k[0] if squeeze else k


class ConcaveLowerBound(_ChordConstraint):
    """f(u) >= m for concave f; k from the chord underestimate."""

    sign = +1.0


class ConvexUpperBound(_ChordConstraint):
    """f(u) <= M for convex f; k from the chord overestimate."""

    sign = -1.0


class EntropyInequality(ConvexUpperBound):
    """eta(u) <= m for a convex entropy with a per-DOF budget m."""

    def __init__(self, pair, bound, name=None):
        super().__init__(lambda u: pair.eta(u), bound, name or f"{pair.name} inequality")
        self.pair = pair


class SpecificEntropyMin(Constraint):
    """s(w(u)) >= m for the Euler law, w = (1/rho, v, E).

    theta is the chord coefficient of the concave s in w coordinates; the
    matching k along the straight segment in conserved variables is
    k = theta rho / (rho + (1 - theta) A_rho).  Requires positive densities
    at both segment ends (run the positivity constraints first).
    """

    def __init__(self, law, bound, name="specific entropy min"):
        self.law = law
        self.bound = bound
        self.name = name

    def functional(self, u):
        u, squeeze = _rows(u)
        val = self.law.specific_entropy_of_w(self.law.w_variables(u))
        return val[0] if squeeze else val

    def slack(self, u, dof=None):
        u, squeeze = _rows(u)
        val = self.law.specific_entropy_of_w(self.law.w_variables(u))
        b = _gather(self.bound, dof, len(val))
        s = val - b
        return s[0] if squeeze else s

    def solve(self, u, a, dof=None):
        u, squeeze = _rows(u)
        a, _ = _rows(a)
        law = self.law
        s0 = law.specific_entropy_of_w(law.w_variables(u))
        with np.errstate(invalid="ignore", divide="ignore"):
            s1 = law.specific_entropy_of_w(law.w_variables(u + a))
        # an inadmissible far end certifies nothing: treat as -inf (full limiting)
        s1 = np.where(np.isfinite(s1), s1, -np.inf)
        m = _gather(self.bound, dof, len(s0))
        self._require_feasible(s0 - m, scale=m)
        viol = s1 < m
        denom = s0 - s1
        with np.errstate(all="ignore"):
            chord = np.clip((s0 - m) / denom, 0.0, 1.0)
        theta = np.where(viol, np.where(denom > 0.0, chord, 0.0), 1.0)
        rho0 = u[:, 0]
        k = theta * rho0 / (rho0 + (1.0 - theta) * a[:, 0])
        k = np.clip(k, 0.0, 1.0)
        return k[0] if squeeze else k


class ConstraintSet:
    """Ordered constraints solved sequentially, with a final safety factor."""

    def __init__(self, constraints, mu=1.0 - 1e-7):
        if not 0.0 < mu <= 1.0:
            raise ValueError("mu must lie in (0, 1]")
        self.constraints = list(constraints)
        self.mu = float(mu)

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def solve(self, u, a, dof=None):
        u, squeeze = _rows(u)
        a, _ = _rows(a)
        k = np.ones(u.shape[0])
        a_work = np.array(a, dtype=float, copy=True)
        for c in self.constraints:
            kc = np.asarray(c.solve(u, a_work, dof), dtype=float)
            a_work *= kc[:, None]
            k *= kc
        k *= self.mu
        return k[0] if squeeze else k

    def satisfied(self, u, dof=None, tol=0.0):
        u, squeeze = _rows(u)
        ok = np.ones(u.shape[0], dtype=bool)
        for c in self.constraints:
            ok &= c.satisfied(u, dof, tol)
        return ok[0] if squeeze else ok

    def check_feasible(self, u, dof=None, where=None):
        for c in self.constraints:
            u2, _ = _rows(u)
            slack = c.slack(u2, dof)
            c._require_feasible(np.atleast_1d(slack))

    def functional_ranges(self, u):
        """(min, max) of each constrained functional; diagnostics only."""
        out = {}
        for c in self.constraints:
            val = np.atleast_1d(c.functional(u))
            out[c.name] = (float(val.min()), float(val.max()))
        return out


# -- ready-made chains ------------------------------------------------------

def euler_positivity_constraints(law, rho_min=1e-8, energy_min=1e-8, entropy_min=None,
                                 mu=1.0 - 1e-7):
    """Density, internal-energy and (optional) entropy-minimum chain.

    The order matters: positive density makes the internal energy concave,
    and both make the specific entropy well defined.
    """
    chain = [
        ComponentBounds(0, lower=rho_min, name="rho min"),
        ConcaveLowerBound(law.internal_energy_density, energy_min, name="rho e min"),
    ]
    if entropy_min is not None:
        chain.append(SpecificEntropyMin(law, entropy_min))
    return ConstraintSet(chain, mu=mu)


def maximum_principle_constraints(lower, upper, mu=1.0 - 1e-7, extra=()):
    chain = [ComponentBounds(0, lower=lower, upper=upper, name="maximum principle")]
    chain.extend(extra)
    return ConstraintSet(chain, mu=mu)


# -- single-state convenience wrappers --------------------------------------

def limit_component_bounds(u_lo, a, component=0, m=None, M=None):
    return ComponentBounds(component, lower=m, upper=M).solve(u_lo, a)


def limit_concave_lower(func, u_lo, a, m):
    return ConcaveLowerBound(func, m, name="concave lower bound").solve(u_lo, a)


def limit_convex_upper(func, u_lo, a, M):
    return ConvexUpperBound(func, M, name="convex upper bound").solve(u_lo, a)


def limit_specific_entropy(u_lo, a, m, law=None):
    return SpecificEntropyMin(law or Euler1D(), m).solve(u_lo, a)


def limit_entropy_inequality(u_lo, a, pair, m):
    return EntropyInequality(pair, m).solve(u_lo, a)


def solve_constraint_set(cset, u_lo, a, dof=None):
    return cset.solve(u_lo, a, dof)
