"""Resonant normal form of a dissipative nearly-integrable field.

The construction alternates two near-identity changes of variables per order:

* a conservative one, generated by psi(y~, x, t) = sum_n eps^n psi_n0,
  with x~ = x + psi_y, y = y~ + psi_x, u = u~ + psi_t;
* a dissipative one, X = x~ + alpha, Y = y~ + beta, U = u~ + gamma, whose
  grades carry at least one power of mu.

Instead of tracking the hand-derived known functions of every order, the
transformed field is recomputed from scratch with the current transformation
(pushforward through series composition and Neumann inversion).  At total
order n all order-n unknowns are zero in that computation, so the order-n
grades of the field are exactly the known right-hand sides of the homological
equations; solving them and recomputing leaves only average, resonant and
high-Fourier terms up to order n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .series import (
    FourierTaylorSeries,
    GradedSeries,
    ResonanceStructure,
    compose_shift,
    project,
    solve_homological,
    weighted_norm,
)
from .system import DissipativeSystem, DriftFunction, ExtendedSystem, field_series

MAX_ORDER = 8
DRIFT_FRAMES = ("old", "new")
ALPHA_ARGUMENTS = ("intermediate", "new")


class NormalizationError(RuntimeError):
    """The construction was refused (order out of range, threshold violation)."""


# ---------------------------------------------------------------------------
# vector helpers


@dataclass
class Vec:
    """Graded components along x (l), y (l) and u."""

    x: list
    y: list
    u: GradedSeries

    @classmethod
    def zeros(cls, shape, ell, order):
        z = GradedSeries(shape, order)
        return cls([z] * ell, [z] * ell, z)

    def comps(self):
        return self.x + self.y + [self.u]

    @classmethod
    def from_comps(cls, comps, ell):
        return cls(list(comps[:ell]), list(comps[ell:2 * ell]), comps[2 * ell])

    def map(self, fn) -> "Vec":
        return Vec([fn(c) for c in self.x], [fn(c) for c in self.y], fn(self.u))

    def __add__(self, other):
        return Vec([a + b for a, b in zip(self.x, other.x)], [a + b for a, b in zip(self.y, other.y)], self.u + other.u)

    def __sub__(self, other):
        return Vec([a - b for a, b in zip(self.x, other.x)], [a - b for a, b in zip(self.y, other.y)], self.u - other.u)

    def __neg__(self):
        return self.map(lambda c: -c)

    def truncate(self, order):
        return self.map(lambda c: c.truncate(order))


def _jvp(A: Vec, v: Vec) -> Vec:
    """(DA) v for a u-independent vector function A."""
    ell = len(A.x)

    def d(comp):
        out = GradedSeries(comp.shape, comp.order)
        for m in range(ell):
            if not v.x[m].is_zero():
                out = out + comp.diff("x", m) * v.x[m]
            if not v.y[m].is_zero():
                out = out + comp.diff("y", m) * v.y[m]
        return out

    return A.map(d)


def _compose(V: Vec, shift: Vec, order: int) -> Vec:
    return V.map(lambda c: compose_shift(c, shift.x, shift.y, order))


def _neumann_solve(J: Vec, rhs: Vec, order: int) -> Vec:
    """Solve w + (DJ) w = rhs by fixed-point iteration (DJ has no (0,0) grade)."""
    w = rhs
    for _ in range(order):
        w = (rhs - _jvp(J, w)).truncate(order)
    return w


def _min_order(comps) -> int:
    return min((sum(g) for c in comps for g in c.grades), default=10 ** 6)


def _fixed_point(fn, start: Vec, order: int) -> Vec:
    v = start
    for _ in range(order + 1):
        v = fn(v).truncate(order)
    return v


# ---------------------------------------------------------------------------
# results


@dataclass
class ConservativeTransformation:
    psi: list  # psi_n0 for n = 1..N, as FourierTaylorSeries
    gamma_inverse: Vec  # z = z~ + Gamma(z~)
    forward: Vec  # z~ = z + Theta(z)

    def generating_function(self, shape, order) -> GradedSeries:
        return GradedSeries(shape, order, {(n + 1, 0): p for n, p in enumerate(self.psi)})


@dataclass
class DissipativeTransformation:
    alpha: list
    beta: list
    gamma: GradedSeries
    delta_inverse: Vec  # z~ = Z + Delta(Z)
    arguments: str = "intermediate"

    def as_vec(self) -> Vec:
        return Vec(list(self.alpha), list(self.beta), self.gamma)


@dataclass
class RemainderNorms:
    G_tail: float
    G_high: float
    F_tail: float
    F_high: float
    H_tail: float
    H_high: float


@dataclass
class NormalFormResult:
    """Normal form of order N and the transformation that produces it."""

    system: DissipativeSystem
    order: int
    u_enabled: bool
    resonance: ResonanceStructure
    field: Vec  # transformed field, grades up to order + 1
    omega_d: list
    p_X: list
    p_Y: list
    p_t: GradedSeries
    s: list
    drift: DriftFunction
    sigma: GradedSeries
    conservative: ConservativeTransformation
    dissipative: DissipativeTransformation
    backward: Vec  # z = Z + B(Z), carried to order N + 1
    forward: Vec  # Z = z + Phi(z), carried to order N + 1
    remainder_norms: RemainderNorms | None = None
    log: list = field(default_factory=list)

    @property
    def shape(self):
        return self.system.shape

    @property
    def ell(self):
        return self.system.ell

    # -- pieces of the normalized field --------------------------------------
    def normal_part(self) -> Vec:
        """Average and resonant (<= K) part of the field through order N."""
        res = self.resonance

        def keep(c):
            c = c.truncate(self.order)
            return c.project("average", res) + c.project("resonant", res)

        return self.field.map(keep)

    def nonresonant_residual(self) -> Vec:
        return self.field.map(lambda c: c.truncate(self.order).project("nonresonant", self.resonance))

    def eta(self) -> list:
        return self.drift.components

    def psi(self, n: int) -> FourierTaylorSeries:
        return self.conservative.psi[n - 1]

    def alpha(self, i: int, j: int, m: int = 0) -> FourierTaylorSeries:
        return self.dissipative.alpha[m][(i, j)]

    def beta(self, i: int, j: int, m: int = 0) -> FourierTaylorSeries:
        return self.dissipative.beta[m][(i, j)]

    def gamma(self, i: int, j: int) -> FourierTaylorSeries:
        return self.dissipative.gamma[(i, j)]

    # -- evaluation ----------------------------------------------------------
    def transform_state(self, state, eps: float, mu: float, direction: str = "forward"):
        """Map (y, x, u, t) to (Y, X, U, t) or back with the truncated series.

        With l = 1 the entries may be scalars or equally shaped arrays.
        """
        y, x, u, t = (np.asarray(v, dtype=float) for v in state)
        vec = self.forward if direction == "forward" else self.backward
        if direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")
        ell = self.ell
        dx = [c.evaluate(y, x, t, eps, mu) for c in vec.x]
        dy = [c.evaluate(y, x, t, eps, mu) for c in vec.y]
        du = vec.u.evaluate(y, x, t, eps, mu)
        if ell == 1:
            return y + dy[0], x + dx[0], u + du, t
        return y + np.stack(dy, -1), x + np.stack(dx, -1), u + du, t

    def eta_old(self) -> DriftFunction:
        """Drift written in the original variables (y, x, t)."""
        if self.drift.variables == "old":
            return self.drift
        order = self.order - 1
        comps = [compose_shift(c.truncate(order), self.forward.x, self.forward.y, order)
                 for c in self.drift.components]
        return DriftFunction(comps, variables="old")

    def eta_new(self) -> DriftFunction:
        """Drift written in the normalized variables (Y, X, t)."""
        if self.drift.variables == "new":
            return self.drift
        order = self.order - 1
        comps = [compose_shift(c.truncate(order), self.backward.x, self.backward.y, order)
                 for c in self.drift.components]
        return DriftFunction(comps, variables="new")

    def dump(self) -> str:
        """Plain-text artifact with every grade of the normal form and transformation."""
        blocks = [f"# normal form of {self.system.name}, order {self.order}"]

        def add(title, g):
            blocks.append(f"## {title}")
            blocks.append(g.dump() if not g.is_zero() else "(empty)")

        ell = self.ell
        for m in range(ell):
            sfx = f"[{m}]" if ell > 1 else ""
            add(f"Omega_d{sfx}", self.omega_d[m])
            add(f"p_X{sfx}", self.p_X[m])
            add(f"p_Y{sfx}", self.p_Y[m])
            add(f"s{sfx}", self.s[m])
            add(f"eta{sfx}", self.drift.components[m])
            add(f"alpha{sfx}", self.dissipative.alpha[m])
            add(f"beta{sfx}", self.dissipative.beta[m])
        add("p_t", self.p_t)
        add("sigma", self.sigma)
        add("gamma", self.dissipative.gamma)
        add("psi", self.conservative.generating_function(self.shape, self.order))
        return "\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# the construction


class _Builder:
    def __init__(self, sys: DissipativeSystem, order: int, alpha_arguments: str):
        self.sys = sys
        self.shape = sys.shape
        self.ell = sys.ell
        self.N = order
        self.res = sys.resonance
        self.alpha_arguments = alpha_arguments
        self.drift_frame = "old"
        top = order + 1
        self.top = top
        self.psi: list = []
        zero = GradedSeries(self.shape, top)
        self.A = Vec([zero] * self.ell, [zero] * self.ell, zero)
        self.eta = [zero] * self.ell
        self.sigma = zero
        xd, yd, ud = field_series(sys, top)
        self.V = Vec(xd, yd, ud)
        self.log = []

    # conservative pushforward ------------------------------------------------
    def psi_graded(self, order):
        return GradedSeries(self.shape, order, {(n + 1, 0): p for n, p in enumerate(self.psi)})

    def gamma_inverse(self, order) -> Vec:
        psi = self.psi_graded(order)
        ell = self.ell
        psi_y = [psi.diff("y", m) for m in range(ell)]
        psi_x = [psi.diff("x", m) for m in range(ell)]
        psi_t = psi.diff("t")
        zero = GradedSeries(self.shape, order)
        if psi.is_zero():
            return Vec.zeros(self.shape, ell, order)

        def step(G: Vec):
            gx = [-compose_shift(p, G.x, None, order) for p in psi_y]
            return Vec(gx, [zero] * ell, zero)

        G = _fixed_point(step, Vec.zeros(self.shape, ell, order), order)
        gy = [compose_shift(p, G.x, None, order) for p in psi_x]
        gu = compose_shift(psi_t, G.x, None, order)
        return Vec(G.x, gy, gu)

    def conservative_field(self, order) -> tuple:
        Gam = self.gamma_inverse(order)
        V = self.V.truncate(order)
        shifted = _compose(V, Gam, order)
        rhs = shifted - Gam.map(lambda c: c.diff("t"))
        return _neumann_solve(Gam, rhs, order), Gam

    # dissipative pushforward -------------------------------------------------
    def delta_inverse(self, order) -> Vec:
        A = self.A.truncate(order)
        if self.alpha_arguments == "new":
            return -A
        return _fixed_point(lambda D: -_compose(A, D, order), Vec.zeros(self.shape, self.ell, order), order)

    def transformed_field(self, order) -> tuple:
        ell = self.ell
        Vt, Gam = self.conservative_field(order)
        A = self.A.truncate(order)
        Delta = self.delta_inverse(order)
        At = A.map(lambda c: c.diff("t"))
        shape = self.shape
        one = GradedSeries.lift(FourierTaylorSeries.constant(shape, 1.0), order)
        zero = GradedSeries(shape, order)
        if self.alpha_arguments == "new":
            # Zdot = (I - DA(Z))^{-1} [ z~dot(Z - A(Z)) + A_t(Z) ]
            rhs = _compose(Vt, Delta, order) + At
            W = _neumann_solve(-A, rhs, order)
        else:
            # Zdot = [(I + DA) z~dot + A_t] at z~ = Z + Delta(Z)
            P = Vt + _jvp(A, Vt) + At
            W = _compose(P, Delta, order)
        # drift terms mu * J e_y eta and mu * sigma(Z) e_u; eta is read either
        # at Z or at the original point z = Z + Delta + Gamma(Z + Delta)
        if self.drift_frame == "old":
            back = Delta + _compose(Gam, Delta, order)
        for m in range(ell):
            if self.eta[m].is_zero():
                continue
            e = Vec([zero] * ell, [one if p == m else zero for p in range(ell)], zero)
            col = _neumann_solve(Gam, e, order)
            if self.alpha_arguments == "new":
                col = _neumann_solve(-A, _compose(col, Delta, order), order)
            else:
                col = _compose(col + _jvp(A, col), Delta, order)
            eta_m = self.eta[m]
            if self.drift_frame == "old":
                eta_m = compose_shift(eta_m, back.x, back.y, order)
            mu_eta = eta_m.shift(0, 1).truncate(order)
            W = W + col.map(lambda c: c * mu_eta)
        if not self.sigma.is_zero():
            W = Vec(W.x, W.y, W.u + self.sigma.shift(0, 1).truncate(order))
        return W, Gam, Delta

    # homological solves ----------------------------------------------------
    def solve_conservative(self, n, W: Vec):
        """psi_n0 from the (n, 0) grades of ydot (k != 0) and udot (k = 0)."""
        res = self.res
        ell = self.ell
        G = [W.y[m][(n, 0)].project("nonresonant", res) for m in range(ell)]
        H = W.u[(n, 0)].project("nonresonant", res)
        modes = {}
        for m in range(ell):
            for row, mode in enumerate(G[m].modes):
                mode = tuple(int(v) for v in mode)
                if mode in modes:
                    continue
                first = next((p for p in range(ell) if mode[p]), None)
                if first is None:
                    continue
                c = G[first].coefficient(mode)
                modes[mode] = -c / (1j * mode[first])
        for row, mode in enumerate(H.modes):
            mode = tuple(int(v) for v in mode)
            if any(mode[:ell]) or mode in modes:
                continue
            modes[mode] = -H.coefs[row] / (1j * mode[ell])
        if not modes:
            return FourierTaylorSeries(self.shape)
        L = FourierTaylorSeries(self.shape, np.array(list(modes)), np.array(list(modes.values())))
        return solve_homological(L, self.sys.omega, res)

    def solve_dissipative(self, i, j, W: Vec):
        res = self.res
        ell = self.ell
        omega = self.sys.omega
        g = (i, j)
        beta, alpha, eta = [], [], []
        for m in range(ell):
            G = W.y[m][g]
            eta.append(-(G.project("average", res) + G.project("resonant", res)))
            beta.append(solve_homological(G.project("nonresonant", res), omega, res))
        for m in range(ell):
            F = W.x[m][g]
            for p in range(ell):
                if not beta[p].is_zero():
                    F = F - omega[m].diff("y", p) * beta[p]
            alpha.append(solve_homological(F.project("nonresonant", res), omega, res))
        H = W.u[g]
        sigma = -(H.project("average", res) + H.project("resonant", res))
        gamma = solve_homological(H.project("nonresonant", res), omega, res)
        return alpha, beta, gamma, eta, sigma

    def run(self):
        ell = self.ell
        for n in range(1, self.N + 1):
            self.psi.append(FourierTaylorSeries(self.shape))
            W, _, _ = self.transformed_field(n)
            self.psi[n - 1] = self.solve_conservative(n, W)
            for i in range(n):
                j = n - i
                alpha, beta, gamma, eta, sigma = self.solve_dissipative(i, j, W)
                self.A = Vec(
                    [self.A.x[m].with_grade((i, j), alpha[m]) for m in range(ell)],
                    [self.A.y[m].with_grade((i, j), beta[m]) for m in range(ell)],
                    self.A.u.with_grade((i, j), gamma),
                )
                self.eta = [self.eta[m].with_grade((i, j - 1), eta[m]) for m in range(ell)]
                self.sigma = self.sigma.with_grade((i, j - 1), sigma)
            self.log.append(f"order {n}: psi terms {len(self.psi[n - 1])}")
        W, Gam, Delta = self.transformed_field(self.top)
        return W, Gam, Delta


def _maps(b: _Builder, Gam: Vec, Delta: Vec, order: int):
    """Forward map z -> Z and backward map Z -> z as shifts of the identity."""
    ell = b.ell
    shape = b.shape
    zero = GradedSeries(shape, order)
    psi = b.psi_graded(order)
    psi_x = [psi.diff("x", m) for m in range(ell)]
    psi_y = [psi.diff("y", m) for m in range(ell)]
    psi_t = psi.diff("t")

    # y~ = y + Theta_y with Theta_y = -psi_x(y + Theta_y, x, t)
    def step(T: Vec):
        return Vec([zero] * ell, [-compose_shift(p, None, T.y, order) for p in psi_x], zero)

    T = _fixed_point(step, Vec.zeros(shape, ell, order), order)
    Theta = Vec([compose_shift(p, None, T.y, order) for p in psi_y], T.y,
                -compose_shift(psi_t, None, T.y, order))
    A = b.A.truncate(order)
    if b.alpha_arguments == "new":
        # Z = z~ + Atilde with Atilde = A(z~ + Atilde)
        At = _fixed_point(lambda S: _compose(A, S, order), Vec.zeros(shape, ell, order), order)
        Ad = _compose(At, Theta, order)
    else:
        Ad = _compose(A, Theta, order)
    forward = Theta + Ad
    backward = Delta.truncate(order) + _compose(Gam.truncate(order), Delta.truncate(order), order)
    return forward, backward, Theta


def build_normal_form(system, N: int = 2, *, alpha_arguments: str = "new",
                      drift_frame: str = "old", eps: float | None = None, mu: float | None = None) -> NormalFormResult:
    """Construct the order-N resonant normal form.

    Parameters
    ----------
    system : DissipativeSystem or ExtendedSystem
        The field to normalize.  The time-conjugate action u is always carried
        internally (its equation fixes the purely time-dependent part of psi);
        ``ExtendedSystem.u_enabled`` only controls what is reported.
    N : int
        Normalization order, 1 <= N <= 8.
    alpha_arguments : {'intermediate', 'new'}
        Whether the dissipative generating grades are functions of the
        intermediate variables (explicit forward map) or of the new ones.
    drift_frame : {'old', 'new'}
        Variables in which the drift eta is a function.  With 'old' the drift
        is the one inserted into the original equation, eta(y, x, t).
    eps, mu : float, optional
        If given, the smallness conditions are checked and a violation raises
        :class:`NormalizationError` naming the failed condition.
    """
    u_enabled = True
    if isinstance(system, ExtendedSystem):
        u_enabled = system.u_enabled
        system = system.base
    if not 1 <= int(N) <= MAX_ORDER:
        raise ValueError(f"order N must be between 1 and {MAX_ORDER}")
    if alpha_arguments not in ALPHA_ARGUMENTS:
        raise ValueError(f"alpha_arguments must be one of {ALPHA_ARGUMENTS}")
    N = int(N)
    if drift_frame not in DRIFT_FRAMES:
        raise ValueError(f"drift_frame must be one of {DRIFT_FRAMES}")
    b = _Builder(system, N, alpha_arguments)
    b.drift_frame = drift_frame
    W, Gam, Delta = b.run()
    forward, backward, Theta = _maps(b, Gam, Delta, N + 1)
    res = system.resonance
    ell = system.ell
    shape = system.shape

    def part(c, *parts):
        out = FourierTaylorSeries(shape)
        for p in parts:
            out = out + project(c, p, res)
        return out

    omega_d, p_X, p_Y, s = [], [], [], []
    for m in range(ell):
        om = GradedSeries(shape, N, {(0, 0): system.omega[m]})
        pY = GradedSeries(shape, N)
        sm = GradedSeries(shape, N)
        for g, f in W.x[m].truncate(N).items():
            if g == (0, 0):
                continue
            om = om.with_grade(g, project(f, "average", res))
            rpart = part(f, "average", "resonant")
            if g[1] == 0:
                pY = pY.with_grade((g[0] - 1, 0), rpart)
            else:
                sm = sm.with_grade((g[0], g[1] - 1), rpart)
        pX = GradedSeries(shape, N)
        for g, f in W.y[m].truncate(N).items():
            if g[1] == 0 and g[0] >= 1:
                pX = pX.with_grade((g[0] - 1, 0), -part(f, "average", "resonant"))
        omega_d.append(om)
        p_X.append(pX)
        p_Y.append(pY)
        s.append(sm)
    p_t = GradedSeries(shape, N)
    for g, f in W.u.truncate(N).items():
        if g[1] == 0 and g[0] >= 1:
            p_t = p_t.with_grade((g[0] - 1, 0), -part(f, "average", "resonant"))

    psi_list = list(b.psi)
    ct = ConservativeTransformation(psi_list, Gam.truncate(N), Theta)
    dt = DissipativeTransformation(list(b.A.x), list(b.A.y), b.A.u, Delta.truncate(N), alpha_arguments)
    eta = [c.truncate(N - 1) for c in b.eta]
    nf = NormalFormResult(
        system=system, order=N, u_enabled=u_enabled, resonance=res, field=W,
        omega_d=omega_d, p_X=p_X, p_Y=p_Y, p_t=p_t, s=s,
        drift=DriftFunction(eta, drift_frame), sigma=b.sigma.truncate(N - 1),
        conservative=ct, dissipative=dt, backward=backward, forward=forward, log=b.log,
    )
    if eps is not None or mu is not None:
        from .estimates import check_thresholds

        check_thresholds(nf, eps or 0.0, mu or 0.0)
    return nf


def classify(nf: NormalFormResult) -> str:
    """'case_i' if p_X or s vanishes at every computed grade, else 'case_ii'."""
    zero_pX = all(g.is_zero() for g in nf.p_X)
    zero_s = all(g.is_zero() for g in nf.s)
    return "case_i" if (zero_pX or zero_s) else "case_ii"


def residual_grade_norms(nf: NormalFormResult, r0: float, s0: float) -> dict:
    """Weighted norms of the non-resonant (<= K) part of each field grade <= N."""
    out = {}
    resid = nf.nonresonant_residual()
    for name, comp in zip(["x", "y", "u"], [resid.x[0], resid.y[0], resid.u]):
        for g, f in comp.items():
            out[(name, g)] = weighted_norm(f, r0, s0)
    return out


def invert_transformations(ct: ConservativeTransformation, dt: DissipativeTransformation, order: int) -> Vec:
    """Backward map Z -> z as a shift series B with z = Z + B(Z)."""
    G = ct.gamma_inverse.truncate(order)
    D = dt.delta_inverse.truncate(order)
    return D + _compose(G, D, order)
