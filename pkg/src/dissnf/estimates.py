"""Smallness conditions, lemma and theorem constants, and the Table 1 record.

Every inequality of the construction is evaluated on the computed series
with one of two sup-norm evaluators:

* ``'sampled'``  sup over Chebyshev points of the real action interval;
* ``'majorant'`` the Taylor majorant sum |c_e| r^|e|, an upper bound that
  also covers the complex action ball.

Condition names follow the labels used throughout the documentation:
C1, C2, C2bis, 33ter, cnew1, C6 constrain eps; C4, C5, C7, C8 constrain mu.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .normalizer import NormalFormResult, NormalizationError, build_normal_form, classify
from .series import (
    FourierTaylorSeries,
    GradedSeries,
    _action_samples,
    project,
    tail_bound,
    weighted_norm,
)
from .system import DomainRadii, QuasiConvexityData, fixture

NORM_METHODS = ("sampled", "majorant")
INVERSION_CONSTANT = 70.0
DEFAULT_FRACTIONS = {"alpha": 0.125, "beta": 0.125, "gamma": 0.125, "sigma": 0.125}

# published values of the stability table, columns in fixture order
TABLE1_FIXTURES = ("e19", "e20", "A1", "A2")
TABLE1_ROWS = ("eps0", "mu0", "tau0", "C_Y", "C_p", "C_1", "C_2", "C_3", "C_4",
               "delta_Y", "delta_y", "T")
TABLE1_REFERENCE = {
    "e19": dict(eps0=6e-5, mu0=6e-5, tau0=1.458, C_Y=31.6, C_p=1.052, C_1=2.117e-3, C_2=5.056e-3,
                C_3=2.01, C_4=3.292e-5, delta_Y=2.408e-2, delta_y=2.421e-2, T=2.692e5),
    "e20": dict(eps0=6e-5, mu0=6e-5, tau0=1.458, C_Y=34.28, C_p=1.052, C_1=2.233e-3, C_2=3.059e-5,
                C_3=2.01, C_4=3.292e-5, delta_Y=2.408e-2, delta_y=2.421e-2, T=4.43e7),
    "A1": dict(eps0=6e-5, mu0=6e-5, tau0=1.458, C_Y=17.14, C_p=1.265, C_1=1.359e-3, C_2=0.0,
               C_3=3.208e-5, C_4=1.006e-5, delta_Y=9.369e-3, delta_y=9.521e-3, T=1.699e10),
    "A2": dict(eps0=6e-5, mu0=1.9e-4, tau0=1.285, C_Y=1.087, C_p=0.3323, C_1=2.158e-4, C_2=0.0,
               C_3=2.01, C_4=3.283e-6, delta_Y=2.408e-2, delta_y=2.421e-2, T=3.309e9),
}
TABLE1_TOLERANCE = 1.25


# ---------------------------------------------------------------------------
# fast norms of eps/mu-dependent sums


class _SumNorm:
    """Norm of sum_g eps^i mu^j f_g for many (eps, mu) without rebuilding series."""

    def __init__(self, graded, r0: float, s0: float, method: str = "sampled"):
        comps = graded if isinstance(graded, (list, tuple)) else [graded]
        if method not in NORM_METHODS:
            raise ValueError(f"unknown norm method {method!r}")
        self.method = method
        self.parts = []
        for g in comps:
            items = [(gr, f) for gr, f in g.items() if not f.is_zero()]
            if not items:
                continue
            shape = items[0][1].shape
            modes = sorted({tuple(int(v) for v in m) for _, f in items for m in f.modes})
            index = {m: n for n, m in enumerate(modes)}
            basis = shape.basis
            stack = np.zeros((len(items), len(modes), basis.size), dtype=complex)
            for a, (_, f) in enumerate(items):
                for m, c in zip(f.modes, f.coefs):
                    stack[a, index[tuple(int(v) for v in m)]] += c
            weights = np.exp(np.abs(np.array(modes)).sum(axis=1) * s0)
            if method == "sampled":
                pts = _action_samples(shape.ell, shape.y0, r0)
                mono = basis.monomials(pts - np.asarray(shape.y0))  # (P, n)
                data = stack @ mono.T  # (G, M, P)
            else:
                data = stack
            rad = r0 ** basis.total_degree
            self.parts.append(([gr for gr, _ in items], data, weights, rad))

    def __call__(self, eps: float, mu: float) -> float:
        total = 0.0
        for grades, data, weights, rad in self.parts:
            coef = np.array([eps ** i * mu ** j for i, j in grades])
            acc = np.tensordot(coef, data, axes=(0, 0))
            if self.method == "sampled":
                val = float((np.abs(acc) * weights[:, None]).sum(axis=0).max())
            else:
                val = float((np.abs(acc) @ rad) @ weights)
            total += val * val
        return math.sqrt(total)


def _norm(f, r0, s0, method):
    return weighted_norm(f, r0, s0, method)


def _omega_y_norm(nf: NormalFormResult, radii: DomainRadii, method: str) -> float:
    ell = nf.ell
    return weighted_norm([w.diff("y", n) for w in nf.system.omega for n in range(ell)], radii.r0, 0.0, method)


# ---------------------------------------------------------------------------
# smallness conditions


@dataclass
class Condition:
    """One inequality lhs(eps, mu) < 1 (or <= 1) in normalized form."""

    name: str
    parameter: str  # 'eps' or 'mu'
    text: str
    ratio: Callable[[float, float], float]
    strict: bool = True

    def holds(self, eps: float, mu: float) -> bool:
        v = self.ratio(eps, mu)
        return v < 1.0 if self.strict else v <= 1.0


@dataclass
class ConditionCheck:
    name: str
    parameter: str
    text: str
    ratio: float
    satisfied: bool
    threshold: float = math.inf


def _graded_part(g: GradedSeries, keep) -> GradedSeries:
    return GradedSeries(g.shape, g.order, {gr: f for gr, f in g.items() if keep(gr)})


def conditions(nf: NormalFormResult, radii: DomainRadii | None = None,
               method: str = "sampled") -> list[Condition]:
    """All inversion and non-resonance conditions on (eps, mu) for ``nf``."""
    radii = radii or nf.system.radii
    res = nf.resonance
    K, a = res.K, res.a
    r0, rt, rtp, R0 = radii.r0, radii.r0_tilde, radii.r0_tilde_prime, radii.R0
    s0, st = radii.s0, radii.s0_tilde
    d0, dt0 = radii.delta0, radii.delta0_tilde
    ell = nf.ell
    shape = nf.shape
    wy = _omega_y_norm(nf, radii, method)
    psi = nf.conservative.generating_function(shape, nf.order)
    psi1 = _graded_part(psi, lambda g: g == (1, 0))
    psi_y = [psi.diff("y", m) for m in range(ell)]
    psi_x = [psi.diff("x", m) for m in range(ell)]
    n_psi1_y = _SumNorm([p.diff("y", m) for m in range(ell) for p in [psi1]], rt, s0, method)
    n_psi1_x = _SumNorm([p.diff("x", m) for m in range(ell) for p in [psi1]], rt, s0, method)
    n_psi_y = _SumNorm(psi_y, rt, s0, method)
    n_psi_x = _SumNorm(psi_x, rt, s0, method)

    dis = nf.dissipative
    first = lambda g: _graded_part(g, lambda gr: gr == (0, 1))  # noqa: E731
    a01 = [first(g) for g in dis.alpha]
    b01 = [first(g) for g in dis.beta]
    c01 = first(dis.gamma)
    n_a01 = _SumNorm(a01, rt, st, method)
    n_b01 = _SumNorm(b01, rt, st, method)
    n_b01x = _SumNorm([g.diff("x", m) for g in b01 for m in range(ell)], rt, st, method)
    n_c01 = _SumNorm(c01, rt, st, method)
    n_c01x = _SumNorm([c01.diff("x", m) for m in range(ell)], rt, st, method)
    n_a = _SumNorm(list(dis.alpha), rt, st, method)
    n_b = _SumNorm(list(dis.beta), rt, st, method)
    n_bx = _SumNorm([g.diff("x", m) for g in dis.beta for m in range(ell)], rt, st, method)
    n_c = _SumNorm(dis.gamma, rt, st, method)
    n_cx = _SumNorm([dis.gamma.diff("x", m) for m in range(ell)], rt, st, method)

    e2s0, e2st = math.exp(2 * s0), math.exp(2 * st)
    C = INVERSION_CONSTANT
    # the first-order grades are evaluated at unit parameter and scaled explicitly
    return [
        Condition("C1", "eps", "70 |psi10_y| e^(2 s0) / delta0 * eps < 1",
                  lambda e, m: C * n_psi1_y(1.0, 0.0) * e2s0 / d0 * e),
        Condition("C2", "eps", "70 eps |psi10_x| / (r0~ - r0~') < 1",
                  lambda e, m: C * e * n_psi1_x(1.0, 0.0) / (rt - rtp)),
        Condition("C2bis", "eps", "eps < a / (2K |R(y,1)| |omega_y|), |R(y,1)| <= |psi10_x|",
                  lambda e, m: e * 2 * K * n_psi1_x(1.0, 0.0) * wy / a),
        Condition("33ter", "eps", "70 |psi_y^(N)| e^(2 s0) / delta0 < 1",
                  lambda e, m: C * n_psi_y(e, 0.0) * e2s0 / d0),
        Condition("cnew1", "eps", "70 |psi_x^(N)| / (r0 - r0~') < 1",
                  lambda e, m: C * n_psi_x(e, 0.0) / (r0 - rtp)),
        Condition("C6", "eps", "eps <= a / (2K |R(y,N)| |omega_y|), eps |R(y,N)| <= |psi_x^(N)|",
                  lambda e, m: 2 * K * n_psi_x(e, 0.0) * wy / a, strict=False),
        Condition("C4", "mu", "70 |alpha01| e^(2 s0~) / delta0~ * mu < 1 (and beta01, gamma01 rows)",
                  lambda e, m: m * max(C * n_a01(1.0, 1.0) * e2st / dt0,
                                       C * (n_b01(1.0, 1.0) + n_b01x(1.0, 1.0) * n_a01(1.0, 1.0)) / (rt - R0),
                                       C * (n_c01(1.0, 1.0) + n_c01x(1.0, 1.0) * n_a01(1.0, 1.0)) / (rt - R0))),
        Condition("C5", "mu", "mu < a / (4K |beta01| |omega_y|)",
                  lambda e, m: m * 4 * K * n_b01(1.0, 1.0) * wy / a),
        Condition("C7", "mu", "70 |alpha^(N)| e^(2 s0~) / delta0~ < 1 (and beta, gamma rows)",
                  lambda e, m: max(C * n_a(e, m) * e2st / dt0,
                                   C * (n_b(e, m) + n_bx(e, m) * n_a(e, m)) / (rt - R0),
                                   C * (n_c(e, m) + n_cx(e, m) * n_a(e, m)) / (rt - R0))),
        Condition("C8", "mu", "4K |omega_y| |beta^(N)| < a",
                  lambda e, m: 4 * K * wy * n_b(e, m) / a),
    ]


def evaluate_conditions(nf: NormalFormResult, eps: float, mu: float, radii: DomainRadii | None = None,
                        method: str = "sampled") -> list[ConditionCheck]:
    out = []
    for c in conditions(nf, radii, method):
        v = c.ratio(eps, mu)
        out.append(ConditionCheck(c.name, c.parameter, c.text, v, c.holds(eps, mu)))
    return out


def check_thresholds(nf: NormalFormResult, eps: float, mu: float, radii: DomainRadii | None = None,
                     method: str = "sampled") -> list[ConditionCheck]:
    """Raise :class:`NormalizationError` naming the first violated condition."""
    checks = evaluate_conditions(nf, eps, mu, radii, method)
    for c in checks:
        if not c.satisfied:
            raise NormalizationError(
                f"condition ({c.name}) violated at eps={eps:g}, mu={mu:g}: {c.text}; normalized lhs = {c.ratio:.4g}")
    return checks


def _largest_admissible(cond: Condition, fixed: float, which: str, hi: float = 10.0) -> float:
    """Largest parameter value keeping ``cond`` true (inf if it never fails up to ``hi``)."""
    def ok(p):
        return cond.holds(p, fixed) if which == "eps" else cond.holds(fixed, p)

    if ok(hi):
        return math.inf
    lo = 1e-30
    if not ok(lo):
        return 0.0
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(200):
        mid = 0.5 * (llo + lhi)
        if ok(math.exp(mid)):
            llo = mid
        else:
            lhi = mid
        if lhi - llo < 1e-12:
            break
    return math.exp(llo)


@dataclass
class Thresholds:
    eps0: float
    mu0: float
    method: str
    breakdown: dict  # condition name -> largest admissible value of its parameter
    binding_eps: str | None
    binding_mu: str | None


def smallness_thresholds(nf: NormalFormResult, radii: DomainRadii | None = None,
                         method: str = "sampled") -> Thresholds:
    """eps0 from the eps-conditions (mu = 0), then mu0 from the mu-conditions at eps0."""
    conds = conditions(nf, radii, method)
    breakdown = {}
    for c in conds:
        if c.parameter == "eps":
            breakdown[c.name] = _largest_admissible(c, 0.0, "eps")
    eps_vals = {k: v for k, v in breakdown.items()}
    eps0 = min(eps_vals.values()) if eps_vals else math.inf
    eps_at = 0.0 if not math.isfinite(eps0) else eps0
    for c in conds:
        if c.parameter == "mu":
            breakdown[c.name] = _largest_admissible(c, eps_at, "mu")
    mu_vals = {c.name: breakdown[c.name] for c in conds if c.parameter == "mu"}
    mu0 = min(mu_vals.values()) if mu_vals else math.inf
    bind_e = min(eps_vals, key=eps_vals.get) if math.isfinite(eps0) else None
    bind_m = min(mu_vals, key=mu_vals.get) if math.isfinite(mu0) else None
    return Thresholds(eps0, mu0, method, breakdown, bind_e, bind_m)


# ---------------------------------------------------------------------------
# Hamiltonian potentials of the mu = 0 field


def hamiltonian_potential(xdot: FourierTaylorSeries, ydot: FourierTaylorSeries,
                          udot: FourierTaylorSeries) -> FourierTaylorSeries:
    """B with B_Y = xdot (average), B_X = -ydot (k != 0) and B_t = -udot (k = 0).

    One action only.  The average part is the antiderivative in Y vanishing at
    the base point.
    """
    shape = ydot.shape
    if shape.ell != 1:
        raise NotImplementedError("potentials are implemented for one action")
    modes, coefs = [], []
    for m, c in zip(ydot.modes, ydot.coefs):
        if m[0] != 0:
            modes.append(m)
            coefs.append(-c / (1j * m[0]))
    for m, c in zip(udot.modes, udot.coefs):
        if m[0] == 0 and m[1] != 0:
            modes.append(m)
            coefs.append(-c / (1j * m[1]))
    out = FourierTaylorSeries(shape, np.array(modes, dtype=np.int64).reshape(-1, 2),
                              np.array(coefs, dtype=complex).reshape(-1, shape.basis.size))
    return out + xdot.average().integrate_y(0)


def _avg_res(f: FourierTaylorSeries, res) -> FourierTaylorSeries:
    return project(f, "average", res) + project(f, "resonant", res)


# ---------------------------------------------------------------------------
# lemma constants


@dataclass
class LemmaConstants:
    eps: float
    mu: float
    lam: float
    N: int
    K: int
    tau0: float
    C_omega: float
    C_p: float
    G: float
    C_G: float
    C_G_tilde: float
    C_Y: float
    C_G_tilde_lemma: float  # Fourier-tail lemma bound, reported for reference
    method: str


def _field_at(nf: NormalFormResult, eps, mu, grades=None, part=None):
    """(xdot, ydot, udot) of the transformed field summed over selected grades."""
    res = nf.resonance

    def collapse(g):
        sel = GradedSeries(g.shape, g.order, {gr: f for gr, f in g.items() if grades is None or grades(gr)})
        f = sel.at(eps, mu)
        return f if part is None else part(f, res)

    W = nf.field
    return collapse(W.x[0]), collapse(W.y[0]), collapse(W.u)


def lemma_constants(nf: NormalFormResult, eps: float, mu: float, radii: DomainRadii | None = None,
                    method: str = "sampled") -> LemmaConstants:
    if nf.ell != 1:
        raise NotImplementedError("constants are implemented for one action")
    radii = radii or nf.system.radii
    res = nf.resonance
    N, K = nf.order, res.K
    lam = max(eps, mu)
    if lam <= 0:
        raise ValueError("need max(eps, mu) > 0")
    R0, S0 = radii.R0, radii.S0
    tau0 = N * abs(math.log(lam)) / K
    omega = nf.system.omega[0]
    C_omega = _norm(nf.omega_d[0].at(eps, mu) - omega, R0, 0.0, method) / lam
    C_p = _norm(nf.forward.y[0].at(eps, mu), R0, S0, method) / lam
    # resonant eps-only part of Ydot
    Gr = GradedSeries(nf.shape, N, {g: project(f, "resonant", res) for g, f in nf.field.y[0].items()
                                     if g[1] == 0 and 1 <= g[0] <= N})
    sn = _SumNorm(Gr, R0, S0, method)
    G = max(sn(e, 0.0) for e in np.linspace(0.0, eps, 65)) / lam
    _, G_high, _ = _field_at(nf, eps, mu, grades=lambda g: sum(g) == N + 1)
    _, Y_all, _ = _field_at(nf, eps, mu)
    G_tail = project(Y_all, "tail", res)
    C_G = _norm(G_high, R0, S0, method) / lam ** (N + 1)
    C_G_tilde = _norm(G_tail, R0, S0, method) / lam ** (N + 1)
    low = GradedSeries(nf.shape, N, {g: f for g, f in nf.field.y[0].items() if sum(g) <= N}).at(eps, mu)
    C_G_tilde_lemma = tail_bound(low, K, S0 / 2, R0, S0, method) / lam ** (N + 1)
    return LemmaConstants(eps, mu, lam, N, K, tau0, C_omega, C_p, G, C_G, C_G_tilde, C_G + C_G_tilde,
                          C_G_tilde_lemma, method)


# ---------------------------------------------------------------------------
# theorem constants


@dataclass
class StabilityReport:
    """Thresholds, constants, radius and time of the stability statement."""

    system: str
    N: int
    K: int
    method: str
    eps: float
    mu: float
    lam: float
    eps0: float
    mu0: float
    a: float
    tau0: float
    C_omega: float
    C_p: float
    G: float
    C_G: float
    C_G_tilde: float
    C_Y: float
    C_1: float
    C_2: float
    C_3: float
    C_4: float
    m_tilde: float
    M_tilde: float
    omega_e: float
    r: float
    fractions: dict
    rho: float
    rho_cap: float
    C_0: float
    C_0_prime: float
    T: float
    case: str
    delta_Y: float
    delta_y: float
    checks: dict = field(default_factory=dict)
    valid: bool = True
    notes: list = field(default_factory=list)

    def total_action_bound(self) -> float:
        return 2 * self.C_p * self.lam + self.rho

    def as_dict(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _omega_e_norm(nf, R0, method):
    omega = nf.system.omega[0]
    if method == "majorant":
        return math.sqrt(_norm(omega, R0, 0.0, method) ** 2 + 1.0)
    pts = _action_samples(1, nf.shape.y0, R0)[:, 0]
    vals = omega.evaluate(pts, np.zeros_like(pts), np.zeros_like(pts))
    return float(np.sqrt(vals ** 2 + 1.0).max())


def remainder_constants(nf: NormalFormResult, eps: float, mu: float, radii: DomainRadii | None = None,
                        method: str = "sampled") -> dict:
    """C_1 ... C_4 of the energy-variation estimate (one action)."""
    radii = radii or nf.system.radii
    res = nf.resonance
    N = nf.order
    lam = max(eps, mu)
    R0, S0 = radii.R0, radii.S0
    nrm = lambda f: _norm(f, R0, S0, method)  # noqa: E731
    high = lambda g: sum(g) == N + 1  # noqa: E731
    F1, G1, H1 = _field_at(nf, eps, mu, grades=high)
    F10, G10, H10 = _field_at(nf, eps, 0.0, grades=high)
    B = hamiltonian_potential(F10, G10, H10)
    Ft, Gt, Ht = _field_at(nf, eps, mu, part=lambda f, r: project(f, "tail", r))
    Ft0, Gt0, Ht0 = _field_at(nf, eps, 0.0, part=lambda f, r: project(f, "tail", r))
    A = hamiltonian_potential(Ft0, Gt0, Ht0)
    eps_only = lambda g: g[1] == 0 and 1 <= g[0] <= N  # noqa: E731
    with_mu = lambda g: g[1] >= 1 and sum(g) <= N  # noqa: E731
    epY, Ylow, _ = _field_at(nf, eps, mu, grades=eps_only, part=_avg_res)
    epX = -project(Ylow, "resonant", res)
    mus, _, _ = _field_at(nf, eps, mu, grades=with_mu, part=_avg_res)
    om = nf.system.omega[0]
    BY, BX, Bt = B.diff("y"), B.diff("x"), B.diff("t")
    AY, AX, At = A.diff("y"), A.diff("x"), A.diff("t")
    C_high = (om * G1 + epY * G1 + epX * F1 + (AY + BY) * G1 + BY * (Gt - epX) + (AX + BX) * F1
              + BX * (om + epY + mus + Ft) + H1 + Bt)
    D_tail = (om * Gt + epY * Gt + epX * Ft + Ht - epX * AY + AY * Gt + om * AX + epY * AX
              + mus * AX + AX * Ft + At)
    wE = _omega_e_norm(nf, R0, method)
    C1 = (wE * (nrm(Gt) + nrm(G1) + nrm(Ht) + nrm(H1)) + nrm(C_high) + nrm(D_tail)) / lam ** N
    pX = nf.p_X[0].at(eps, mu)
    s = nf.s[0].at(eps, mu)
    C2 = nrm(pX) * nrm(s)
    # p: the resonant Hamiltonian of the mu = 0 normal form divided by eps
    P = FourierTaylorSeries(nf.shape)
    for i in range(1, N + 1):
        sel = lambda g, i=i: g == (i, 0)  # noqa: E731
        xi, yi, ui = _field_at(nf, 1.0, 1.0, grades=sel, part=_avg_res)
        P = P + hamiltonian_potential(xi, yi, ui).scale(eps ** (i - 1))
    C3 = 2 * nrm(P)
    C4 = 2 * (nrm(A) + nrm(B)) / lam ** N
    return dict(C_1=C1, C_2=C2, C_3=C3, C_4=C4, omega_e=wE, p=P, B=B, C_high=C_high, D_tail=D_tail)


def theorem_constants(nf: NormalFormResult, eps: float, mu: float, radii: DomainRadii | None = None,
                      qc: QuasiConvexityData | None = None, fractions: dict | None = None,
                      r: float | None = None, method: str = "sampled",
                      thresholds: Thresholds | None = None) -> StabilityReport:
    """Stability radius and time at (eps, mu) for the normal form ``nf``.

    ``fractions`` holds the proof constants alpha, beta, gamma, sigma
    (default 1/8 each) and ``r`` the escape radius (default R0/2).
    """
    radii = radii or nf.system.radii
    sysm = nf.system
    qc = qc or sysm.quasi_convexity(radii.r0)
    fr = dict(DEFAULT_FRACTIONS)
    fr.update(fractions or {})
    r = radii.R0 / 2 if r is None else float(r)
    N = nf.order
    lam = max(eps, mu)
    lem = lemma_constants(nf, eps, mu, radii, method)
    rem = remainder_constants(nf, eps, mu, radii, method)
    C1, C2, C3, C4 = rem["C_1"], rem["C_2"], rem["C_3"], rem["C_4"]
    D_norm = _norm(nf.forward.y[0].at(eps, mu), radii.r0, radii.s0, method)
    m_t = qc.m + qc.h00_third * D_norm
    M_t = qc.M - qc.h00_third * D_norm
    case = "i" if classify(nf) == "case_i" else "ii"
    al, be, ga, si = fr["alpha"], fr["beta"], fr["gamma"], fr["sigma"]
    S = al + be + ga + (si if case == "ii" else 0.0)
    rho = math.sqrt(2 * S) * r
    rho_cap = qc.L / ((al / math.sqrt(2 * S) + ga / (2 * S)) * M_t) if M_t > 0 else 0.0
    lamN = lam ** N
    C0 = ga * M_t * r * r / C1 if C1 > 0 else math.inf
    T1 = C0 / lamN
    C0p = si * M_t * r * r / C2 if C2 > 0 else math.inf
    if case == "i":
        T = T1
    else:
        T = min(T1, C0p / (eps * mu)) if eps * mu > 0 else T1
    checks = {
        "resonance_distance": radii.delta + m_t * r < al * M_t * r,
        "initial_variation": C3 * eps + C4 * lamN < be * M_t * r * r,
        "rho_le_R0": rho <= radii.R0,
        "rho_quasi_convex": rho <= rho_cap,
        "M_tilde_positive": M_t > 0,
    }
    notes = [f"{k} fails" for k, v in checks.items() if not v]
    th = thresholds
    return StabilityReport(
        system=sysm.name, N=N, K=nf.resonance.K, method=method, eps=eps, mu=mu, lam=lam,
        eps0=th.eps0 if th else math.nan, mu0=th.mu0 if th else math.nan, a=nf.resonance.a,
        tau0=lem.tau0, C_omega=lem.C_omega, C_p=lem.C_p, G=lem.G, C_G=lem.C_G, C_G_tilde=lem.C_G_tilde,
        C_Y=lem.C_Y, C_1=C1, C_2=C2, C_3=C3, C_4=C4, m_tilde=m_t, M_tilde=M_t, omega_e=rem["omega_e"],
        r=r, fractions=fr, rho=rho, rho_cap=rho_cap, C_0=C0, C_0_prime=C0p, T=T, case=case,
        delta_Y=rho, delta_y=2 * lem.C_p * lam + rho, checks=checks, valid=all(checks.values()), notes=notes,
    )


def stability_report(nf: NormalFormResult, radii: DomainRadii | None = None, method: str = "sampled",
                     eps: float | None = None, mu: float | None = None, **kw) -> StabilityReport:
    """Thresholds plus theorem constants, by default at (eps0, mu0)."""
    th = smallness_thresholds(nf, radii, method)
    e = th.eps0 if eps is None else eps
    m = th.mu0 if mu is None else mu
    if not (math.isfinite(e) and math.isfinite(m)):
        raise ValueError("thresholds are unbounded; pass eps and mu explicitly")
    return theorem_constants(nf, e, m, radii, method=method, thresholds=th, **kw)


# ---------------------------------------------------------------------------
# Table 1


@dataclass
class Table1Report:
    columns: list  # fixture names
    reports: dict  # (fixture, method) -> StabilityReport
    reference: dict
    tolerance: float = TABLE1_TOLERANCE

    def cell(self, name: str, row: str, method: str) -> float:
        return float(getattr(self.reports[(name, method)], row))

    def within(self, name: str, row: str, method: str) -> bool:
        ref = self.reference[name][row]
        val = self.cell(name, row, method)
        if ref == 0.0:
            return val == 0.0
        if not (math.isfinite(val) and val > 0):
            return False
        return 1 / self.tolerance <= val / ref <= self.tolerance

    def cell_ok(self, name: str, row: str) -> bool:
        return any(self.within(name, row, m) for m in self.methods)

    @property
    def methods(self) -> list:
        return sorted({m for _, m in self.reports})

    def identities(self) -> dict:
        """Residuals of tau0 K = N |log lam| and of T rebuilt from C_0, C_0'."""
        out = {}
        for (name, method), rep in self.reports.items():
            t_id = abs(rep.tau0 * rep.K - rep.N * abs(math.log(rep.lam)))
            T1 = rep.C_0 * math.exp(rep.K * rep.tau0)
            T = T1 if rep.case == "i" else min(T1, rep.C_0_prime / (rep.eps * rep.mu))
            out[(name, method)] = {"tau0": t_id, "T": abs(T - rep.T) / rep.T if math.isfinite(rep.T) else 0.0}
        return out

    def deviations(self) -> list:
        rows = []
        for name in self.columns:
            for row in TABLE1_ROWS:
                ref = self.reference[name][row]
                entry = {"fixture": name, "row": row, "reference": ref}
                for m in self.methods:
                    v = self.cell(name, row, m)
                    entry[m] = v
                    entry[f"ratio_{m}"] = (v / ref) if ref else (0.0 if v == 0 else math.inf)
                entry["ok"] = self.cell_ok(name, row)
                rows.append(entry)
        return rows

    def text(self) -> str:
        lines = ["Stability table: reference vs computed (ratio computed/reference)"]
        head = f"{'row':<8}" + "".join(f"{n:>42}" for n in self.columns)
        lines.append(head)
        for row in TABLE1_ROWS:
            for m in self.methods:
                cells = []
                for n in self.columns:
                    ref = self.reference[n][row]
                    v = self.cell(n, row, m)
                    ratio = (v / ref) if ref else float("nan")
                    mark = "ok" if self.within(n, row, m) else "--"
                    cells.append(f"{ref:>10.4g} {v:>11.4g} {ratio:>9.3g} {mark:>3}   ")
                lines.append(f"{row:<8}" + "".join(f"{c:>42}" for c in cells) + f"  [{m}]")
        lines.append("")
        lines.append("cells within tolerance for at least one evaluator: "
                     f"{sum(self.cell_ok(n, r) for n in self.columns for r in TABLE1_ROWS)}"
                     f" / {len(self.columns) * len(TABLE1_ROWS)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        recs = {f"{n}/{m}": rep.as_dict() for (n, m), rep in self.reports.items()}
        out = {
            "tolerance": self.tolerance,
            "columns": self.columns,
            "reference": self.reference,
            "reports": recs,
            "deviations": self.deviations(),
            "provenance": {
                "eps0/mu0": "smallest admissible value over C1, C2, C2bis, 33ter, cnew1, C6 (eps) "
                            "and C4, C5, C7, C8 (mu, at eps0)",
                "tau0": "N |log lam| / K with lam = max(eps0, mu0)",
                "C_Y": "C_G + C_G_tilde, from the order N+1 grade and the >K modes of Ydot",
                "C_p": "|Pi_y(forward map) - Id| / lam",
                "C_1..C_4": "remainder bounds of the energy-variation estimate",
                "delta_Y": "rho = sqrt(2 (alpha+beta+gamma[+sigma])) r",
                "delta_y": "2 C_p lam + rho",
                "T": "C_0 lam^-N (case i) or min(C_0 lam^-N, C_0'/(eps mu)) (case ii)",
            },
        }
        return json.dumps(_jsonable(out), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def table1_report(fixtures: Sequence[str] = TABLE1_FIXTURES, N: int = 3,
                  methods: Sequence[str] = NORM_METHODS, operating_point: str = "computed",
                  **kw) -> Table1Report:
    """Normalize every fixture (extended phase space) and evaluate the table rows.

    Parameters
    ----------
    operating_point : {'computed', 'reference'}
        Where the constants are evaluated.  ``'computed'`` uses the thresholds
        obtained from the smallness conditions.  ``'reference'`` keeps those
        thresholds in the eps0/mu0 rows but evaluates every other row at the
        published (eps0, mu0), which isolates deviations in the constants from
        deviations in the thresholds.
    """
    if operating_point not in ("computed", "reference"):
        raise ValueError(f"unknown operating point {operating_point!r}")
    reports = {}
    for name in fixtures:
        nf = build_normal_form(fixture(name).extended(True), N)
        for m in methods:
            if operating_point == "reference" and name in TABLE1_REFERENCE:
                ref = TABLE1_REFERENCE[name]
                th = smallness_thresholds(nf, method=m)
                reports[(name, m)] = theorem_constants(nf, ref["eps0"], ref["mu0"], method=m,
                                                       thresholds=th, **kw)
            else:
                reports[(name, m)] = stability_report(nf, method=m, **kw)
    ref = {n: TABLE1_REFERENCE[n] for n in fixtures if n in TABLE1_REFERENCE}
    return Table1Report(list(fixtures), reports, ref)
