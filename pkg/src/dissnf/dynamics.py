"""Numerical integration of original and normalized flows.

The right-hand sides are collapsed at fixed (eps, mu) into a flat list of
Fourier-Taylor terms and evaluated by a compiled Dormand-Prince 5(4) stepper,
which keeps desk-scale runs to 1e8 time units within minutes.  One action
(l = 1) is supported, which covers every bundled system.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .estimates import StabilityReport, _avg_res, hamiltonian_potential
from .normalizer import NormalFormResult
from .series import FourierTaylorSeries
from .system import DissipativeSystem, DriftFunction

DEFAULT_TOL = 1e-10
CSV_HEADERS = {
    "lift": ("t", "x_lift", "y"),
    "orbit": ("x", "y"),
    "energy": ("t", "dEdt_num", "dEdt_closed"),
}


class IntegrationError(RuntimeError):
    """Step-size underflow or non-finite state; carries the last valid state."""

    def __init__(self, message: str, t: float, state: np.ndarray):
        super().__init__(f"{message} at t={t:.17g}")
        self.t = t
        self.state = state


# ---------------------------------------------------------------------------
# compiled right-hand side


class CompiledField:
    """(ydot, xdot) of a one-action field as flat arrays of Fourier-Taylor terms.

    Each term is Re(c(y) e^{i(k x + j t)}) with c a polynomial in y - y0.
    """

    def __init__(self, ydot: FourierTaylorSeries, xdot: FourierTaylorSeries, label: str = ""):
        if ydot.ell != 1:
            raise NotImplementedError("compiled fields are implemented for one action")
        self.label = label
        self.series = (ydot, xdot)
        self.y0 = float(ydot.shape.y0[0])
        ks, js, cr, ci, comp = [], [], [], [], []
        for idx, f in enumerate((ydot, xdot)):
            for m, c in zip(f.modes, f.coefs):
                if not np.any(c):
                    continue
                ks.append(int(m[0]))
                js.append(int(m[1]))
                cr.append(c.real)
                ci.append(c.imag)
                comp.append(idx)
        deg = ydot.shape.basis.size
        self.k = np.array(ks, dtype=np.float64)
        self.j = np.array(js, dtype=np.float64)
        self.cr = np.array(cr, dtype=np.float64).reshape(-1, deg)
        self.ci = np.array(ci, dtype=np.float64).reshape(-1, deg)
        self.comp = np.array(comp, dtype=np.int64)

    def __call__(self, t: float, state) -> np.ndarray:
        out = np.zeros(2)
        _rhs(float(t), np.asarray(state, dtype=float), self.y0, self.k, self.j, self.cr, self.ci, self.comp, out)
        return out

    def evaluate(self, t, y, x) -> tuple:
        """Vectorized (ydot, xdot) on arrays of samples."""
        ydot, xdot = self.series
        return ydot.evaluate(y, x, t), xdot.evaluate(y, x, t)


@numba.njit(cache=True)
def _rhs(t, z, y0, k, j, cr, ci, comp, out):
    dy = z[0] - y0
    out[0] = 0.0
    out[1] = 0.0
    deg = cr.shape[1]
    for m in range(k.shape[0]):
        pr = 0.0
        pi = 0.0
        for d in range(deg - 1, -1, -1):
            pr = pr * dy + cr[m, d]
            pi = pi * dy + ci[m, d]
        if k[m] == 0.0 and j[m] == 0.0:
            out[comp[m]] += pr
        else:
            th = k[m] * z[1] + j[m] * t
            out[comp[m]] += pr * math.cos(th) - pi * math.sin(th)


def original_field(sys: DissipativeSystem, eps: float, mu: float, eta: DriftFunction | None = None) -> CompiledField:
    """ydot = -eps h10_x - mu (g01 - eta), xdot = omega + eps h10_y + mu f01."""
    if eta is not None and eta.variables != "old":
        raise ValueError("the original system needs the drift in original variables")
    ydot = -sys.h10.diff("x").scale(eps) - sys.g01[0].scale(mu)
    if eta is not None:
        ydot = ydot + eta.components[0].at(eps, mu).scale(mu)
    xdot = sys.omega[0] + sys.h10.diff("y").scale(eps) + sys.f01[0].scale(mu)
    return CompiledField(ydot, xdot, f"{sys.name} original")


def normalized_field(nf: NormalFormResult, eps: float, mu: float) -> CompiledField:
    """Average and resonant part of the transformed field through order N."""
    part = nf.normal_part()
    return CompiledField(part.y[0].at(eps, mu), part.x[0].at(eps, mu), f"{nf.system.name} normal form N={nf.order}")


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@numba.njit(cache=True)
def _dopri(t0, z0, times, tol, h0, max_steps, y0, k, j, cr, ci, comp, A, B, C, E, out):
    """Integrate and store the state at every entry of ``times``.

    The field is 2 pi periodic in x and t, so both are stepped as phases in
    [0, 2 pi) with whole turns counted separately; this keeps round-off of the
    phases at machine precision on long runs.  Stored x is the lift.

    Returns (status, n_stored, steps, rejected, t_last, z_last); status 0 is
    success, 1 step underflow, 2 step budget exhausted, 3 non-finite state.
    """
    twopi = 2.0 * math.pi
    n = z0.shape[0]
    z = z0.copy()
    xturns = math.floor(z[1] / twopi)
    z[1] -= xturns * twopi
    tturns = math.floor(t0 / twopi)
    tw = t0 - tturns * twopi
    K = np.zeros((7, n))
    tmp = np.zeros(n)
    znew = np.zeros(n)
    _rhs(tw, z, y0, k, j, cr, ci, comp, K[0])
    h = h0
    facold = 1e-4
    last_rejected = False
    steps = 0
    rejected = 0
    idx = 0
    t = t0
    while idx < times.shape[0] and times[idx] <= t:
        out[idx, 0] = z[0]
        out[idx, 1] = z[1] + xturns * twopi
        idx += 1
    while idx < times.shape[0]:
        if steps + rejected >= max_steps:
            z[1] += xturns * twopi
            return 2, idx, steps, rejected, t, z
        rem = (times[idx] - tturns * twopi) - tw
        clipped = False
        hs = h
        if hs >= rem:
            hs = rem
            clipped = True
        if hs <= 1e-13 * max(1.0, tw):
            if not clipped:
                z[1] += xturns * twopi
                return 1, idx, steps, rejected, t, z
            # sample time within rounding of the current time
            t = times[idx]
            while idx < times.shape[0] and times[idx] <= t:
                out[idx, 0] = z[0]
                out[idx, 1] = z[1] + xturns * twopi
                idx += 1
            continue
        for s in range(1, 7):
            for q in range(n):
                acc = 0.0
                for r in range(s):
                    acc += A[s, r] * K[r, q]
                tmp[q] = z[q] + hs * acc
            _rhs(tw + C[s] * hs, tmp, y0, k, j, cr, ci, comp, K[s])
        # tmp now holds the 5th-order solution (row 6 of A equals B)
        err = 0.0
        for q in range(n):
            znew[q] = tmp[q]
            e = 0.0
            for r in range(7):
                e += E[r] * K[r, q]
            # the wrapped angle gets a purely absolute tolerance
            sc = tol if q == 1 else tol + tol * max(abs(z[q]), abs(znew[q]))
            err += (hs * e / sc) ** 2
        err = math.sqrt(err / n)
        if not math.isfinite(err):
            z[1] += xturns * twopi
            return 3, idx, steps, rejected, t, z
        if err <= 1.0:
            tw += hs
            for q in range(n):
                z[q] = znew[q]
                K[0, q] = K[6, q]
            if clipped:
                t = times[idx]
            else:
                t = tturns * twopi + tw
            # rewrap the phases; the stored derivative is unchanged by periodicity
            if tw >= twopi:
                wt = math.floor(tw / twopi)
                tw -= wt * twopi
                tturns += wt
            if z[1] >= twopi or z[1] < 0.0:
                wx = math.floor(z[1] / twopi)
                z[1] -= wx * twopi
                xturns += wx
            steps += 1
            # PI step-size control (beta = 0.04), growth in [0.2, 10]
            fac11 = max(err, 1e-300) ** 0.17
            fac = fac11 / facold ** 0.04
            fac = max(0.1, min(5.0, fac / 0.9))
            hn = hs / fac
            if last_rejected:
                hn = min(hn, hs)
            facold = max(err, 1e-4)
            last_rejected = False
            # a clipped step says nothing about the free step size
            h = max(h, hn) if clipped else hn
            while idx < times.shape[0] and times[idx] <= t:
                out[idx, 0] = z[0]
                out[idx, 1] = z[1] + xturns * twopi
                idx += 1
        else:
            rejected += 1
            last_rejected = True
            h = hs / min(5.0, err ** 0.17 / 0.9)
    z[1] += xturns * twopi
    return 0, idx, steps, rejected, t, z


@dataclass
class Trajectory:
    """Samples of one integration; ``x`` is the continuous lift of the angle."""

    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    label: str = ""
    stats: dict = field(default_factory=dict)
    stopped_early: bool = False

    @property
    def lift_x(self) -> np.ndarray:
        return self.x

    @property
    def samples(self) -> list:
        return list(zip(self.t.tolist(), self.y.tolist(), self.x.tolist()))

    def __len__(self) -> int:
        return len(self.t)


def sample_times(t_end: float, n_samples: int | None = None, stride: float | None = None,
                 t0: float = 0.0) -> np.ndarray:
    if t_end <= t0:
        raise ValueError("t_end must exceed the initial time")
    if stride is not None:
        if stride <= 0:
            raise ValueError("stride must be positive")
        n = int(math.floor((t_end - t0) / stride + 1e-9))
        times = t0 + stride * np.arange(n + 1)
        if times[-1] < t_end:
            times = np.append(times, t_end)
        return times
    n = 1001 if n_samples is None else int(n_samples)
    return np.linspace(t0, t_end, max(n, 2))


def integrate(fld: CompiledField, ic: Sequence[float], t_end: float, tol: float = DEFAULT_TOL, *,
              n_samples: int | None = None, stride: float | None = None, t0: float = 0.0,
              max_steps: int = 2_000_000_000, monitor: Callable | None = None,
              chunk: float | None = None) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) solution of the field from ``ic = (y, x)``.

    Parameters
    ----------
    tol : float
        Absolute and relative local error tolerance.
    n_samples, stride
        Output grid: ``stride`` spacing wins over ``n_samples`` equally spaced points.
    monitor : callable, optional
        ``monitor(traj_so_far) -> bool`` called after every ``chunk`` time
        units; returning True stops the run (used for attractor proximity).

    Raises
    ------
    IntegrationError
        On step-size underflow or a non-finite state.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    times = sample_times(t_end, n_samples, stride, t0)
    z = np.array([float(ic[0]), float(ic[1])])
    out = np.full((len(times), 2), np.nan)
    h = min(0.1, (t_end - t0) / 10)
    stats = {"steps": 0, "rejected": 0, "tol": tol}
    bounds = [len(times)]
    if monitor is not None:
        chunk = chunk or (t_end - t0) / 100
        edges = np.arange(t0 + chunk, t_end, chunk)
        bounds = list(np.searchsorted(times, edges, side="right")) + [len(times)]
    start, t = 0, t0
    stopped = False
    for stop in bounds:
        if stop <= start:
            continue
        seg = times[start:stop]
        status, nst, steps, rej, t_last, z_last = _dopri(
            t, z, seg, tol, h, max_steps, fld.y0, fld.k, fld.j, fld.cr, fld.ci, fld.comp,
            _A, _B, _C, _E, out[start:stop])
        stats["steps"] += int(steps)
        stats["rejected"] += int(rej)
        if status != 0:
            why = {1: "step-size underflow", 2: "step budget exhausted", 3: "non-finite state"}[int(status)]
            raise IntegrationError(why, float(t_last), np.array(z_last))
        t, z = float(t_last), np.array(z_last)
        start = stop
        if monitor is not None and stop < len(times):
            partial = Trajectory(times[:stop], out[:stop, 0], out[:stop, 1], fld.label, dict(stats))
            if monitor(partial):
                stopped = True
                break
    n = start
    return Trajectory(times[:n].copy(), out[:n, 0].copy(), out[:n, 1].copy(), fld.label, stats, stopped)


# ---------------------------------------------------------------------------
# energy of the normal form


def normal_form_hamiltonian(nf: NormalFormResult, eps: float) -> FourierTaylorSeries:
    """h00 + sum_i eps^i p_i, the Hamiltonian of the mu = 0 normal part."""
    h = nf.system.h00()
    for i in range(1, nf.order + 1):
        xi = _avg_res(nf.field.x[0][(i, 0)], nf.resonance)
        yi = _avg_res(nf.field.y[0][(i, 0)], nf.resonance)
        ui = _avg_res(nf.field.u[(i, 0)], nf.resonance)
        h = h + hamiltonian_potential(xi, yi, ui).scale(eps ** i)
    return h


@dataclass
class EnergyTrace:
    """Energy samples; ``E`` is h(Y, X, t) without the time-conjugate action U.

    ``dEdt_num`` is the rate of h + U, the quantity whose closed form is known.
    """

    t: np.ndarray
    E: np.ndarray
    dEdt_num: np.ndarray
    dEdt_closed: np.ndarray | None

    @property
    def samples(self) -> list:
        closed = self.dEdt_closed if self.dEdt_closed is not None else [None] * len(self.t)
        return list(zip(self.t.tolist(), self.E.tolist(), self.dEdt_num.tolist(), list(closed)))

    def max_deviation(self) -> float:
        ref = 0.0 if self.dEdt_closed is None else self.dEdt_closed
        return float(np.max(np.abs(self.dEdt_num - ref)))


def closed_form_energy_derivative(name: str, X, t, eps: float, mu: float):
    """Leading energy variation of the bundled systems, or None if unknown."""
    X = np.asarray(X, dtype=float)
    if name in ("e19",):
        return -0.5 * eps * mu * (1 - np.cos(2 * X - 2 * np.asarray(t)))
    if name in ("A1", "A2"):
        return np.zeros_like(X)
    return None


def energy_derivative(nf: NormalFormResult, traj: Trajectory, eps: float, mu: float) -> EnergyTrace:
    """dE/dt along a normalized trajectory by the chain rule.

    E = h + U with h from :func:`normal_form_hamiltonian`.  In the
    non-extended phase space U is the conjugate of t, so dU/dt = -h_t.
    """
    h = normal_form_hamiltonian(nf, eps)
    part = nf.normal_part()
    Y, X, t = traj.y, traj.x, traj.t
    Yd = part.y[0].at(eps, mu).evaluate(Y, X, t)
    Xd = part.x[0].at(eps, mu).evaluate(Y, X, t)
    dE = h.diff("y").evaluate(Y, X, t) * Yd + h.diff("x").evaluate(Y, X, t) * Xd
    if nf.u_enabled:
        dE = dE + h.diff("t").evaluate(Y, X, t) + part.u.at(eps, mu).evaluate(Y, X, t)
    closed = closed_form_energy_derivative(nf.system.name, X, t, eps, mu)
    return EnergyTrace(t.copy(), h.evaluate(Y, X, t), dE, closed)


# ---------------------------------------------------------------------------
# action drift and flow comparison


@dataclass
class DriftRecord:
    sup_drift: float
    bound: float
    first_crossing: float | None
    t_checked: float
    T: float
    respected: bool


def action_drift(traj: Trajectory, report: StabilityReport | None = None, bound: float | None = None) -> DriftRecord:
    """sup |y(t) - y(0)| against 2 C_p lam + rho, up to min(t_end, T)."""
    if bound is None:
        if report is None:
            raise ValueError("need a report or an explicit bound")
        bound = report.total_action_bound()
    T = report.T if report is not None else math.inf
    horizon = min(traj.t[-1], T)
    mask = traj.t <= horizon
    d = np.abs(traj.y[mask] - traj.y[0])
    over = np.nonzero(d > bound)[0]
    first = float(traj.t[mask][over[0]]) if len(over) else None
    return DriftRecord(float(d.max()), float(bound), first, float(horizon), float(T), first is None)


@dataclass
class FlowComparison:
    t: np.ndarray
    deviation: np.ndarray  # max(|dy|, |dx|) per sample
    max_deviation: float
    lam: float
    order: int
    fitted_C: float
    original: Trajectory
    normalized: Trajectory


def compare_flows(sys: DissipativeSystem, nf: NormalFormResult, ic: Sequence[float], t_end: float,
                  eps: float, mu: float, tol: float = DEFAULT_TOL, n_samples: int = 1001) -> FlowComparison:
    """Integrate the original and the normalized system and compare in original variables.

    The original system carries the drift of ``nf``.  The initial condition
    ``(y, x)`` is mapped forward, the normalized trajectory is pulled back,
    and the fitted constant is max deviation / (lam^{N+1} t_end).
    """
    y0, x0 = float(ic[0]), float(ic[1])
    orig = integrate(original_field(sys, eps, mu, nf.eta_old()), (y0, x0), t_end, tol, n_samples=n_samples)
    Y0, X0, _, _ = nf.transform_state((y0, x0, 0.0, 0.0), eps, mu, "forward")
    norm = integrate(normalized_field(nf, eps, mu), (float(Y0), float(X0)), t_end, tol, n_samples=n_samples)
    yb, xb, _, _ = nf.transform_state((norm.y, norm.x, np.zeros_like(norm.t), norm.t), eps, mu, "backward")
    dev = np.maximum(np.abs(yb - orig.y), np.abs(xb - orig.x))
    lam = max(eps, mu)
    scale = lam ** (nf.order + 1) * t_end
    C = float(dev.max() / scale) if scale > 0 else (0.0 if dev.max() == 0 else math.inf)
    return FlowComparison(orig.t, dev, float(dev.max()), lam, nf.order, C, orig, norm)


def drift_monitor(bound: float) -> Callable:
    """Stop as soon as |y(t) - y(0)| exceeds ``bound``; the verdict is then settled."""
    def check(traj: Trajectory) -> bool:
        return bool(np.any(np.abs(traj.y - traj.y[0]) > bound))
    return check


def stability_run(sys: DissipativeSystem, nf: NormalFormResult, report: StabilityReport, t_end: float,
                  ic: Sequence[float] | None = None, tol: float = DEFAULT_TOL, n_samples: int = 100001,
                  chunk: float | None = None) -> tuple:
    """Original system with the computed drift at the report's (eps, mu).

    Integrates to min(t_end, T) and stops at the first crossing of the
    action bound.  Returns (trajectory, drift record).
    """
    ic = (sys.y0[0], sys.x0[0]) if ic is None else ic
    horizon = min(t_end, report.T)
    fld = original_field(sys, report.eps, report.mu, nf.eta_old())
    bound = report.total_action_bound()
    chunk = chunk or max(horizon / 1000, 10.0)
    traj = integrate(fld, ic, horizon, tol, n_samples=n_samples, monitor=drift_monitor(bound), chunk=chunk)
    return traj, action_drift(traj, report)


def attractor_monitor(nf: NormalFormResult, eps: float, mu: float, window: float = 1e3,
                      fraction: float = 1e-3) -> Callable:
    """Stop once |dE/dt| stays below ``fraction`` of its initial value for ``window`` time units."""
    def check(traj: Trajectory) -> bool:
        tr = energy_derivative(nf, traj, eps, mu)
        ref = abs(tr.dEdt_num[0])
        if ref == 0:
            return False
        small = np.abs(tr.dEdt_num) < fraction * ref
        if not small[-1]:
            return False
        last_big = np.nonzero(~small)[0]
        since = tr.t[last_big[-1] + 1] if len(last_big) else tr.t[0]
        return tr.t[-1] - since >= window
    return check


# ---------------------------------------------------------------------------
# figure data


def emit_figure_data(traj: Trajectory, energy: EnergyTrace | None, path, prefix: str = "fig",
                     original: Trajectory | None = None) -> list:
    """Write ``<prefix>_lift.csv``, ``<prefix>_orbit.csv`` and ``<prefix>_energy.csv``.

    ``traj`` feeds the lift file; the orbit file uses ``original`` (the
    trajectory in original variables) when given, else ``traj``.  Returns the
    written paths.
    """
    os.makedirs(path, exist_ok=True)
    written = []

    def dump(kind, rows):
        fn = os.path.join(path, f"{prefix}_{kind}.csv")
        with open(fn, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADERS[kind])
            for r in rows:
                w.writerow([v if isinstance(v, str) else repr(float(v) + 0.0) for v in r])  # no -0.0
        written.append(fn)

    dump("lift", zip(traj.t, traj.x, traj.y))
    orb = original if original is not None else traj
    dump("orbit", zip(np.mod(orb.x, 2 * np.pi), orb.y))
    if energy is not None:
        closed = energy.dEdt_closed if energy.dEdt_closed is not None else ["" for _ in energy.t]
        dump("energy", zip(energy.t, energy.dEdt_num, closed))
    return written
