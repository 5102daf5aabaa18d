"""Dissipative nearly-integrable vector fields and the bundled example systems.

The field on A x T^l x T (angles x, actions y, time t) is

    xdot = omega(y) + eps h10_y + mu f01
    ydot = -eps h10_x - mu (g01 - eta)
    udot = -eps h10_t + mu sigma          (extended phase space, u conjugate to t)

with eta (and sigma) the drift functions fixed by the normal form.
Systems are described by JSON config files; see :func:`build_system`.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .series import (
    CHEBYSHEV_POINTS,
    FourierTaylorSeries,
    GradedSeries,
    ResonanceStructure,
    SeriesShape,
    mode_order,
)

FIXTURES = ("e19", "e20", "A1", "A2")
RADII_KEYS = ("r0", "r0_tilde", "r0_tilde_prime", "R0", "s0", "s0_tilde", "S0")


class ConfigurationError(ValueError):
    """A system description is malformed or violates its resonance assumptions."""


class DomainWarning(UserWarning):
    """A state lies outside the radius where the Taylor surrogate is trusted."""


@dataclass(frozen=True)
class DomainRadii:
    """Action radii r0 > r0~ > r0~' > R0 and strip radii s0 > s0~ > S0."""

    r0: float
    r0_tilde: float
    r0_tilde_prime: float
    R0: float
    s0: float
    s0_tilde: float
    S0: float
    delta: float = 0.01

    def __post_init__(self):
        if not (self.r0 > self.r0_tilde > self.r0_tilde_prime > self.R0 > 0):
            raise ConfigurationError("need r0 > r0_tilde > r0_tilde_prime > R0 > 0")
        if not (self.s0 > self.s0_tilde > self.S0 > 0):
            raise ConfigurationError("need s0 > s0_tilde > S0 > 0")

    @property
    def delta0(self) -> float:
        """Strip decrement of the conservative step."""
        return self.s0 - self.s0_tilde

    @property
    def delta0_tilde(self) -> float:
        """Strip decrement of the dissipative step, half of s0~."""
        return self.s0_tilde / 2

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in RADII_KEYS + ("delta",)}


@dataclass(frozen=True)
class QuasiConvexityData:
    """Constants of the quasi-convexity hypothesis on h0 = h00(y) + u."""

    L: float
    M: float
    m: float
    h00_third: float


@dataclass(frozen=True)
class DissipativeSystem:
    name: str
    ell: int
    shape: SeriesShape
    omega: tuple  # action-only series, one per angle
    h10: FourierTaylorSeries
    f01: tuple
    g01: tuple
    y0: tuple
    x0: tuple
    resonance: ResonanceStructure
    radii: DomainRadii
    config: dict = field(default=None, compare=False, repr=False)

    @property
    def y_variable(self):
        return [FourierTaylorSeries.action_variable(self.shape, m) for m in range(self.ell)]

    def h00(self) -> FourierTaylorSeries:
        """Unperturbed Hamiltonian with h00_y = omega, zero at y0 (l = 1 only)."""
        if self.ell != 1:
            raise NotImplementedError("h00 reconstruction is implemented for one action")
        return self.omega[0].integrate_y(0)

    def quasi_convexity(self, radius: float | None = None, L: float | None = None) -> QuasiConvexityData:
        """Hessian bounds of h00 on the real action ball of the given radius."""
        radius = self.radii.r0 if radius is None else radius
        pts = _sample_actions(self.ell, self.y0, radius)
        hess = np.zeros((len(pts), self.ell, self.ell))
        third = np.zeros(len(pts))
        zeros = np.zeros((len(pts), self.ell))
        tz = np.zeros(len(pts))
        for a in range(self.ell):
            for b in range(self.ell):
                d = self.omega[a].diff("y", b)
                hess[:, a, b] = d.evaluate(_sq(pts, self.ell), _sq(zeros, self.ell), tz)
                for c in range(self.ell):
                    third = np.maximum(third, np.abs(d.diff("y", c).evaluate(_sq(pts, self.ell), _sq(zeros, self.ell), tz)))
        eig = np.linalg.eigvalsh(hess)
        m = float(np.abs(eig).max())
        M = float(eig.min())
        return QuasiConvexityData(L=1.0 if L is None else L, M=M, m=m, h00_third=float(third.max()))

    def extended(self, u_enabled: bool = True) -> "ExtendedSystem":
        return ExtendedSystem(self, u_enabled)

    def with_expansion(self, y0=None, taylor_cutoff=None) -> "DissipativeSystem":
        """Same system re-expanded about another base point or to another Taylor degree."""
        cfg = dict(self.config)
        if y0 is not None:
            cfg["y0"] = [float(v) for v in np.atleast_1d(y0)]
        if taylor_cutoff is not None:
            cfg["taylor_cutoff"] = int(taylor_cutoff)
        return build_system(cfg, check_margin=False)


@dataclass(frozen=True)
class ExtendedSystem:
    """A system together with the time-conjugate action u."""

    base: DissipativeSystem
    u_enabled: bool = True


class DriftFunction:
    """Drift eta as a parameter-graded vector series.

    ``grades[m]`` holds the coefficient of eps^i mu^j of component m at key
    (i, j); the field uses mu * eta.  ``variables`` records whether the series
    is written in normalized ('new') or original ('old') coordinates.
    """

    def __init__(self, components: Sequence[GradedSeries], variables: str = "new"):
        self.components = list(components)
        self.variables = variables

    def evaluate(self, y, x, t, eps, mu):
        return np.stack([c.evaluate(y, x, t, eps, mu) for c in self.components], axis=-1)

    def dump(self) -> str:
        return "\n".join(f"# component {m}\n{c.dump()}" for m, c in enumerate(self.components))


class FieldValue(NamedTuple):
    ydot: np.ndarray
    xdot: np.ndarray
    warning: str | None


# ---------------------------------------------------------------------------
# construction


def _sq(arr, ell):
    arr = np.asarray(arr)
    return arr[..., 0] if ell == 1 else arr


def _sample_actions(ell, y0, radius, npts=CHEBYSHEV_POINTS):
    nodes = np.cos(np.pi * (np.arange(npts) + 0.5) / npts)
    nodes = np.concatenate([[-1.0, 1.0], nodes])
    grids = np.meshgrid(*[y0[m] + radius * nodes for m in range(ell)], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _action_power(shape, exps):
    """prod_m y_m^exps[m] re-expanded about y0."""
    out = FourierTaylorSeries.constant(shape, 1.0)
    for m, p in enumerate(exps):
        ym = FourierTaylorSeries.action_variable(shape, m)
        for _ in range(int(p)):
            out = out * ym
    return out


def _terms_to_series(shape, terms, what):
    ell = shape.ell
    out = FourierTaylorSeries(shape)
    for term in terms:
        try:
            k = [int(v) for v in term.get("k", [0] * ell)]
            j = int(term.get("j", 0))
            exps = [int(v) for v in term.get("y", [0] * ell)]
            c, s = float(term.get("cos", 0.0)), float(term.get("sin", 0.0))
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigurationError(f"{what}: malformed term {term!r}") from exc
        if len(k) != ell or len(exps) != ell or min(exps) < 0:
            raise ConfigurationError(f"{what}: term {term!r} does not match dimension {ell}")
        if c == 0 and s == 0:
            continue
        trig = FourierTaylorSeries.trig(shape, tuple(k) + (j,), cos=c, sin=s)
        out = out + trig * _action_power(shape, exps)
    return out


def load_config(source) -> dict:
    """Read a config from a path, a JSON string or a mapping."""
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read system config {source}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}: invalid JSON ({exc})") from exc


def build_system(spec, check_margin: bool = True) -> DissipativeSystem:
    """Build a :class:`DissipativeSystem` from a term-list description.

    Parameters
    ----------
    spec : dict or path
        Keys: ``ell``, ``y0``, ``omega`` (per component, a list of
        ``{"y": [p...], "c": coeff}`` monomials in the absolute action),
        ``h10``, ``f01``, ``g01`` (lists of ``{"k", "j", "y", "cos", "sin"}``
        terms, one list per component for the vector fields), ``lattice``,
        ``K``, ``radii``, ``delta`` and optionally ``x0``, ``taylor_cutoff``,
        ``fourier_cutoff``.
    check_margin : bool
        Verify that no non-lattice mode of order <= K is resonant on the
        sampled domain |y - y0| <= r0.

    Raises
    ------
    ConfigurationError
        Malformed input, or resonant non-lattice modes on the domain.
    """
    cfg = load_config(spec)
    try:
        ell = int(cfg["ell"])
        y0 = tuple(float(v) for v in cfg["y0"])
        K = int(cfg["K"])
        lattice = [tuple(int(v) for v in g) for g in cfg.get("lattice", [])]
        radii = DomainRadii(**{k: float(cfg["radii"][k]) for k in RADII_KEYS}, delta=float(cfg.get("delta", 0.01)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"system config: missing or invalid field ({exc})") from exc
    if ell < 1 or len(y0) != ell:
        raise ConfigurationError("ell must be positive and y0 must have ell entries")
    if any(len(g) != ell + 1 for g in lattice):
        raise ConfigurationError("lattice generators must have ell + 1 entries")
    D = int(cfg.get("taylor_cutoff", 6))
    KF = int(cfg.get("fourier_cutoff", 2 * K))
    shape = SeriesShape(ell, y0, KF, D)
    x0 = tuple(float(v) for v in cfg.get("x0", [0.0] * ell))

    omega_cfg = cfg.get("omega")
    if omega_cfg is None or len(omega_cfg) != ell:
        raise ConfigurationError("omega must list one polynomial per action")
    omega = []
    for m, poly in enumerate(omega_cfg):
        om = FourierTaylorSeries(shape)
        for mono in poly:
            om = om + _action_power(shape, mono["y"]).scale(float(mono["c"]))
        omega.append(om)
    if ell > 1:
        for a in range(ell):
            for b in range(a + 1, ell):
                if (omega[a].diff("y", b) - omega[b].diff("y", a)).max_abs() > 1e-12:
                    raise ConfigurationError("omega is not a gradient: cross derivatives differ")

    h10 = _terms_to_series(shape, cfg.get("h10", []), "h10")
    f01 = tuple(_terms_to_series(shape, c, "f01") for c in _per_component(cfg.get("f01"), ell))
    g01 = tuple(_terms_to_series(shape, c, "g01") for c in _per_component(cfg.get("g01"), ell))

    om0 = np.array([o.evaluate(np.array(y0) if ell > 1 else y0[0], np.zeros(ell) if ell > 1 else 0.0, 0.0) for o in omega])
    if not np.all(np.isfinite(om0)):
        raise ConfigurationError("omega(y0) is not finite")

    res = ResonanceStructure(lattice, K)
    margin, violators = nonresonance_margin(omega, res, y0, radii.r0)
    if check_margin and violators:
        listed = ", ".join(str(v) for v in violators[:10])
        raise ConfigurationError(f"lattice misses resonant modes on the domain: {listed}")
    res = res.with_margin(margin)
    return DissipativeSystem(
        name=str(cfg.get("name", "custom")), ell=ell, shape=shape, omega=tuple(omega), h10=h10,
        f01=f01, g01=g01, y0=y0, x0=x0, resonance=res, radii=radii, config=cfg,
    )


def _per_component(block, ell):
    if block is None:
        return [[] for _ in range(ell)]
    if len(block) != ell or not all(isinstance(b, list) for b in block):
        raise ConfigurationError("vector terms must be given as one list per action")
    return block


def nonresonance_margin(omega, res: ResonanceStructure, y0, radius):
    """min |omega(y).k + j| over non-lattice modes of order <= K on the sampled ball.

    Returns the margin and the list of non-lattice modes whose divisor
    changes sign or vanishes on the domain.
    """
    ell = len(omega)
    pts = _sample_actions(ell, y0, radius)
    z = np.zeros(len(pts))
    vals = np.stack([o.evaluate(_sq(pts, ell), _sq(np.zeros_like(pts), ell), z) for o in omega], axis=-1)
    best = math.inf
    bad = []
    for mode in _modes_upto(ell, res.K):
        if not any(mode) or res.contains(mode):
            continue
        d = vals @ np.array(mode[:ell], dtype=float) + mode[ell]
        if d.min() <= 0 <= d.max():
            bad.append(mode)
            continue
        best = min(best, float(np.abs(d).min()))
    return best, bad


def _modes_upto(ell, K):
    """Canonical modes (first non-zero entry positive) of order <= K."""
    from itertools import product

    for mode in product(range(-K, K + 1), repeat=ell + 1):
        if mode_order(mode) > K:
            continue
        first = next((v for v in mode if v), 0)
        if first > 0:
            yield mode


# ---------------------------------------------------------------------------
# fixtures


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    return Path(str(resources.files("dissnf") / "systems" / f"{name}.json"))


def fixture(name: str, **overrides) -> DissipativeSystem:
    """One of the bundled example systems (e19, e20, A1, A2)."""
    cfg = json.loads(fixture_path(name).read_text())
    cfg.update(overrides)
    return build_system(cfg)


def resolve_system(ref: str) -> DissipativeSystem:
    """Fixture name or path to a config file."""
    if ref in FIXTURES:
        return fixture(ref)
    return build_system(load_config(ref))


# ---------------------------------------------------------------------------
# evaluation


def field_series(sys: DissipativeSystem, order: int):
    """Original field without drift as graded series (xdot, ydot, udot) per action."""
    shape = sys.shape
    ell = sys.ell
    xdot, ydot = [], []
    for m in range(ell):
        xd = GradedSeries(shape, order, {(0, 0): sys.omega[m], (1, 0): sys.h10.diff("y", m), (0, 1): sys.f01[m]})
        yd = GradedSeries(shape, order, {(1, 0): -sys.h10.diff("x", m), (0, 1): -sys.g01[m]})
        xdot.append(xd)
        ydot.append(yd)
    udot = GradedSeries(shape, order, {(1, 0): -sys.h10.diff("t")})
    return xdot, ydot, udot


def eval_vector_field(sys: DissipativeSystem, eta, state, eps: float, mu: float) -> FieldValue:
    """Right-hand side (ydot, xdot) of the system at ``state = (y, x, t)``.

    ``eta`` is a :class:`DriftFunction` in the coordinates of ``state``, a
    callable ``eta(y, x, t)`` or ``None`` (no drift).  States farther than r0
    from y0 get a :class:`DomainWarning` attached to the result.
    """
    y, x, t = state
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    ell = sys.ell
    ya = y[..., None] if ell == 1 else y
    warning = None
    if np.any(np.abs(ya - np.asarray(sys.y0)) > sys.radii.r0):
        warning = f"action outside |y - y0| <= r0 = {sys.radii.r0}; Taylor surrogate may be inaccurate"
        warnings.warn(warning, DomainWarning, stacklevel=2)
    if eta is None:
        eta_val = np.zeros(np.broadcast_shapes(ya.shape, (ell,)))
    elif isinstance(eta, DriftFunction):
        eta_val = eta.evaluate(y, x, t, eps, mu)
    else:
        eta_val = np.asarray(eta(y, x, t), dtype=float)
        if ell == 1 and eta_val.shape == np.shape(y):
            eta_val = eta_val[..., None]
    xdots, ydots = [], []
    for m in range(ell):
        xd = sys.omega[m](y, x, t) + eps * sys.h10.diff("y", m)(y, x, t) + mu * sys.f01[m](y, x, t)
        yd = -eps * sys.h10.diff("x", m)(y, x, t) - mu * (sys.g01[m](y, x, t) - eta_val[..., m])
        xdots.append(xd)
        ydots.append(yd)
    if ell == 1:
        return FieldValue(ydots[0], xdots[0], warning)
    return FieldValue(np.stack(ydots, -1), np.stack(xdots, -1), warning)


def divergence(sys: DissipativeSystem, state, eps: float, mu: float) -> np.ndarray:
    """Divergence of the (x, y) field with the drift held fixed.

    The conservative part is divergence-free, so only mu (f01_x - g01_y) remains.
    """
    y, x, t = state
    total = 0.0
    for m in range(sys.ell):
        total = total + mu * sys.f01[m].diff("x", m)(y, x, t) - mu * sys.g01[m].diff("y", m)(y, x, t)
    return total
