"""Sparse Fourier-Taylor series on A x T^(l+1) and their parameter-graded sums.

A :class:`FourierTaylorSeries` represents a real function

    f(y, x, t) = sum_m Re( c_m(y) exp(i (k.x + j t)) )

where the sum runs over *canonical* Fourier modes m = (k, j) (first non-zero
entry positive, plus the zero mode) and every c_m is a complex Taylor
polynomial in (y - y0).  Storing one representative per conjugate pair is the
sine/cosine pairing: Re(c e^{i theta}) = Re(c) cos(theta) - Im(c) sin(theta).

A :class:`GradedSeries` is a finite sum  sum_{i+j<=N} eps^i mu^j f_ij  with
Fourier-Taylor coefficients, used for every field and every transformation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product as iproduct
from typing import Iterable, Mapping, Sequence

import numpy as np

ZERO_RTOL = 1e-14
DEFAULT_TAYLOR_CUTOFF = 6
CHEBYSHEV_POINTS = 33


class StructuralError(ValueError):
    """Operands do not share base point, dimension or cutoffs."""


class SingularDivisorError(ArithmeticError):
    """A homological divisor omega(y0).k + j fell below the admissible floor."""

    def __init__(self, mode, divisor, floor):
        self.mode = tuple(int(v) for v in mode)
        self.divisor = float(divisor)
        self.floor = float(floor)
        super().__init__(
            f"divisor |omega(y0).k + j| = {abs(divisor):.3e} below floor {floor:.3e} "
            f"for mode (k, j) = {self.mode}"
        )


class ResonantInputError(RuntimeError):
    """The homological solver received average, resonant or tail modes."""


# ---------------------------------------------------------------------------
# Taylor monomial basis


class TaylorBasis:
    """Monomials (y - y0)^e with |e| <= D in l variables, graded-lex order."""

    def __init__(self, ell: int, degree: int):
        self.ell = ell
        self.degree = degree
        exps = [e for d in range(degree + 1) for e in _exponents_of_degree(ell, d)]
        self.exponents = np.array(exps, dtype=np.int64).reshape(len(exps), ell)
        self.size = len(exps)
        self.index = {tuple(e): n for n, e in enumerate(exps)}
        self.total_degree = self.exponents.sum(axis=1)

        # multiplication tensor: mono_a * mono_b = mono_c (dropped if deg > D)
        mult = np.zeros((self.size, self.size, self.size))
        for a, ea in enumerate(exps):
            for b, eb in enumerate(exps):
                c = self.index.get(tuple(u + v for u, v in zip(ea, eb)))
                if c is not None:
                    mult[a, b, c] = 1.0
        self.mult = mult

        # d/dy_m as a matrix acting on coefficient vectors (row vector convention)
        self.deriv = []
        for m in range(ell):
            mat = np.zeros((self.size, self.size))
            for a, ea in enumerate(exps):
                if ea[m] == 0:
                    continue
                e = list(ea)
                e[m] -= 1
                mat[a, self.index[tuple(e)]] = ea[m]
            self.deriv.append(mat)

    def monomials(self, dy: np.ndarray) -> np.ndarray:
        """Values of every monomial at offsets ``dy`` of shape (P, l)."""
        dy = np.asarray(dy, dtype=complex).reshape(-1, self.ell)
        out = np.ones((dy.shape[0], self.size), dtype=complex)
        for m in range(self.ell):
            powers = dy[:, m : m + 1] ** np.arange(self.degree + 1)
            out *= powers[:, self.exponents[:, m]]
        return out

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Truncated product of coefficient vectors (broadcast over leading axes)."""
        return np.einsum("...a,...b,abc->...c", a, b, self.mult, optimize=True)


def _exponents_of_degree(ell, d):
    if ell == 1:
        return [(d,)]
    out = []
    for first in range(d, -1, -1):
        for rest in _exponents_of_degree(ell - 1, d - first):
            out.append((first,) + rest)
    return out


@lru_cache(maxsize=None)
def taylor_basis(ell: int, degree: int) -> TaylorBasis:
    return TaylorBasis(ell, degree)


# ---------------------------------------------------------------------------
# modes


def mode_order(mode) -> int:
    return int(sum(abs(int(v)) for v in mode))


def canonical(mode):
    """Return (canonical_mode, flipped) with the first non-zero entry positive."""
    for v in mode:
        if v > 0:
            return tuple(mode), False
        if v < 0:
            return tuple(-int(u) for u in mode), True
    return tuple(mode), False


def _canonicalize_rows(modes: np.ndarray, coefs: np.ndarray):
    if modes.size == 0:
        return modes, coefs
    nz = modes != 0
    first = np.argmax(nz, axis=1)
    lead = modes[np.arange(len(modes)), first]
    flip = lead < 0
    modes = np.where(flip[:, None], -modes, modes)
    coefs = np.where(flip[:, None], np.conj(coefs), coefs)
    return modes, coefs


# ---------------------------------------------------------------------------
# resonance structure


class ResonanceStructure:
    """Integer lattice Lambda in Z^(l+1), Fourier cutoff K and margin a."""

    def __init__(self, generators: Sequence[Sequence[int]], K: int, a: float = float("nan")):
        gens = [tuple(int(v) for v in g) for g in generators]
        if gens and len({len(g) for g in gens}) != 1:
            raise StructuralError("lattice generators must share a length")
        if K <= 0:
            raise ValueError("K must be a positive integer")
        self.generators = gens
        self.K = int(K)
        self.a = float(a)
        self._echelon = _integer_echelon(gens)
        self._cache: dict = {}

    def with_margin(self, a: float) -> "ResonanceStructure":
        return ResonanceStructure(self.generators, self.K, a)

    def contains(self, mode) -> bool:
        """Exact integer-span membership test."""
        mode = tuple(int(v) for v in mode)
        hit = self._cache.get(mode)
        if hit is None:
            hit = _in_span(self._echelon, mode)
            self._cache[mode] = hit
        return hit

    def classify(self, mode) -> str:
        """One of 'average', 'resonant', 'nonresonant', 'tail'."""
        if not any(mode):
            return "average"
        if mode_order(mode) > self.K:
            return "tail"
        return "resonant" if self.contains(mode) else "nonresonant"

    def __repr__(self):
        return f"ResonanceStructure(generators={self.generators}, K={self.K}, a={self.a:.6g})"


def _integer_echelon(gens):
    rows = [list(g) for g in gens if any(g)]
    if not rows:
        return []
    ncol = len(rows[0])
    out = []
    col = 0
    while rows and col < ncol:
        piv = [r for r in rows if r[col] != 0]
        rest = [r for r in rows if r[col] == 0]
        while len(piv) > 1:
            piv.sort(key=lambda r: abs(r[col]))
            p = piv[0]
            new = [p]
            for r in piv[1:]:
                q = r[col] // p[col]
                r = [u - q * v for u, v in zip(r, p)]
                (new if r[col] != 0 else rest).append(r)
            piv = new
        if piv:
            p = piv[0]
            if p[col] < 0:
                p = [-u for u in p]
            out.append((col, p))
        rows = [r for r in rest if any(r)]
        col += 1
    return out


def _in_span(echelon, vec):
    v = list(vec)
    for col, p in echelon:
        if v[col] % p[col]:
            return False
        q = v[col] // p[col]
        v = [u - q * w for u, w in zip(v, p)]
    return not any(v)


# ---------------------------------------------------------------------------
# Fourier-Taylor series


@dataclass(frozen=True)
class SeriesShape:
    ell: int
    y0: tuple
    fourier_cutoff: int
    taylor_cutoff: int

    @property
    def basis(self) -> TaylorBasis:
        return taylor_basis(self.ell, self.taylor_cutoff)

    def zero(self) -> "FourierTaylorSeries":
        return FourierTaylorSeries(self)


class FourierTaylorSeries:
    """Immutable sparse real Fourier-Taylor series.

    Parameters
    ----------
    shape : SeriesShape
        Dimension l, base point y0 and the Fourier/Taylor cutoffs.
    modes : array of shape (M, l+1), optional
        Integer Fourier modes (k_1..k_l, j); need not be canonical or unique.
    coefs : complex array of shape (M, n_monomials), optional
        Taylor coefficients of c_m(y) for each mode.
    """

    __slots__ = ("shape", "modes", "coefs", "truncated", "_rows")

    def __init__(self, shape: SeriesShape, modes=None, coefs=None, truncated=False, _clean=False):
        self.shape = shape
        n = shape.basis.size
        if modes is None:
            modes = np.zeros((0, shape.ell + 1), dtype=np.int64)
            coefs = np.zeros((0, n), dtype=complex)
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, shape.ell + 1)
        coefs = np.asarray(coefs, dtype=complex).reshape(-1, n)
        if not _clean:
            modes, coefs, cut = _normalize(shape, modes, coefs)
            truncated = truncated or cut
        self.modes = modes
        self.coefs = coefs
        self.truncated = bool(truncated)
        self._rows = None

    # -- construction helpers -------------------------------------------------
    @classmethod
    def from_terms(cls, shape: SeriesShape, terms: Iterable) -> "FourierTaylorSeries":
        """Build from (mode, taylor_exponent, complex_coefficient) triples.

        Each triple contributes Re(c (y-y0)^e exp(i theta_mode)).
        """
        basis = shape.basis
        modes, rows = [], []
        for mode, exps, c in terms:
            row = np.zeros(basis.size, dtype=complex)
            exps = (exps,) if np.isscalar(exps) else tuple(exps)
            row[basis.index[exps]] = c
            modes.append(tuple(mode))
            rows.append(row)
        if not modes:
            return cls(shape)
        return cls(shape, np.array(modes), np.array(rows))

    @classmethod
    def trig(cls, shape: SeriesShape, mode, cos=0.0, sin=0.0, taylor=None):
        """a cos(theta) + b sin(theta), optionally times a Taylor polynomial."""
        basis = shape.basis
        poly = np.zeros(basis.size, dtype=complex)
        if taylor is None:
            poly[0] = 1.0
        else:
            taylor = np.asarray(taylor, dtype=complex)
            poly[: len(taylor)] = taylor[: basis.size]
        c = complex(cos, -sin)
        if not any(mode):
            c = complex(cos)
        return cls(shape, np.array([mode]), (c * poly)[None, :])

    @classmethod
    def constant(cls, shape: SeriesShape, value: float):
        return cls.trig(shape, (0,) * (shape.ell + 1), cos=value)

    @classmethod
    def action_polynomial(cls, shape: SeriesShape, coefs) -> "FourierTaylorSeries":
        """Purely action-dependent series with the given monomial coefficients."""
        row = np.zeros(shape.basis.size, dtype=complex)
        coefs = np.asarray(coefs, dtype=float).ravel()
        row[: min(len(coefs), row.size)] = coefs[: row.size]
        return cls(shape, np.zeros((1, shape.ell + 1), dtype=np.int64), row[None, :])

    @classmethod
    def action_variable(cls, shape: SeriesShape, m: int = 0):
        """The coordinate y_m as a series about y0."""
        basis = shape.basis
        row = np.zeros(basis.size, dtype=complex)
        row[0] = shape.y0[m]
        if shape.taylor_cutoff >= 1:
            e = [0] * shape.ell
            e[m] = 1
            row[basis.index[tuple(e)]] = 1.0
        return cls(shape, np.zeros((1, shape.ell + 1), dtype=np.int64), row[None, :])

    # -- basic protocol -------------------------------------------------------
    @property
    def ell(self):
        return self.shape.ell

    def __len__(self):
        return len(self.modes)

    def is_zero(self) -> bool:
        return len(self.modes) == 0

    def rows(self) -> dict:
        if self._rows is None:
            self._rows = {tuple(int(v) for v in m): n for n, m in enumerate(self.modes)}
        return self._rows

    def coefficient(self, mode) -> np.ndarray:
        """Complex Taylor vector c_m of a mode (conjugated for non-canonical input)."""
        cmode, flipped = canonical(tuple(mode))
        n = self.rows().get(cmode)
        if n is None:
            return np.zeros(self.shape.basis.size, dtype=complex)
        c = self.coefs[n]
        return np.conj(c) if flipped else c.copy()

    def _check(self, other):
        if not isinstance(other, FourierTaylorSeries):
            raise StructuralError(f"expected FourierTaylorSeries, got {type(other).__name__}")
        if other.shape != self.shape:
            raise StructuralError(f"shape mismatch: {self.shape} vs {other.shape}")

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if np.isscalar(other):
            other = FourierTaylorSeries.constant(self.shape, float(other))
        self._check(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        return FourierTaylorSeries(
            self.shape,
            np.concatenate([self.modes, other.modes]),
            np.concatenate([self.coefs, other.coefs]),
            truncated=self.truncated or other.truncated,
        )

    __radd__ = __add__

    def __neg__(self):
        return FourierTaylorSeries(self.shape, self.modes, -self.coefs, self.truncated, _clean=True)

    def __sub__(self, other):
        if np.isscalar(other):
            return self + (-float(other))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor: float) -> "FourierTaylorSeries":
        if factor == 0 or self.is_zero():
            return FourierTaylorSeries(self.shape)
        return FourierTaylorSeries(self.shape, self.modes, self.coefs * float(factor), self.truncated)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.scale(other)
        self._check(other)
        return series_mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return self.scale(other)
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return self.scale(1.0 / other)
        return self * taylor_reciprocal(other)

    # -- calculus -------------------------------------------------------------
    def diff(self, var: str, m: int = 0) -> "FourierTaylorSeries":
        """Term-wise derivative; ``var`` is 'x' (angle m), 't' or 'y' (action m)."""
        return series_diff(self, var, m)

    def integrate_y(self, m: int = 0) -> "FourierTaylorSeries":
        """Antiderivative in y_m (zero at y0); the top-degree term is dropped."""
        basis = self.shape.basis
        out = np.zeros_like(self.coefs)
        for a, e in enumerate(basis.exponents):
            e2 = e.copy()
            e2[m] += 1
            c = basis.index.get(tuple(e2))
            if c is not None:
                out[:, c] += self.coefs[:, a] / e2[m]
        return FourierTaylorSeries(self.shape, self.modes, out, truncated=True)

    # -- projections ----------------------------------------------------------
    def filter(self, keep) -> "FourierTaylorSeries":
        mask = np.array([bool(keep(tuple(int(v) for v in m))) for m in self.modes], dtype=bool)
        if mask.size == 0 or mask.all():
            return self
        return FourierTaylorSeries(self.shape, self.modes[mask], self.coefs[mask], self.truncated, _clean=True)

    def project(self, part: str, res: ResonanceStructure) -> "FourierTaylorSeries":
        return project(self, part, res)

    def average(self) -> "FourierTaylorSeries":
        return self.filter(lambda m: not any(m))

    def truncate_fourier(self, K: int) -> "FourierTaylorSeries":
        return self.filter(lambda m: mode_order(m) <= K)

    # -- evaluation -----------------------------------------------------------
    def __call__(self, y, x, t):
        return self.evaluate(y, x, t)

    def evaluate(self, y, x, t) -> np.ndarray:
        """Pointwise real value; y, x have trailing dimension l (or scalars if l=1)."""
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        ell = self.ell
        if ell == 1:
            y = y[..., None]
            x = x[..., None]
        bshape = np.broadcast_shapes(y.shape[:-1], x.shape[:-1], t.shape)
        y = np.broadcast_to(y, bshape + (ell,)).reshape(-1, ell)
        x = np.broadcast_to(x, bshape + (ell,)).reshape(-1, ell)
        t = np.broadcast_to(t, bshape).reshape(-1)
        if self.is_zero():
            return np.zeros(bshape)
        dy = y - np.asarray(self.shape.y0)
        mono = self.shape.basis.monomials(dy)  # (P, n)
        cvals = mono @ self.coefs.T  # (P, M)
        theta = x @ self.modes[:, :ell].T + t[:, None] * self.modes[:, ell][None, :]
        val = np.real(cvals * np.exp(1j * theta)).sum(axis=1)
        return val.reshape(bshape)

    def coefficient_values(self, y) -> np.ndarray:
        """c_m(y) for every stored mode at action points y, shape (P, M)."""
        y = np.asarray(y, dtype=complex).reshape(-1, self.ell)
        mono = self.shape.basis.monomials(y - np.asarray(self.shape.y0))
        return mono @ self.coefs.T

    # -- norms ----------------------------------------------------------------
    def norm(self, r0: float, s0: float, method: str = "sampled") -> float:
        return weighted_norm(self, r0, s0, method)

    def max_abs(self) -> float:
        return float(np.abs(self.coefs).max()) if len(self) else 0.0

    # -- text -----------------------------------------------------------------
    def dump(self) -> str:
        """Plain-text dump, one line per real coefficient, sorted lexicographically.

        Line format: ``(k..., j, e...) kind value`` with kind ``cos`` or ``sin``.
        """
        basis = self.shape.basis
        lines = []
        for n in np.lexsort(self.modes.T[::-1]):
            mode = tuple(int(v) for v in self.modes[n])
            for a, e in enumerate(basis.exponents):
                c = self.coefs[n, a]
                key = ", ".join(str(v) for v in mode + tuple(int(u) for u in e))
                if c.real != 0:
                    lines.append(f"({key}) cos {c.real:+.16e}")
                if c.imag != 0:
                    lines.append(f"({key}) sin {-c.imag:+.16e}")
        return "\n".join(lines)

    def __repr__(self):
        return f"FourierTaylorSeries(ell={self.ell}, terms={len(self)}, y0={self.shape.y0})"


def _normalize(shape, modes, coefs):
    """Canonical sparse form: canonical unique modes, cutoffs applied, tiny entries pruned."""
    truncated = False
    if len(modes) == 0:
        return modes, coefs, truncated
    modes, coefs = _canonicalize_rows(modes, coefs)
    order = np.abs(modes).sum(axis=1)
    keep = order <= shape.fourier_cutoff
    if not keep.all():
        truncated = bool(np.any(np.abs(coefs[~keep]) > 0))
        modes, coefs = modes[keep], coefs[keep]
    if len(modes) == 0:
        return modes, coefs, truncated
    uniq, inv = np.unique(modes, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    if len(uniq) != len(modes):
        agg = np.zeros((len(uniq), coefs.shape[1]), dtype=complex)
        np.add.at(agg, inv, coefs)
    else:
        agg = np.empty_like(coefs)
        agg[inv] = coefs
    zero = ~np.any(uniq != 0, axis=1)
    if zero.any():
        agg[zero] = agg[zero].real
    scale = np.abs(agg).max() if agg.size else 0.0
    if scale == 0:
        return uniq[:0], agg[:0], truncated
    tiny = ZERO_RTOL * scale
    re = np.where(np.abs(agg.real) < tiny, 0.0, agg.real)
    im = np.where(np.abs(agg.imag) < tiny, 0.0, agg.imag)
    agg = re + 1j * im
    alive = np.any(agg != 0, axis=1)
    return uniq[alive], agg[alive], truncated


# ---------------------------------------------------------------------------
# operations


def series_add(a: FourierTaylorSeries, b: FourierTaylorSeries) -> FourierTaylorSeries:
    """Coefficient-wise sum in canonical sparse form."""
    a._check(b)
    return a + b


def series_mul(a: FourierTaylorSeries, b: FourierTaylorSeries) -> FourierTaylorSeries:
    """Cauchy product truncated to the Fourier and Taylor cutoffs."""
    a._check(b)
    shape = a.shape
    if a.is_zero() or b.is_zero():
        return FourierTaylorSeries(shape)
    basis = shape.basis
    za = ~np.any(a.modes != 0, axis=1)
    zb = ~np.any(b.modes != 0, axis=1)
    # Re(c1 e^{i t1}) Re(c2 e^{i t2}) = 1/2 Re(c1 c2 e^{i(t1+t2)}) + 1/2 Re(c1 conj(c2) e^{i(t1-t2)})
    # with the zero mode stored as a real c (no factor 1/2).
    A = a.coefs
    B = b.coefs
    AT = np.einsum("pa,abc->pbc", A, basis.mult, optimize=True)
    prod_sum = np.einsum("pbc,qb->pqc", AT, B, optimize=True)
    prod_dif = np.einsum("pbc,qb->pqc", AT, np.conj(B), optimize=True)
    # a real zero-mode factor simply scales the other term: no difference term
    both = (~za)[:, None] & (~zb)[None, :]
    w_sum = np.where(both, 0.5, 1.0)
    msum = a.modes[:, None, :] + b.modes[None, :, :]
    mdif = a.modes[:, None, :] - b.modes[None, :, :]
    cs = prod_sum * w_sum[:, :, None]
    cd = prod_dif * 0.5
    modes = [msum.reshape(-1, shape.ell + 1)]
    coefs = [cs.reshape(-1, basis.size)]
    if both.any():
        modes.append(mdif[both])
        coefs.append(cd[both])
    trunc = a.truncated or b.truncated or _taylor_overflow(a, b)
    return FourierTaylorSeries(shape, np.concatenate(modes), np.concatenate(coefs), truncated=trunc)


def _taylor_overflow(a, b):
    deg = a.shape.basis.total_degree
    da = deg[np.any(a.coefs != 0, axis=0)]
    db = deg[np.any(b.coefs != 0, axis=0)]
    if da.size == 0 or db.size == 0:
        return False
    return bool(da.max() + db.max() > a.shape.taylor_cutoff)


def series_diff(f: FourierTaylorSeries, var: str, m: int = 0) -> FourierTaylorSeries:
    """Exact term-wise derivative in angle x_m, time t, or action y_m."""
    ell = f.ell
    if f.is_zero():
        return f
    if var == "x":
        factor = 1j * f.modes[:, m]
        return FourierTaylorSeries(f.shape, f.modes, f.coefs * factor[:, None], f.truncated)
    if var == "t":
        factor = 1j * f.modes[:, ell]
        return FourierTaylorSeries(f.shape, f.modes, f.coefs * factor[:, None], f.truncated)
    if var == "y":
        if f.shape.taylor_cutoff < 1:
            raise StructuralError("action derivative needs taylor_cutoff >= 1")
        mat = f.shape.basis.deriv[m]
        return FourierTaylorSeries(f.shape, f.modes, f.coefs @ mat, f.truncated)
    raise ValueError(f"unknown variable {var!r}; expected 'x', 't' or 'y'")


def project(f: FourierTaylorSeries, part: str, res: ResonanceStructure) -> FourierTaylorSeries:
    """One of the four parts: average, nonresonant_leqK, resonant_leqK, tail_gtK."""
    wanted = {
        "average": "average",
        "nonresonant_leqK": "nonresonant",
        "nonresonant": "nonresonant",
        "resonant_leqK": "resonant",
        "resonant": "resonant",
        "tail_gtK": "tail",
        "tail": "tail",
    }.get(part)
    if wanted is None:
        raise ValueError(f"unknown projection {part!r}")
    return f.filter(lambda m: res.classify(m) == wanted)


def _action_samples(ell, y0, r0, npts=CHEBYSHEV_POINTS):
    nodes = np.cos(np.pi * (np.arange(npts) + 0.5) / npts)
    nodes = np.concatenate([[-1.0, 1.0], nodes])
    axes = [y0[m] + r0 * nodes for m in range(ell)]
    return np.array(list(iproduct(*axes)))


def weighted_norm(f, r0: float, s0: float, method: str = "sampled") -> float:
    """sup_y sum_(k,j) |f_kj(y)| e^{(|k|+|j|) s0} over the action ball of radius r0.

    ``method='sampled'`` takes the sup over Chebyshev points of the real ball
    (endpoints included); ``method='majorant'`` bounds every coefficient by
    sum_e |c_e| r0^|e|, which also dominates the complex ball.  A list or
    tuple of series is a vector: its norm is the Euclidean combination.
    """
    if isinstance(f, (list, tuple)):
        return float(math.sqrt(sum(weighted_norm(g, r0, s0, method) ** 2 for g in f)))
    if isinstance(f, GradedSeries):
        raise TypeError("evaluate a GradedSeries at (eps, mu) before taking its norm")
    if f.is_zero():
        return 0.0
    weights = np.exp(np.abs(f.modes).sum(axis=1) * s0)
    if method == "majorant":
        rad = r0 ** f.shape.basis.total_degree
        return float((np.abs(f.coefs) @ rad) @ weights)
    if method == "sampled":
        pts = _action_samples(f.ell, f.shape.y0, r0)
        vals = np.abs(f.coefficient_values(pts))
        return float((vals @ weights).max())
    raise ValueError(f"unknown norm method {method!r}")


def taylor_reciprocal(g: FourierTaylorSeries, floor: float = 0.0, mode=None) -> FourierTaylorSeries:
    """Taylor expansion of 1/g about y0 for an action-only series g."""
    if any(any(m) for m in g.modes):
        raise StructuralError("taylor_reciprocal needs a purely action-dependent series")
    basis = g.shape.basis
    c = g.coefficient((0,) * (g.ell + 1)).real.astype(float)
    g0 = c[0]
    if abs(g0) <= floor or g0 == 0:
        raise SingularDivisorError(mode if mode is not None else (0,) * (g.ell + 1), g0, floor)
    h = c.copy()
    h[0] = 0.0
    h /= -g0
    term = np.zeros(basis.size)
    term[0] = 1.0
    acc = term.copy()
    for _ in range(basis.degree):
        term = basis.multiply(term, h)
        acc = acc + term
    acc /= g0
    return FourierTaylorSeries(g.shape, np.zeros((1, g.ell + 1), dtype=np.int64), acc[None, :].astype(complex))


def divisor_series(omega: Sequence[FourierTaylorSeries], mode) -> FourierTaylorSeries:
    """omega(y).k + j as an action-only series."""
    ell = len(omega)
    shape = omega[0].shape
    out = FourierTaylorSeries.constant(shape, float(mode[ell]))
    for m in range(ell):
        if mode[m]:
            out = out + omega[m].scale(mode[m])
    return out


def solve_homological(L: FourierTaylorSeries, omega: Sequence[FourierTaylorSeries],
                      res: ResonanceStructure, floor: float | None = None) -> FourierTaylorSeries:
    """Solve omega(y).psi_x + psi_t + L = 0 mode by mode.

    ``L`` must contain only non-resonant modes of order <= K.  For each mode,
    psi_kj = i L_kj / (omega(y).k + j) with the divisor expanded in Taylor
    series about y0.  Divisors with |omega(y0).k + j| < floor raise
    :class:`SingularDivisorError`; the default floor is a/2.
    """
    if L.is_zero():
        return L
    if floor is None:
        floor = 0.5 * res.a if np.isfinite(res.a) else 0.0
    basis = L.shape.basis
    out = np.empty_like(L.coefs)
    for n, m in enumerate(L.modes):
        mode = tuple(int(v) for v in m)
        if res.classify(mode) != "nonresonant":
            raise ResonantInputError(f"mode {mode} is {res.classify(mode)}; project before solving")
        d = divisor_series(omega, mode)
        recip = taylor_reciprocal(d, floor=floor, mode=mode)
        out[n] = 1j * basis.multiply(L.coefs[n], recip.coefs[0])
    return FourierTaylorSeries(L.shape, L.modes, out, L.truncated)


def tail_constant(K: int, sigma0: float, ell: int) -> float:
    """C_a(sigma0, K) of the Fourier-tail lemma."""
    q = math.exp(-sigma0 / 2)
    return math.exp((K + 1) * sigma0 / 2) * ((1 + q) / (1 - q)) ** (ell + 1)


def tail_bound(f: FourierTaylorSeries, K: int, sigma0: float, r0: float, s0: float,
               method: str = "sampled") -> float:
    """C_a ||f||_{r0, s0+sigma0} e^{-(K+1) sigma0}, a bound for ||f^{>K}||_{r0,s0}."""
    if not (0 < sigma0 < s0):
        raise ValueError(f"need 0 < sigma0 < s0, got sigma0={sigma0}, s0={s0}")
    Ca = tail_constant(K, sigma0, f.ell)
    return Ca * weighted_norm(f, r0, s0 + sigma0, method) * math.exp(-(K + 1) * sigma0)


# ---------------------------------------------------------------------------
# parameter-graded series


Grade = tuple  # (eps power, mu power)


class GradedSeries:
    """sum over grades (i, j) with i + j <= order of eps^i mu^j f_ij."""

    __slots__ = ("shape", "order", "grades")

    def __init__(self, shape: SeriesShape, order: int, grades: Mapping | None = None):
        self.shape = shape
        self.order = int(order)
        clean = {}
        for g, f in (grades or {}).items():
            g = (int(g[0]), int(g[1]))
            if g[0] < 0 or g[1] < 0 or sum(g) > self.order:
                continue
            if f.shape != shape:
                raise StructuralError("every grade must share the series shape")
            if not f.is_zero():
                clean[g] = f
        self.grades = clean

    @classmethod
    def lift(cls, f: FourierTaylorSeries, order: int, grade=(0, 0)) -> "GradedSeries":
        return cls(f.shape, order, {grade: f})

    def zero_like(self):
        return GradedSeries(self.shape, self.order)

    def __getitem__(self, grade) -> FourierTaylorSeries:
        return self.grades.get(tuple(grade), FourierTaylorSeries(self.shape))

    def items(self):
        return sorted(self.grades.items())

    def is_zero(self) -> bool:
        return not self.grades

    def truncate(self, order: int) -> "GradedSeries":
        return GradedSeries(self.shape, order, {g: f for g, f in self.grades.items() if sum(g) <= order})

    def with_grade(self, grade, f) -> "GradedSeries":
        grades = dict(self.grades)
        grades[tuple(grade)] = f
        return GradedSeries(self.shape, self.order, grades)

    def map(self, fn) -> "GradedSeries":
        return GradedSeries(self.shape, self.order, {g: fn(f) for g, f in self.grades.items()})

    def shift(self, di: int, dj: int) -> "GradedSeries":
        """Multiply by eps^di mu^dj."""
        return GradedSeries(self.shape, self.order,
                            {(g[0] + di, g[1] + dj): f for g, f in self.grades.items()})

    def _coerce(self, other):
        if isinstance(other, GradedSeries):
            if other.shape != self.shape:
                raise StructuralError("graded series shape mismatch")
            return other
        if isinstance(other, FourierTaylorSeries):
            return GradedSeries.lift(other, self.order)
        if np.isscalar(other):
            return GradedSeries.lift(FourierTaylorSeries.constant(self.shape, float(other)), self.order)
        raise TypeError(type(other).__name__)

    def __add__(self, other):
        other = self._coerce(other)
        order = min(self.order, other.order)
        grades = dict(self.grades)
        for g, f in other.grades.items():
            grades[g] = grades[g] + f if g in grades else f
        return GradedSeries(self.shape, order, grades)

    __radd__ = __add__

    def __neg__(self):
        return self.map(lambda f: -f)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if np.isscalar(other):
            return self.map(lambda f: f.scale(other))
        other = self._coerce(other)
        order = min(self.order, other.order)
        grades: dict = {}
        for ga, fa in self.grades.items():
            for gb, fb in other.grades.items():
                g = (ga[0] + gb[0], ga[1] + gb[1])
                if sum(g) > order:
                    continue
                p = fa * fb
                grades[g] = grades[g] + p if g in grades else p
        return GradedSeries(self.shape, order, grades)

    def __rmul__(self, other):
        if np.isscalar(other):
            return self * other
        return self._coerce(other) * self

    def diff(self, var: str, m: int = 0) -> "GradedSeries":
        return self.map(lambda f: f.diff(var, m))

    def project(self, part: str, res: ResonanceStructure) -> "GradedSeries":
        return self.map(lambda f: project(f, part, res))

    def at(self, eps: float, mu: float) -> FourierTaylorSeries:
        """Numerical collapse sum eps^i mu^j f_ij into one series."""
        out = FourierTaylorSeries(self.shape)
        for (i, j), f in self.grades.items():
            out = out + f.scale(eps ** i * mu ** j)
        return out

    def evaluate(self, y, x, t, eps: float, mu: float):
        total = None
        for (i, j), f in self.grades.items():
            term = (eps ** i) * (mu ** j) * f.evaluate(y, x, t)
            total = term if total is None else total + term
        if total is None:
            return np.zeros(np.broadcast_shapes(np.shape(x)[: np.ndim(x) - (self.shape.ell > 1)], np.shape(t)))
        return total

    def norm(self, eps: float, mu: float, r0: float, s0: float, method: str = "sampled") -> float:
        return weighted_norm(self.at(eps, mu), r0, s0, method)

    def grade_norms(self, r0: float, s0: float, method: str = "sampled") -> dict:
        return {g: weighted_norm(f, r0, s0, method) for g, f in self.items()}

    def power(self, n: int) -> "GradedSeries":
        out = GradedSeries.lift(FourierTaylorSeries.constant(self.shape, 1.0), self.order)
        for _ in range(n):
            out = out * self
        return out

    def dump(self) -> str:
        blocks = []
        for g, f in self.items():
            blocks.append(f"# grade eps^{g[0]} mu^{g[1]}")
            blocks.append(f.dump())
        return "\n".join(blocks)

    def __repr__(self):
        return f"GradedSeries(order={self.order}, grades={sorted(self.grades)})"


def compose_shift(f, shift_x: Sequence[GradedSeries] | None, shift_y: Sequence[GradedSeries] | None,
                  order: int) -> GradedSeries:
    """Expand f(y + shift_y, x + shift_x, t) in (eps, mu) up to ``order``.

    ``f`` is a Fourier-Taylor series or a graded series; the shifts are
    graded series with an empty (0,0) grade.  Angle shifts expand through
    the Taylor series of the exponential modes, action shifts through the
    Taylor coefficients; both are truncated at the given order.
    """
    if isinstance(f, FourierTaylorSeries):
        f = GradedSeries.lift(f, order)
    shape = f.shape
    ell = shape.ell
    zero = GradedSeries(shape, order)
    shift_x = list(shift_x) if shift_x is not None else [zero] * ell
    shift_y = list(shift_y) if shift_y is not None else [zero] * ell
    for s in shift_x + shift_y:
        if not s[(0, 0)].is_zero():
            raise StructuralError("shift must have an empty (0,0) grade")
    shifts = [s.truncate(order) for s in shift_x + shift_y]
    active = [n for n, s in enumerate(shifts) if not s.is_zero()]
    f = f.truncate(order)
    if not active:
        return f
    # minimal grade order of each shift bounds the useful expansion depth
    min_ord = [min(sum(g) for g in shifts[n].grades) for n in active]
    f_min = min((sum(g) for g in f.grades), default=0)
    budget = order - f_min
    out = GradedSeries(shape, order)
    powers = {n: [GradedSeries.lift(FourierTaylorSeries.constant(shape, 1.0), order)] for n in active}

    def power(n, p):
        lst = powers[n]
        while len(lst) <= p:
            lst.append(lst[-1] * shifts[n])
        return lst[p]

    def derivative(g: GradedSeries, n: int, p: int):
        for _ in range(p):
            g = g.diff("x", n) if n < ell else g.diff("y", n - ell)
        return g

    def recurse(idx, exps, budget_left):
        nonlocal out
        if idx == len(active):
            g = f
            coef = 1.0
            for n, p in zip(active, exps):
                if p:
                    g = derivative(g, n, p)
                    coef /= math.factorial(p)
            if g.is_zero():
                return
            term = g
            for n, p in zip(active, exps):
                if p:
                    term = term * power(n, p)
            out = out + term * coef
            return
        n = active[idx]
        p = 0
        while p * min_ord[idx] <= budget_left:
            recurse(idx + 1, exps + [p], budget_left - p * min_ord[idx])
            p += 1

    recurse(0, [], budget)
    return out
