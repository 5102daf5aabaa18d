"""Normal-form construction checked against closed forms and structural invariants."""
import json
from math import comb
from pathlib import Path

import numpy as np
import pytest

from dissnf.normalizer import (
    NormalizationError,
    _compose,
    build_normal_form,
    classify,
    residual_grade_norms,
)
from dissnf.series import FourierTaylorSeries
from dissnf.system import build_system, fixture, fixture_path

GOLDEN = Path(__file__).parent / "golden"
S, C = np.sin, np.cos


@pytest.fixture(scope="module")
def nf2():
    return {name: build_normal_form(fixture(name), 2) for name in ("e19", "e20", "A1", "A2")}


@pytest.fixture(scope="module")
def nf_fine():
    """N = 2 with a longer Taylor expansion for comparisons against rational closed forms."""
    return {name: build_normal_form(fixture(name).with_expansion(taylor_cutoff=10), 2)
            for name in ("e19", "e20", "A1", "A2")}


# -- oracles -----------------------------------------------------------------


def inv_power(n, y0, D):
    """Taylor coefficients of y^-n about y0."""
    return np.array([(-1) ** d * comb(n + d - 1, d) / y0 ** (n + d) for d in range(D + 1)])


def inv_linear(a, b, y0, D):
    """Taylor coefficients of 1 / (a y + b) about y0."""
    c = a * y0 + b
    return np.array([(-a) ** d / c ** (d + 1) for d in range(D + 1)])


def series(shape, mode, taylor, cos=0.0, sin=0.0):
    return FourierTaylorSeries.trig(shape, mode, cos=cos, sin=sin, taylor=taylor)


def rel_err(f, exact, pts):
    Y, X, T = pts
    v = f.evaluate(Y, X, T)
    ex = np.broadcast_to(exact(Y, X, T), v.shape)
    scale = np.abs(ex).max()
    return np.abs(v - ex).max() / (scale if scale > 0 else 1.0)


@pytest.fixture(scope="module")
def pts():
    rng = np.random.default_rng(7)
    return (1.01 + rng.uniform(-0.02, 0.02, 50), rng.uniform(0, 2 * np.pi, 50), rng.uniform(0, 2 * np.pi, 50))


# -- closed-form generating functions ----------------------------------------

CLOSED = {
    "e19": {
        ("psi", 1): lambda Y, X, t: S(X) / Y,
        ("psi", 2): lambda Y, X, t: S(2 * X - t) / (2 * Y**2 * (2 * Y - 1)) - S(t) / (2 * Y**2) - S(2 * X) / (8 * Y**3),
        ("alpha", 0, 1): lambda Y, X, t: -C(X) / Y,
        ("beta", 0, 1): lambda Y, X, t: 0 * Y,
        ("beta", 1, 1): lambda Y, X, t: -S(2 * X) / (4 * Y**2) + S(t) / Y,
        ("alpha", 1, 1): lambda Y, X, t: (-C(2 * X - t) / (2 * Y**2 * (2 * Y - 1)) - (2 * Y + 1) * C(t) / (2 * Y**2)
                                          + C(2 * X) / (8 * Y**3)),
        ("alpha", 0, 2): lambda Y, X, t: S(t) / Y + S(2 * X) / (4 * Y**2),
    },
    "e20": {
        ("beta", 1, 1): lambda Y, X, t: S(2 * X - t) / (2 * Y * (2 * Y - 1)) + S(t) / (2 * Y) - S(2 * X) / (4 * Y**2),
        ("alpha", 1, 1): lambda Y, X, t: ((1 - 3 * Y) * C(2 * X - t) / (2 * Y**2 * (2 * Y - 1) ** 2)
                                          + (1 - Y) * C(t) / (2 * Y**2) + C(2 * X) / (8 * Y**3)),
        ("alpha", 0, 2): lambda Y, X, t: S(2 * X) / (4 * Y**2),
    },
    "A1": {("psi", 1): lambda Y, X, t: S(X - 6 * t) / (Y - 6) + S(X) / Y},
    "A2": {
        ("alpha", 0, 1): lambda Y, X, t: -C(6 * t) / 6 + 0 * Y,
        ("alpha", 0, 2): lambda Y, X, t: 0 * Y,
        ("beta", 1, 1): lambda Y, X, t: (-S(X - 6 * t) / (12 * Y - 2 * Y**2) - S(X - 7 * t) / (84 - 12 * Y)
                                         + S(X + 5 * t) / (12 * Y + 60) - S(X + 6 * t) / (2 * Y * (Y + 6))),
    },
}


def _pick(nf, key):
    if key[0] == "psi":
        return nf.psi(key[1])
    return getattr(nf, key[0])(key[1], key[2])


@pytest.mark.parametrize("name,key", [(n, k) for n, d in CLOSED.items() for k in d])
def test_closed_form_transformations(nf_fine, pts, name, key):
    assert rel_err(_pick(nf_fine[name], key), CLOSED[name][key], pts) <= 1e-8


# -- drift ---------------------------------------------------------------------


def test_drift_e19(nf2):
    nf = nf2["e19"]
    shape = nf.shape
    D = shape.taylor_cutoff
    eta = nf.drift.components[0]
    y = FourierTaylorSeries.action_variable(shape)
    assert (eta[(0, 0)] - y).max_abs() <= 1e-10
    half_inv = series(shape, (0, 0), 0.5 * inv_power(1, 1.01, D), cos=1.0)
    assert (eta[(1, 0)] - half_inv).max_abs() <= 1e-10
    assert {g for g, f in eta.items() if not f.is_zero()} == {(0, 0), (1, 0)}


def test_drift_A2():
    nf = build_normal_form(fixture("A2"), 3)
    shape = nf.shape
    eta = nf.drift.components[0]
    y = FourierTaylorSeries.action_variable(shape)
    assert (eta[(0, 0)] - y).max_abs() <= 1e-10
    res = series(shape, (1, -1), [1.0], sin=-1 / 144)
    assert (eta[(1, 1)] - res).max_abs() <= 1e-10
    assert {g for g, f in eta.items() if f.max_abs() > 1e-12} == {(0, 0), (1, 1)}


@pytest.mark.parametrize("name", ["e19", "e20", "A1", "A2"])
def test_drift_is_average_plus_resonant(nf2, name):
    nf = nf2[name]
    for g, f in nf.drift.components[0].items():
        for m in f.modes:
            assert not any(m) or nf.resonance.contains(tuple(m))


# -- normal-form fields --------------------------------------------------------


def test_normal_form_e19(nf2):
    nf = nf2["e19"]
    shape = nf.shape
    D = shape.taylor_cutoff
    part = nf.normal_part()
    Yd, Xd = part.y[0], part.x[0]
    sinr = series(shape, (1, -1), [1.0], sin=1.0)
    assert (Yd[(1, 0)] + sinr).max_abs() <= 1e-10
    assert {g for g, f in Yd.items() if not f.is_zero()} == {(1, 0)}
    y = FourierTaylorSeries.action_variable(shape)
    assert (Xd[(0, 0)] - y).max_abs() <= 1e-10
    assert (Xd[(2, 0)] - series(shape, (0, 0), -0.5 * inv_power(3, 1.01, D), cos=1.0)).max_abs() <= 1e-10
    assert (Xd[(0, 2)] - series(shape, (0, 0), -0.5 * inv_power(1, 1.01, D), cos=1.0)).max_abs() <= 1e-10
    assert (Xd[(0, 1)] + sinr).max_abs() <= 1e-10
    assert Xd[(1, 0)].is_zero() and Xd[(1, 1)].max_abs() <= 1e-10


def test_normal_form_A1_has_no_low_order_action_motion(nf2):
    Yd = nf2["A1"].normal_part().y[0]
    assert all(f.max_abs() <= 1e-10 for g, f in Yd.items() if sum(g) <= 2)


def test_normal_form_e20_third_order():
    nf = build_normal_form(fixture("e20"), 3)
    shape = nf.shape
    D = shape.taylor_cutoff
    # eps^3 sin(X - t) / (8 Y^5 - 4 Y^4) = eps^3 sin(X - t) y^-4 / (4 (2y - 1))
    coef = np.convolve(inv_power(4, 1.01, D), inv_linear(2.0, -1.0, 1.01, D))[: D + 1] / 4
    want = series(shape, (1, -1), coef, sin=1.0)
    got = nf.normal_part().y[0][(3, 0)]
    # the top Taylor degree loses the contribution of the discarded degree D + 1
    assert np.abs((got - want).coefs[:, :D]).max() <= 1e-10


# -- classification and structure ---------------------------------------------


@pytest.mark.parametrize("name,case", [("e19", "case_ii"), ("e20", "case_ii"), ("A1", "case_i"), ("A2", "case_i")])
def test_classification(nf2, name, case):
    assert classify(nf2[name]) == case


def test_resonant_parts_e19(nf2):
    # p_X multiplies eps and s multiplies mu: s = -sin(X - t) - mu / (2Y)
    nf = nf2["e19"]
    shape = nf.shape
    sinr = series(shape, (1, -1), [1.0], sin=1.0)
    assert (nf.p_X[0][(0, 0)] - sinr).max_abs() <= 1e-12
    assert (nf.s[0][(0, 0)] + sinr).max_abs() <= 1e-12
    half_inv = series(shape, (0, 0), -0.5 * inv_power(1, 1.01, shape.taylor_cutoff), cos=1.0)
    assert (nf.s[0][(0, 1)] - half_inv).max_abs() <= 1e-10


def test_classification_reasons(nf2):
    assert all(g.is_zero() for g in nf2["A1"].p_X)
    assert all(g.is_zero() for g in nf2["A2"].s)


@pytest.mark.parametrize("name", ["e19", "e20", "A1", "A2"])
def test_grade_bookkeeping(nf2, name):
    nf = nf2[name]
    assert all(g[1] == 0 for g, f in nf.p_X[0].items() if not f.is_zero())
    assert all(g[1] == 0 for g, f in nf.p_Y[0].items() if not f.is_zero())
    assert (nf.omega_d[0][(0, 0)] - nf.system.omega[0]).max_abs() == 0.0
    for comp in list(nf.dissipative.alpha) + list(nf.dissipative.beta) + [nf.dissipative.gamma]:
        for g, f in comp.items():
            assert g[1] >= 1
            for m in f.modes:
                assert any(m) and not nf.resonance.contains(tuple(m))
    for p in nf.conservative.psi:
        for m in p.modes:
            assert any(m) and not nf.resonance.contains(tuple(m))


@pytest.mark.parametrize("name", ["e19", "e20", "A1", "A2"])
def test_nonresonant_residual_vanishes(nf2, name):
    # below the top Taylor degree, which is truncated by the y-derivatives
    nf = nf2[name]
    D = nf.shape.taylor_cutoff
    resid = nf.nonresonant_residual()
    for comp in resid.comps():
        for g, f in comp.items():
            if not f.is_zero():
                assert np.abs(f.coefs[:, :D]).max() <= 1e-9
    assert set(residual_grade_norms(nf, 0.05, 0.1)) == {(c, g) for c, comp in zip("xyu", resid.comps())
                                                        for g, _ in comp.items()}


@pytest.mark.parametrize("name", ["e19", "e20", "A1", "A2"])
def test_hamiltonian_at_mu_zero(nf2, name):
    part = nf2[name].normal_part()
    for i in range(0, 3):
        div = part.x[0][(i, 0)].diff("x") + part.y[0][(i, 0)].diff("y")
        assert div.max_abs() <= 1e-10


def test_gamma_and_sigma_vanish_at_first_order():
    nf = build_normal_form(fixture("e19").extended(True), 2)
    assert nf.dissipative.gamma[(0, 1)].is_zero()
    assert nf.sigma[(0, 1)].is_zero()


# -- transformations ------------------------------------------------------------


def test_first_order_inversion(nf2):
    nf = build_normal_form(fixture("e19"), 1)
    g = nf.conservative.gamma_inverse
    assert (g.x[0][(1, 0)] + nf.psi(1).diff("y")).max_abs() <= 1e-14
    assert (g.y[0][(1, 0)] - nf.psi(1).diff("x")).max_abs() <= 1e-14


@pytest.mark.parametrize("name", ["e19", "A2"])
def test_forward_backward_compose_to_identity(nf2, name):
    nf = nf2[name]
    order = nf.order
    # z = Z + B(Z) and Z = z + F(z): F(Z + B) + B = 0 grade by grade
    resid = _compose(nf.forward, nf.backward, order) + nf.backward
    for comp in resid.comps():
        for g, f in comp.items():
            if sum(g) <= order:
                assert f.max_abs() <= 1e-10


@pytest.mark.parametrize("name", ["e19", "A2"])
def test_round_trip(nf2, name):
    nf = nf2[name]
    rng = np.random.default_rng(1)
    y = 1.01 + rng.uniform(-0.005, 0.005, 20)
    x = rng.uniform(0, 2 * np.pi, 20)
    t = rng.uniform(0, 2 * np.pi, 20)
    u = np.zeros(20)
    fwd = nf.transform_state((y, x, u, t), 1e-3, 1e-3, "forward")
    back = nf.transform_state(fwd, 1e-3, 1e-3, "backward")
    assert np.abs(back[0] - y).max() <= 1e-9
    assert np.abs(back[1] - x).max() <= 1e-9


def test_zero_parameters_leave_state_unchanged(nf2):
    nf = nf2["e19"]
    st = (np.array([1.0]), np.array([0.3]), np.array([0.0]), np.array([0.2]))
    out = nf.transform_state(st, 0.0, 0.0, "forward")
    assert all(np.array_equal(a, b) for a, b in zip(out, st))


def test_integrable_system_gives_identity():
    cfg = json.loads(fixture_path("e19").read_text())
    cfg.update(h10=[], f01=[[]], g01=[[]])
    nf = build_normal_form(build_system(cfg), 2)
    assert all(p.is_zero() for p in nf.conservative.psi)
    assert all(c.is_zero() for c in nf.forward.comps())
    assert all(c.is_zero() for c in nf.backward.comps())


def test_threshold_refusal_names_condition():
    with pytest.raises(NormalizationError, match=r"\(C1\)"):
        build_normal_form(fixture("e19"), 2, eps=1.0)


def test_invalid_options():
    with pytest.raises(ValueError):
        build_normal_form(fixture("e19"), 0)
    with pytest.raises(ValueError):
        build_normal_form(fixture("e19"), 2, drift_frame="sideways")


# -- golden dumps ----------------------------------------------------------------


@pytest.mark.parametrize("name,N", [("e19", 2), ("e20", 2), ("e20", 3), ("A1", 2), ("A2", 2)])
def test_golden_dump(name, N):
    want = (GOLDEN / f"{name}_N{N}.txt").read_text()
    assert build_normal_form(fixture(name), N).dump() == want
