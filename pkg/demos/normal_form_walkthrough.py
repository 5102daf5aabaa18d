"""Normalize a dissipative resonant system and read off its normal form.

The bundled system e19 has one action y, one angle x and a periodic forcing
in t.  Its conservative part is a pendulum-like resonance at y = 1 and the
dissipation pulls y towards a drift eta.  This script builds the second order
normal form, prints the drift that makes the resonant dynamics well defined,
the normalized equations and the case classification.

Run with ``python3 demos/normal_form_walkthrough.py``.
"""
import numpy as np

from dissnf.normalizer import build_normal_form, classify
from dissnf.system import fixture

sysm = fixture("e19")
nf = build_normal_form(sysm, 2)

# The drift is a series in (eps, mu) whose grades are printed one per line.
# Expect y itself plus eps / (2y), nothing else through order two.
print("drift eta, grade by grade")
for grade, f in sorted(nf.drift.components[0].items()):
    if not f.is_zero():
        print(f"  eps^{grade[0]} mu^{grade[1]}: {f.evaluate(1.01, 0.0, 0.0):+.6f} at y = 1.01")

# Only the average and the resonant harmonic (1, -1) survive in the
# normalized field; evaluate both components at a few phases.
part = nf.normal_part()
eps = mu = 1e-3
Ydot, Xdot = part.y[0].at(eps, mu), part.x[0].at(eps, mu)
for X in np.linspace(0, np.pi, 3):
    print(f"X = {X:.3f}:  Ydot = {Ydot.evaluate(1.01, X, 0.0):+.3e}   Xdot = {Xdot.evaluate(1.01, X, 0.0):+.6f}")

# Both the resonant conservative term and the resonant dissipative term are
# present, so the energy is not preserved at first order.
print("classification:", classify(nf))

# The forward map sends original variables to normalized ones; the backward
# map undoes it up to terms beyond the normalization order.
state = (1.02, 0.3, 0.0, 0.7)
fwd = nf.transform_state(state, eps, mu, "forward")
back = nf.transform_state(fwd, eps, mu, "backward")
print("round trip error:", max(abs(a - b) for a, b in zip(state, back)))
