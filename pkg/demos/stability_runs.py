"""Check the action-drift bound along the original equations.

The stability report gives a bound 2 C_p lambda + rho on |y(t) - y(0)| up to
the stability time T.  Here the original e19 and A2 systems, with their
computed drifts, are integrated at the report's (eps0, mu0) from y0 = 1.01.
The run stops at the first sample where the bound is crossed.
"""
from dissnf.dynamics import stability_run
from dissnf.estimates import stability_report
from dissnf.normalizer import build_normal_form
from dissnf.system import fixture

for name, t_end in (("e19", 1e5), ("A2", 1e8)):
    sysm = fixture(name)
    nf = build_normal_form(sysm.extended(True), 3)
    rep = stability_report(nf)
    traj, rec = stability_run(sysm, nf, rep, t_end)
    print(f"{name}: eps = {rep.eps:.3g}, mu = {rep.mu:.3g}, T = {rep.T:.3g}")
    print(f"  bound {rec.bound:.4g}, sup drift {rec.sup_drift:.4g}, first crossing {rec.first_crossing}")
    print(f"  respected: {rec.respected}; failed validity checks: {[k for k, v in rep.checks.items() if not v]}")
