"""Command-line entry point: ``dissnf <command> [options]``.

Exit status: 0 on success, 1 when a request is refused because a smallness
condition fails (the condition is named), 2 on configuration errors.
Artifacts go below ``$DISSNF_OUTPUT`` (default ``./dissnf_output``) unless
``--out`` is given; every written path is printed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .normalizer import NormalizationError, build_normal_form, classify
from .system import FIXTURES, ConfigurationError, build_system, fixture_path, load_config

OUTPUT_ENV = "DISSNF_OUTPUT"
DEFAULT_OUTPUT = "dissnf_output"
RADII_KEYS = ("r0", "r0_tilde", "r0_tilde_prime", "R0", "s0", "s0_tilde", "S0")

EXIT_OK, EXIT_REFUSED, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _nonneg(text):
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a finite value >= 0, got {text}")
    return v


def _positive(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a finite value > 0, got {text}")
    return v


def _order(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("order must be >= 1")
    return n


def _radius(text):
    key, sep, val = text.partition("=")
    if not sep or key not in RADII_KEYS:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE with KEY in {', '.join(RADII_KEYS)}")
    return key, float(val)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dissnf", description="Normal forms and stability estimates for dissipative systems.")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def system_args(sp, order=2):
        sp.add_argument("--system", required=True, help=f"fixture ({', '.join(FIXTURES)}) or config path")
        sp.add_argument("--order", "-N", type=_order, default=order)
        sp.add_argument("--radius", action="append", type=_radius, default=[], metavar="KEY=VALUE",
                        help="override a domain radius")
        sp.add_argument("--extended", action="store_true", help="normalize in the extended phase space")

    sp = sub.add_parser("normalize", help="write the normal-form dump")
    system_args(sp)
    sp.add_argument("--eps", type=_nonneg)
    sp.add_argument("--mu", type=_nonneg)

    sp = sub.add_parser("estimate", help="thresholds, constants and stability time")
    system_args(sp, order=3)
    sp.add_argument("--eps", type=_positive, help="evaluate at this eps (default eps0)")
    sp.add_argument("--mu", type=_positive, help="evaluate at this mu (default mu0)")
    sp.add_argument("--method", choices=("sampled", "majorant"), default="sampled")

    sp = sub.add_parser("table1", help="stability table for the bundled systems")
    sp.add_argument("--order", "-N", type=_order, default=3)
    sp.add_argument("--operating-point", choices=("computed", "reference"), default="computed")

    sp = sub.add_parser("simulate", help="integrate the normal form and the original system, write CSVs")
    system_args(sp)
    sp.add_argument("--eps", type=_nonneg, default=1e-3)
    sp.add_argument("--mu", type=_nonneg, default=1e-3)
    sp.add_argument("--t-end", type=_positive, default=1e4)
    sp.add_argument("--tol", type=_positive, default=1e-10)
    sp.add_argument("--samples", type=int, default=10001)

    sp = sub.add_parser("reproduce-all", help="regenerate every dump, the table and the figure data")
    sp.add_argument("--t-end", type=_positive, default=1e4)
    return p


# ---------------------------------------------------------------------------


def _system_config(ref: str, radii: list) -> dict:
    if ref in FIXTURES:
        cfg = json.loads(fixture_path(ref).read_text())
    else:
        cfg = dict(load_config(ref))
    if radii:
        cfg["radii"] = dict(cfg.get("radii", {}))
        cfg["radii"].update(dict(radii))
    return cfg


def _load(args):
    sysm = build_system(_system_config(args.system, args.radius))
    return sysm.extended(True) if args.extended else sysm


def _out_dir(args, *parts) -> Path:
    root = Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    d = root.joinpath(*parts)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str, written: list):
    path.write_text(text)
    written.append(str(path))


def _report_text(rep) -> str:
    d = rep.as_dict()
    lines = [f"# stability report for {rep.system}, N = {rep.N}, evaluator {rep.method}"]
    for k in ("eps0", "mu0", "eps", "mu", "lam", "a", "tau0", "C_omega", "C_p", "G", "C_G", "C_G_tilde", "C_Y",
              "C_1", "C_2", "C_3", "C_4", "m_tilde", "M_tilde", "r", "rho", "rho_cap", "C_0", "C_0_prime",
              "T", "case", "delta_Y", "delta_y"):
        v = d[k]
        lines.append(f"{k:<10} {v:.6g}" if isinstance(v, float) else f"{k:<10} {v}")
    for k, v in rep.checks.items():
        lines.append(f"check {k:<22} {'ok' if v else 'FAILS'}")
    return "\n".join(lines) + "\n"


def cmd_normalize(args, written):
    sysm = _load(args)
    nf = build_normal_form(sysm, args.order, eps=args.eps, mu=args.mu)
    name = sysm.base.name if hasattr(sysm, "base") else sysm.name
    tag = "_ext" if args.extended else ""
    d = _out_dir(args, "normalize")
    _write(d / f"{name}_N{args.order}{tag}.txt", nf.dump() + f"# classification: {classify(nf)}\n", written)


def cmd_estimate(args, written):
    from .estimates import smallness_thresholds, stability_report

    sysm = _load(args)
    base = sysm.base if hasattr(sysm, "base") else sysm
    nf = build_normal_form(sysm if hasattr(sysm, "base") else sysm.extended(True), args.order)
    th = smallness_thresholds(nf, method=args.method)
    if args.eps is not None or args.mu is not None:
        from .estimates import check_thresholds

        check_thresholds(nf, args.eps or 0.0, args.mu or 0.0, method=args.method)
    rep = stability_report(nf, method=args.method, eps=args.eps, mu=args.mu)
    d = _out_dir(args, "estimate")
    stem = f"{base.name}_N{args.order}_{args.method}"
    _write(d / f"{stem}.txt", _report_text(rep) + "".join(
        f"threshold {k:<6} {v:.6g}\n" for k, v in th.breakdown.items()), written)
    _write(d / f"{stem}.json", json.dumps(_clean(rep.as_dict()), indent=2, sort_keys=True) + "\n", written)


def cmd_table1(args, written):
    from .estimates import table1_report

    rep = table1_report(N=args.order, operating_point=args.operating_point)
    d = _out_dir(args, "table1")
    tag = "" if args.operating_point == "computed" else "_reference_point"
    _write(d / f"table1{tag}.txt", rep.text(), written)
    _write(d / f"table1{tag}.json", rep.to_json() + "\n", written)
    print(rep.text(), end="")


def _simulate(sysm, N, eps, mu, t_end, tol, samples, outdir, written):
    from .dynamics import emit_figure_data, energy_derivative, integrate, normalized_field

    base = sysm.base if hasattr(sysm, "base") else sysm
    nf = build_normal_form(sysm, N)
    Y0, X0 = 1 + 6 * math.sqrt(eps), 0.0
    traj = integrate(normalized_field(nf, eps, mu), (Y0, X0), t_end, tol, n_samples=samples)
    energy = energy_derivative(nf, traj, eps, mu)
    yb, xb, _, _ = nf.transform_state((traj.y, traj.x, np.zeros_like(traj.t), traj.t), eps, mu, "backward")
    from .dynamics import Trajectory

    orig = Trajectory(traj.t, yb, xb, "pulled back")
    written.extend(emit_figure_data(traj, energy, outdir, prefix=f"{base.name}", original=orig))


def cmd_simulate(args, written):
    sysm = _load(args)
    _simulate(sysm, args.order, args.eps, args.mu, args.t_end, args.tol, args.samples,
              _out_dir(args, "simulate"), written)


def cmd_reproduce_all(args, written):
    from .estimates import table1_report
    from .system import fixture

    d = _out_dir(args, "normalize")
    for name, N in (("e19", 2), ("e20", 2), ("e20", 3), ("A1", 2), ("A2", 2)):
        nf = build_normal_form(fixture(name), N)
        _write(d / f"{name}_N{N}.txt", nf.dump() + f"# classification: {classify(nf)}\n", written)
    rep = table1_report()
    d = _out_dir(args, "table1")
    _write(d / "table1.txt", rep.text(), written)
    _write(d / "table1.json", rep.to_json() + "\n", written)
    for name in FIXTURES:
        _simulate(fixture(name), 2, 1e-3, 1e-3, args.t_end, 1e-10, 10001, _out_dir(args, "simulate"), written)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


COMMANDS = {
    "normalize": cmd_normalize,
    "estimate": cmd_estimate,
    "table1": cmd_table1,
    "simulate": cmd_simulate,
    "reproduce-all": cmd_reproduce_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    written: list = []
    try:
        COMMANDS[args.command](args, written)
    except NormalizationError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (ConfigurationError, KeyError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in written:
        print(w)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
