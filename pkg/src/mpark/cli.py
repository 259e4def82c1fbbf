"""Command-line entry point: ``mpark <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 numerical failure (partial outputs kept).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import harness, svg
from .harness import MethodSpec, ProblemSpec, SweepSpec, atomic_write, write_meta
from .integrator import IntegrationFailed, IntegratorConfig, as_fraction, integrate
from .newton import NotConverged, SingularJacobian
from .precision import PrecisionPair, RangeFault, as_float64
from .problems import build_problem, heat_operators
from .stability import (MixedModelSpec, SingularResolvent, mixed_model_radius, mixed_model_radius_dense,
                        sensitivity_curve, stability_region)
from .tableaus import build_tableau, format_tableau, order_report, parse_tableau

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
NUMERICAL_ERRORS = (IntegrationFailed, NotConverged, SingularJacobian, SingularResolvent, RangeFault,
                    FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage().rstrip()}\n{self.prog}: error: {message}")


def resolve_seed(cli_seed: int | None) -> int:
    """``--seed`` wins, then ``MPARK_SEED``, then 0."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("MPARK_SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"MPARK_SEED must be an integer, got {env!r}") from None


def _range(text: str, n: int) -> list[float]:
    parts = text.split(":")
    if len(parts) != n:
        raise UsageError(f"expected {n} colon-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad number in {text!r}") from None


def _resolution(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad resolution {text!r}; expected e.g. 400x400") from None
    return nx, ny


def _problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", default="vdp", help="vdp | burgers | dahlquist | heat")
    p.add_argument("--alpha", type=float, default=1.0, help="van der Pol stiffness")
    p.add_argument("--nx", type=int, default=None, help="grid points (burgers, heat)")
    p.add_argument("--lambda", dest="lam", type=float, default=-1.0, help="Dahlquist eigenvalue")


def _newton_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--newton-max-iters", type=int, default=20)
    p.add_argument("--newton-tol-factor", type=float, default=10.0)


def _output_args(p: argparse.ArgumentParser, name: str) -> None:
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--name", default=name, help="output file stem")
    p.add_argument("--plot", action="store_true", help="also write an SVG plot")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpark", description="Mixed-precision additive Runge-Kutta experiments.")
    parser.add_argument("--seed", type=int, default=None, help="global seed (default: $MPARK_SEED or 0)")
    parser.add_argument("--threads", type=int, default=None, help="work pool size (default: logical cores)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="integrate one problem with one method")
    p.add_argument("--method", required=True)
    p.add_argument("--corrections", type=int, default=None)
    p.add_argument("--pair", default="f64/f64")
    p.add_argument("--dt", required=True, help='step size, e.g. 0.01 or "1/320"')
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--store-every", type=int, default=0)
    _problem_args(p)
    _newton_args(p)
    _output_args(p, "run")

    for cmd, helptext in (("converge", "convergence sweep from a JSON config"),
                          ("efficiency", "error-vs-runtime sweep from a JSON config")):
        p = sub.add_parser(cmd, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--timing-exclusive", action="store_true",
                       help="run cells one at a time so timings are not taken under load")
        _output_args(p, cmd)

    p = sub.add_parser("stable-dt", help="largest stable dt on a power-of-two ladder")
    p.add_argument("--config", default=None, help="JSON config (overrides the flags below)")
    p.add_argument("--methods", default="sdirk:1", help="comma list, e.g. sdirk:1,novela")
    p.add_argument("--pairs", default="f64/f16", help="comma list of precision pairs")
    p.add_argument("--dt-max", default="1/20")
    p.add_argument("--levels", type=int, default=7)
    p.add_argument("--full-scan", action="store_true", help="run every rung instead of stopping at the first stable one")
    _problem_args(p)
    _newton_args(p)
    _output_args(p, "stable_dt")

    p = sub.add_parser("stability", help="linear stability region under random perturbations")
    p.add_argument("--method", required=True)
    p.add_argument("--corrections", type=int, default=None)
    p.add_argument("--eps-tilde", type=float, default=0.0)
    p.add_argument("--window", default="-40:5:-20:20", help="re_min:re_max:im_min:im_max")
    p.add_argument("--res", default="400x400")
    p.add_argument("--samples", type=int, default=16)
    _output_args(p, "stability")

    p = sub.add_parser("mixed-model", help="spectral radius of the mixed-operator heat scheme")
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--corrections", type=int, default=0)
    p.add_argument("--cfl-sweep", default="0.05:1.0:0.05", help="start:stop:step (inclusive)")
    p.add_argument("--implicit", default="centered", choices=("centered", "spectral"))
    p.add_argument("--explicit", default="spectral", choices=("centered", "spectral"))
    p.add_argument("--form", default="product", choices=("product", "stagewise"))
    p.add_argument("--dense", action="store_true", help="also report the dense eigensolver radius")
    _output_args(p, "mixed_model")

    p = sub.add_parser("sensitivity", help="roundoff sensitivity |Psi| A_eps e along the real axis")
    p.add_argument("--methods", default="imr,sdirk,novela", help="comma list of name[:corrections]")
    p.add_argument("--z", default="-10000:0", help="z_min:z_max")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--contraction", default="signed", choices=("signed", "absolute"))
    _output_args(p, "sensitivity")

    p = sub.add_parser("order-check", help="order-condition residuals of a tableau")
    p.add_argument("--method", default=None)
    p.add_argument("--corrections", type=int, default=None)
    p.add_argument("--tableau", default=None, help="plain-text tableau file")
    p.add_argument("--dump", action="store_true", help="print the tableau in plain-text form")
    return parser


# ---------------------------------------------------------------------------
# helpers

def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_meta(args, seed: int) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return {"command": args.command, "seed": seed, "args": cfg}


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None


def _methods(text: str) -> list[MethodSpec]:
    return [MethodSpec.parse(m) for m in text.split(",") if m.strip()]


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args, seed: int) -> int:
    tableau = build_tableau(args.method, args.corrections)
    pair = PrecisionPair.parse(args.pair)
    problem = build_problem(args.problem, alpha=args.alpha, nx=args.nx, lam=args.lam)
    cfg = IntegratorConfig(tableau, pair, as_fraction(args.dt), steps=args.steps,
                           newton_max_iters=args.newton_max_iters, newton_tol_factor=args.newton_tol_factor,
                           store_every=args.store_every)
    cfg.resolve_steps(problem.t_final)
    out = _outdir(args)
    meta = _base_meta(args, seed)
    meta.update(method=tableau.label, pair=str(pair), problem=problem.describe(), dt=str(cfg.dt))
    status, code = "ok", EXIT_OK
    try:
        traj = integrate(problem, cfg)
    except IntegrationFailed as exc:
        traj, status, code = exc.partial, exc.status, EXIT_NUMERIC
        meta["failed_at_step"] = exc.step
        print(f"error: {exc}", file=sys.stderr)
    states = np.array(traj.states)
    rows = [[f"{t:.17g}", *(f"{v:.17g}" for v in np.real_if_close(s))] for t, s in zip(traj.times, states)]
    atomic_write(out / f"{args.name}.csv", _rows_csv(["t", *(f"u{i}" for i in range(problem.dim))], rows))
    meta.update(status=status, steps=traj.steps, newton_iters_mean=traj.newton_iters_mean)
    final = as_float64(traj.final)
    if problem.exact is not None and status == "ok":
        meta["error_vs_exact"] = float(np.max(np.abs(final - problem.exact(problem.t_final))))
    write_meta(out / f"{args.name}.meta.json", meta)
    if args.plot and len(traj.times) > 1:
        series = {f"u{i}": (traj.times, states[:, i].real) for i in range(min(problem.dim, 8))}
        atomic_write(out / f"{args.name}.svg", svg.line_plot(series, title=f"{tableau.label} {pair}",
                                                             xlabel="t", ylabel="u", logx=False, logy=False))
    print(f"{tableau.label} {pair} {problem.describe()} dt={cfg.dt}: {status} after {traj.steps} steps, "
          f"|u|_inf={float(np.max(np.abs(final))):.6g}")
    if "error_vs_exact" in meta:
        print(f"error vs exact solution: {meta['error_vs_exact']:.6e}")
    return code


def _write_sweep(args, report, seed: int, xaxis: str) -> None:
    out = _outdir(args)
    atomic_write(out / f"{args.name}.csv", report.to_csv())
    meta = _base_meta(args, seed)
    meta.update(report.meta)
    orders = report.observed_orders()
    meta["observed_orders"] = {f"{m}:{c} {p}": o for (m, c, p), o in orders.items()}
    write_meta(out / f"{args.name}.meta.json", meta)
    if args.plot:
        series = {}
        for m, c, p in report.series():
            rows = [r for r in report.select(m, c, p) if r.status == "ok"]
            x = [float(r.dt) if xaxis == "dt" else r.wall_time_s for r in rows]
            series[f"{m}:{c} {p}"] = (x, [r.error for r in rows])
        atomic_write(out / f"{args.name}.svg",
                     svg.line_plot(series, title=args.name, xlabel="dt" if xaxis == "dt" else "wall time (s)",
                                   ylabel="max-norm error"))
    for (m, c, p), o in orders.items():
        print(f"{m}:{c} {p}: observed order {o:.3f}")


def cmd_converge(args, seed: int) -> int:
    spec = SweepSpec.from_dict(_load_json(args.config))
    threads = 1 if args.timing_exclusive else args.threads
    report = harness.run_convergence(spec, threads=threads)
    _write_sweep(args, report, seed, "dt")
    return EXIT_OK


def cmd_efficiency(args, seed: int) -> int:
    spec = SweepSpec.from_dict(_load_json(args.config))
    report = harness.run_efficiency(spec)
    _write_sweep(args, report, seed, "time")
    return EXIT_OK


def cmd_stable_dt(args, seed: int) -> int:
    if args.config:
        d = _load_json(args.config)
        problem = ProblemSpec.from_dict(d["problem"])
        methods = [MethodSpec.parse(m) for m in d["methods"]]
        pairs = [PrecisionPair.parse(p) for p in d["pairs"]]
        dt_max, levels = as_fraction(d.get("dt_max", "1/20")), int(d.get("levels", 7))
        full_scan = bool(d.get("full_scan", False))
    else:
        problem = ProblemSpec(args.problem, args.alpha, args.nx, args.lam)
        methods = _methods(args.methods)
        pairs = [PrecisionPair.parse(p) for p in args.pairs.split(",")]
        dt_max, levels, full_scan = as_fraction(args.dt_max), args.levels, args.full_scan
    for m in methods:
        m.tableau()
    report = harness.stable_dt_report(problem, methods, pairs, dt_max, levels, full_scan=full_scan,
                                      threads=args.threads, newton_max_iters=args.newton_max_iters,
                                      newton_tol_factor=args.newton_tol_factor)
    out = _outdir(args)
    atomic_write(out / f"{args.name}.csv", report.to_csv())
    meta = _base_meta(args, seed)
    meta.update(report.meta)
    meta["largest_stable_dt"] = {f"{r.method}:{r.corrections} {r.pair}": r.label for r in report.rows}
    write_meta(out / f"{args.name}.meta.json", meta)
    for r in report.rows:
        print(f"{r.method}:{r.corrections} {r.pair}: largest stable dt {r.label}")
    return EXIT_OK


def cmd_stability(args, seed: int) -> int:
    tableau = build_tableau(args.method, args.corrections)
    r0, r1, i0, i1 = _range(args.window, 4)
    res = _resolution(args.res)
    grid = stability_region(tableau, args.eps_tilde, re_range=(r0, r1), im_range=(i0, i1), resolution=res,
                            samples=args.samples, seed=seed, threads=args.threads)
    out = _outdir(args)
    rows = [[f"{x:.17g}", f"{y:.17g}", int(grid.cells[j, i])]
            for j, y in enumerate(grid.im) for i, x in enumerate(grid.re)]
    atomic_write(out / f"{args.name}.csv", _rows_csv(["re", "im", "stable"], rows))
    meta = _base_meta(args, seed)
    meta.update(method=tableau.label, stable_fraction=grid.stable_fraction(),
                stable_fraction_left_half=grid.stable_fraction(left_half_only=True))
    write_meta(out / f"{args.name}.meta.json", meta)
    if args.plot:
        atomic_write(out / f"{args.name}.svg", svg.raster_plot(
            grid.cells, (r0, r1), (i0, i1), title=f"{tableau.label} eps~={args.eps_tilde:g}"))
    print(f"{tableau.label} eps~={args.eps_tilde:g}: stable fraction {grid.stable_fraction():.6f}")
    return EXIT_OK


def cmd_mixed_model(args, seed: int) -> int:
    start, stop, step = _range(args.cfl_sweep, 3)
    if step <= 0 or stop < start or start <= 0:
        raise UsageError("--cfl-sweep needs 0 < start <= stop and step > 0")
    cfls = np.arange(start, stop + step / 2, step)
    ops = heat_operators(args.nx)
    rows, rhos = [], []
    for cfl in cfls:
        spec = MixedModelSpec(ops, args.corrections, float(cfl), args.implicit, args.explicit, args.form)
        rho = mixed_model_radius(spec)
        rhos.append(rho)
        row = [f"{cfl:.10g}", f"{spec.dt:.17g}", f"{rho:.17g}"]
        if args.dense:
            row.append(f"{mixed_model_radius_dense(spec):.17g}")
        rows.append(row)
    header = ["cfl", "dt", "rho"] + (["rho_dense"] if args.dense else [])
    out = _outdir(args)
    atomic_write(out / f"{args.name}.csv", _rows_csv(header, rows))
    meta = _base_meta(args, seed)
    unstable = [float(c) for c, r in zip(cfls, rhos) if r > 1 + 1e-12]
    meta["first_unstable_cfl"] = unstable[0] if unstable else None
    write_meta(out / f"{args.name}.meta.json", meta)
    if args.plot:
        atomic_write(out / f"{args.name}.svg", svg.line_plot(
            {"rho": (cfls, rhos)}, title=f"mixed model c={args.corrections}", xlabel="CFL",
            ylabel="spectral radius", logx=False, logy=False))
    print(f"first unstable CFL: {meta['first_unstable_cfl']}")
    return EXIT_OK


def cmd_sensitivity(args, seed: int) -> int:
    z0, z1 = _range(args.z, 2)
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    z = np.linspace(z0, z1, args.points)
    curves = [sensitivity_curve(m.tableau(), z, args.contraction) for m in _methods(args.methods)]
    rows = [[f"{zv:.17g}", *(f"{c.metric[k]:.17g}" for c in curves)] for k, zv in enumerate(z)]
    out = _outdir(args)
    atomic_write(out / f"{args.name}.csv", _rows_csv(["z", *(c.method for c in curves)], rows))
    meta = _base_meta(args, seed)
    write_meta(out / f"{args.name}.meta.json", meta)
    if args.plot:
        series = {c.method: (-c.z_values, c.metric) for c in curves}
        atomic_write(out / f"{args.name}.svg", svg.line_plot(series, title="roundoff sensitivity",
                                                             xlabel="-z", ylabel="|Psi| A_eps e"))
    for c in curves:
        print(f"{c.method}: max {np.max(c.metric):.6g} on [{z0:g}, {z1:g}]")
    return EXIT_OK


def cmd_order_check(args, seed: int) -> int:
    if args.tableau:
        try:
            text = Path(args.tableau).read_text()
        except FileNotFoundError:
            raise UsageError(f"tableau file not found: {args.tableau}") from None
        tableau = parse_tableau(text)
    elif args.method:
        tableau = build_tableau(args.method, args.corrections)
    else:
        raise UsageError("order-check needs --method or --tableau")
    if args.dump:
        print(format_tableau(tableau), end="")
    print(order_report(tableau).format())
    return EXIT_OK


COMMANDS = {
    "run": cmd_run, "converge": cmd_converge, "efficiency": cmd_efficiency, "stable-dt": cmd_stable_dt,
    "stability": cmd_stability, "mixed-model": cmd_mixed_model, "sensitivity": cmd_sensitivity,
    "order-check": cmd_order_check,
}


# options whose values are colon ranges that may start with "-"
RANGE_OPTIONS = ("--z", "--window", "--cfl-sweep")


def _join_ranges(argv: list[str]) -> list[str]:
    out, it = [], iter(argv)
    for a in it:
        if a in RANGE_OPTIONS:
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = _join_ranges(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
        seed = resolve_seed(args.seed)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return COMMANDS[args.command](args, seed)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
