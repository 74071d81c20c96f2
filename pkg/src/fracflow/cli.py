"""Command-line entry points.

Subcommands:
    run <config>          reduced mixed-dimensional simulation
    equidim <config>      resolved thin-strip reference simulation
    compare <runA> <runB> field error norms between two run directories
    convergence <config>  time-step refinement study (table + figure)
    validate <config>     parse and check a config, write nothing
    report <run_dir>      render figures for an existing run directory

Exit status: 0 on success, 1 on validation or usage errors, 2 on solver
failures.
"""

import argparse
import glob
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfg
from . import coupler
from . import equidim as eqd
from . import output as out
from .errors import ConfigError, FracflowError


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fracflow",
        description="mixed-dimensional reactive transport simulator",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p, config_arg=True):
        if config_arg:
            p.add_argument("config", help="path to an INI config file")
        p.add_argument("--output-dir", default=None,
                       help="override the configured output directory")
        p.add_argument("--quiet", action="store_true",
                       help="suppress per-step progress output")
        p.add_argument("--seed-unused", default=None,
                       help="reserved; accepted and ignored")

    common(sub.add_parser("run", help="run the reduced model"))
    common(sub.add_parser("equidim", help="run the resolved-strip reference"))

    p_cmp = sub.add_parser("compare", help="error norms between two runs")
    p_cmp.add_argument("runA")
    p_cmp.add_argument("runB")
    p_cmp.add_argument("--output-dir", default=".")
    p_cmp.add_argument("--quiet", action="store_true")
    p_cmp.add_argument("--seed-unused", default=None)

    common(sub.add_parser("convergence",
                          help="time-step refinement study"))
    common(sub.add_parser("validate", help="parse-only config check"))

    p_rep = sub.add_parser("report", help="render figures for a run")
    p_rep.add_argument("run_dir")
    p_rep.add_argument("--prefix", default="run")
    p_rep.add_argument("--output-dir", default=None)
    p_rep.add_argument("--quiet", action="store_true")
    p_rep.add_argument("--seed-unused", default=None)
    return parser


def _load(path):
    if not os.path.exists(path):
        raise ConfigError([f"config file not found: {path}"])
    return cfg.load_config(path)


def _cmd_run(args):
    config = _load(args.config)
    report = coupler.run(config, output_dir=args.output_dir,
                         quiet=args.quiet)
    if not args.quiet:
        ledger = report["ledger"]
        print(f"completed {report['steps']} steps, "
              f"t = {report['final_time']:g}, "
              f"ledger residual = {ledger['residual']:.3e}")
    return 0


def _cmd_equidim(args):
    config = _load(args.config)
    report = eqd.run_equidim(config, output_dir=args.output_dir,
                             quiet=args.quiet)
    if not args.quiet:
        print(f"completed {report['steps']} steps, "
              f"t = {report['final_time']:g}")
    return 0


def _last_snapshot(directory, kind):
    matches = sorted(glob.glob(os.path.join(directory, f"*_{kind}_*.vtk")))
    if not matches:
        raise ConfigError(
            [f"no {kind} VTK snapshots found in {directory}"])
    return matches[-1]


def _cmd_compare(args):
    rows = []
    for kind in ("matrix", "fracture"):
        try:
            path_a = _last_snapshot(args.runA, kind)
            path_b = _last_snapshot(args.runB, kind)
        except ConfigError:
            if kind == "matrix":
                raise
            continue
        meta_a, fields_a = out.read_vtk_cell_fields(path_a)
        meta_b, fields_b = out.read_vtk_cell_fields(path_b)
        if meta_a.get("n_cells") != meta_b.get("n_cells"):
            raise ConfigError(
                [f"{kind} snapshots have different cell counts: "
                 f"{meta_a.get('n_cells')} vs {meta_b.get('n_cells')}"])
        for name in fields_a:
            if name not in fields_b:
                continue
            l2, linf = eqd.field_error_norms(fields_a[name], fields_b[name])
            rows.append([f"{kind}.{name}", l2, linf])

    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "compare.csv")
    out.write_timeseries([[r[0], r[1], r[2]] for r in rows],
                         ["field", "l2_rel", "linf_rel"], path)
    if not args.quiet:
        for name, l2, linf in rows:
            print(f"{name:20s} l2 = {l2:.6e}  linf = {linf:.6e}")
        print(f"wrote {path}")
    return 0


def _cmd_convergence(args):
    config = _load(args.config)
    base_dt = config.time.dt
    levels = [1, 2, 4]
    finest = 8

    def run_at(factor):
        time = replace(config.time, dt=base_dt / factor)
        output = replace(config.output, write_vtk=False, write_csv=False,
                         figures=False)
        sub = replace(config, time=time, output=output)
        report = coupler.run(sub, output_dir=args.output_dir or ".",
                             quiet=True)
        return report["state"]

    ref = run_at(finest)
    rows = []
    errors = []
    for factor in levels:
        state = run_at(factor)
        l2_u, _ = eqd.field_error_norms(state.transport.u, ref.transport.u)
        l2_p, _ = eqd.field_error_norms(state.flow.p, ref.flow.p)
        rows.append([base_dt / factor, l2_u, l2_p])
        errors.append(l2_u)

    directory = args.output_dir or config.output.directory
    os.makedirs(directory, exist_ok=True)
    table = os.path.join(directory, "convergence.csv")
    out.write_timeseries(rows, ["dt", "u_l2_rel", "p_l2_rel"], table)

    from . import report as rpt
    fig = os.path.join(directory, "convergence.png")
    rpt.render_convergence_figure(
        [r[0] for r in rows], [errors], ["u (final)"], fig, xlabel="dt")

    if not args.quiet:
        for dt, eu, ep in rows:
            print(f"dt = {dt:.6g}  u_l2 = {eu:.6e}  p_l2 = {ep:.6e}")
        for i in range(1, len(rows)):
            if errors[i] > 0:
                print(f"ratio {rows[i - 1][0]:g}/{rows[i][0]:g}: "
                      f"{errors[i - 1] / errors[i]:.3f}")
        print(f"wrote {table} and {fig}")
    return 0


def _cmd_validate(args):
    _load(args.config)
    if not args.quiet:
        print(f"{args.config}: ok")
    return 0


def _cmd_report(args):
    from . import report as rpt
    if not os.path.isdir(args.run_dir):
        raise ConfigError([f"run directory not found: {args.run_dir}"])
    written = rpt.render_run_figures(args.run_dir, args.prefix)
    if not written:
        raise ConfigError(
            [f"no outputs with prefix '{args.prefix}' in {args.run_dir}"])
    if not args.quiet:
        for path in written:
            print(f"wrote {path}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "equidim": _cmd_equidim,
    "compare": _cmd_compare,
    "convergence": _cmd_convergence,
    "validate": _cmd_validate,
    "report": _cmd_report,
}


def cli(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; map those to validation status
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FracflowError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
