"""Command-line front end.

Subcommands: solve, estimate, study, reference, tables.  Configuration
comes from an optional key=value config file plus flag overrides; exit
code 1 flags configuration errors, 2 numerical failures.  Report-style
commands write CSV/JSON data files and, unless --no-figures is given,
matplotlib PNGs alongside them.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, MeshConfig, RunConfig
from .estimator import estimate
from .exprgrammar import ExprError
from .linsolve import IterationLimitError, NotSpdError
from .meshkit import MeshError
from .optimizer import ControlProblem, NonConvergenceError, OptimizerConfig
from .spaces import ControlSpace, SpaceError, StateSpace
from .verify import (
    VerifyError,
    build_run_mesh,
    compute_reference,
    convergence_study,
    default_cache_dir,
    reliability_report,
)
from . import export

CONFIG_ERRORS = (ConfigError, ExprError, MeshError, SpaceError, ValueError, OSError)
NUMERICAL_ERRORS = (NonConvergenceError, NotSpdError, IterationLimitError, VerifyError,
                    np.linalg.LinAlgError)

_MESH_CHOICES = ("quad", "tri-diagonal", "tri-crisscross")


def _add_common(parser, with_reference=False):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--example", type=int, choices=(1, 2),
                        help="built-in problem preset")
    parser.add_argument("--mesh", choices=_MESH_CHOICES, help="mesh family")
    parser.add_argument("--n", type=int, help="grid subdivisions per side")
    parser.add_argument("--p", type=int, help="polynomial degree (>= 1)")
    parser.add_argument("--tol", type=float, help="optimizer stopping tolerance")
    parser.add_argument("--max-iter", type=int, help="optimizer iteration cap")
    parser.add_argument("--relaxation", type=float, help="control update relaxation")
    parser.add_argument("--y-omega", help="target expression over x1, x2")
    parser.add_argument("--y-gamma", help="boundary target (default: trace of y-omega)")
    parser.add_argument("--u-a", type=float, help="control lower bound")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--figures", dest="figures", action="store_true", default=True,
                        help="render PNG figures next to the data (default)")
    parser.add_argument("--no-figures", dest="figures", action="store_false")
    if with_reference:
        parser.add_argument("--n-ref", type=int, help="reference grid subdivisions")
        parser.add_argument("--p-ref", type=int, help="reference polynomial degree")
        parser.add_argument("--tol-ref", type=float, help="reference solve tolerance")
        parser.add_argument("--cache-dir", help="reference cache directory "
                            "(default: REFERENCE_CACHE_DIR or ~/.cache/robinhp)")


def _build_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "example", None):
        cfg.apply_preset(args.example)
    if getattr(args, "mesh", None):
        if args.mesh == "quad":
            cfg.mesh = MeshConfig(kind="quad", n=cfg.mesh.n)
        else:
            cfg.mesh = MeshConfig(kind="tri", n=cfg.mesh.n,
                                  split=args.mesh.split("-", 1)[1])
    if getattr(args, "n", None) is not None:
        cfg.mesh.n = args.n
    if getattr(args, "p", None) is not None:
        cfg.degree = args.p
    for flag, attr in (("tol", "tol"), ("max_iter", "max_iter"),
                       ("relaxation", "relaxation"), ("u_a", "u_a"),
                       ("n_ref", "n_ref"), ("p_ref", "p_ref"), ("tol_ref", "tol_ref")):
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)
    if getattr(args, "y_omega", None):
        if cfg.example:
            raise ConfigError("targets are fixed by the preset; drop --example "
                              "to use custom expressions")
        cfg.y_omega_expr = args.y_omega
    if getattr(args, "y_gamma", None):
        if cfg.example:
            raise ConfigError("targets are fixed by the preset; drop --example "
                              "to use custom expressions")
        cfg.y_gamma_expr = args.y_gamma
    if cfg.degree < 1:
        raise ConfigError("degree must be >= 1")
    cfg.validate()
    return cfg


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve_from_config(cfg):
    mesh = build_run_mesh(cfg.mesh.spec())
    state = StateSpace(mesh, cfg.degree)
    control = ControlSpace(mesh, cfg.degree)
    problem = ControlProblem(state, control, cfg.problem_data())
    triple, log = problem.run(OptimizerConfig(
        tol=cfg.tol, max_iter=cfg.max_iter, relaxation=cfg.relaxation))
    return problem, triple, log


def _write_solve_outputs(problem, triple, log, out, figures):
    export.write_vtk(triple, out / "fields.vtk")
    export.write_fields_csv(triple, out / "fields.csv")
    log.to_csv(out / "iterations.csv")
    diag = problem.check_discrete_optimality(triple)
    with open(out / "optimality.json", "w") as fh:
        json.dump(diag, fh, indent=1)
    if figures:
        from .figures import render_fields
        render_fields(triple, out)


def cmd_solve(args):
    cfg = _build_config(args)
    out = _out_dir(args)
    problem, triple, log = _solve_from_config(cfg)
    _write_solve_outputs(problem, triple, log, out, args.figures)
    print(f"converged in {log.iterations} iterations, "
          f"J = {log.records[-1].J:.8e}, outputs in {out}")
    return 0


def cmd_estimate(args):
    cfg = _build_config(args)
    out = _out_dir(args)
    problem, triple, log = _solve_from_config(cfg)
    _write_solve_outputs(problem, triple, log, out, args.figures)
    breakdown = estimate(triple, problem.data)
    breakdown.to_json(out / "estimator.json")
    with open(out / "estimator.csv", "w") as fh:
        fh.write(breakdown.csv_row())
    if args.figures:
        from .figures import render_indicator_map
        render_indicator_map(breakdown, out / "indicator.png")
    print(f"eta^2 = {breakdown.total_sq:.8e} "
          f"(components {', '.join(f'{v:.3e}' for v in breakdown.eta_sq)})")
    return 0


def _parse_int_list(text, name):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad {name} list {text!r}") from exc


def cmd_study(args):
    cfg = _build_config(args)
    out = _out_dir(args)
    ns = _parse_int_list(args.n_list, "--n-list")
    ps = _parse_int_list(args.p_list, "--p-list")
    if not ns or not ps:
        raise ConfigError("study needs at least one n and one p")
    kind, _, split = cfg.mesh.spec()
    runs = [((kind, n, split), p) for p in ps for n in ns]
    data = cfg.problem_data()
    table = convergence_study(data, runs, ref_cfg=cfg.reference_config(),
                              cache_dir=args.cache_dir)
    table.to_csv(out / "study.csv")
    reliability_report(table, out / "reliability.json")
    if args.figures:
        from .figures import render_convergence
        render_convergence(table, out / "convergence.png")
    print(f"study of {len(runs)} runs written to {out}")
    return 0


def cmd_reference(args):
    cfg = _build_config(args)
    data = cfg.problem_data()
    ref_cfg = cfg.reference_config()
    t0 = time.perf_counter()
    triple = compute_reference(data, ref_cfg, cache_dir=args.cache_dir)
    dt = time.perf_counter() - t0
    cache = Path(args.cache_dir) if args.cache_dir else default_cache_dir()
    print(f"reference on {ref_cfg.n_ref}x{ref_cfg.n_ref} grid at degree "
          f"{ref_cfg.p_ref}: dim {triple.y.space.dim}, {dt:.2f}s, cache {cache}")
    return 0


_ERROR_COLUMNS = ("u_L2", "y_L2", "y_H1", "z_L2", "z_H1")


def _write_error_table(path, first_col, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([first_col] + list(_ERROR_COLUMNS))
        for label, report in rows:
            writer.writerow([label] + [f"{getattr(report, c):.8e}" for c in _ERROR_COLUMNS])


def cmd_tables(args):
    cfg = _build_config(args)
    if not cfg.example:
        raise ConfigError("tables requires --example 1 or 2")
    out = _out_dir(args)
    data = cfg.problem_data()
    ref_cfg = cfg.reference_config()
    reference = compute_reference(data, ref_cfg, cache_dir=args.cache_dir)
    split = cfg.mesh.split if cfg.mesh.kind == "tri" else "crisscross"
    runs = [(("tri", n, split), p) for p in (1, 2) for n in (2, 4)]
    table = convergence_study(data, runs, ref_cfg=ref_cfg,
                              cache_dir=args.cache_dir, reference=reference)
    rows = {(r.N, r.p): r for r in table.rows}
    offset = 0 if cfg.example == 1 else 3
    _write_error_table(out / f"table{offset + 1}.csv", "p",
                       [(p, rows[(64, p)].errors) for p in (1, 2)])
    _write_error_table(out / f"table{offset + 2}.csv", "N",
                       [(N, rows[(N, 2)].errors) for N in (16, 64)])
    mesh = build_run_mesh(("tri", 4, split))
    state = StateSpace(mesh, 2)
    control = ControlSpace(mesh, 2)
    problem = ControlProblem(state, control, data)
    triple, _ = problem.run(OptimizerConfig(tol=cfg.tol, max_iter=cfg.max_iter))
    breakdown = estimate(triple, data)
    with open(out / f"table{offset + 3}.csv", "w") as fh:
        fh.write(breakdown.csv_row())
    reliability_report(table, out / "reliability.json")
    if args.figures:
        from .figures import render_convergence, render_fields, render_indicator_map
        render_fields(triple, out)
        render_indicator_map(breakdown, out / "indicator.png")
        render_convergence(table, out / "convergence.png")
    print(f"tables {offset + 1}-{offset + 3} written to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robinhp",
        description="hp-FEM solver for Robin-boundary elliptic optimal control")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the optimizer and export fields")
    _add_common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_est = sub.add_parser("estimate", help="solve, then compute the error indicator")
    _add_common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_study = sub.add_parser("study", help="convergence study against the reference")
    _add_common(p_study, with_reference=True)
    p_study.add_argument("--n-list", default="2,4", help="comma list of grid sizes")
    p_study.add_argument("--p-list", default="1,2", help="comma list of degrees")
    p_study.set_defaults(func=cmd_study)

    p_ref = sub.add_parser("reference", help="build and cache the reference solution")
    _add_common(p_ref, with_reference=True)
    p_ref.set_defaults(func=cmd_reference)

    p_tab = sub.add_parser("tables", help="reproduce the error/indicator tables")
    _add_common(p_tab, with_reference=True)
    p_tab.set_defaults(func=cmd_tables)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
