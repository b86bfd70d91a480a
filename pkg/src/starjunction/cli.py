"""Command-line entry point.

Subcommands: solve-graph, solve-cells, solve-junction, convergence, validate.
Exit codes: 0 success, 2 config error, 3 solver failure, 4 validation failures.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import cells, io
from .config import ConfigError, load_config
from .linalg import ConvergenceFailure
from .reference import ReferenceProblem, build_junction_mesh, space_time_norm
from .scheduler import SchedulerError, StudyPlan, run_convergence_study, \
    run_term_scheduler, run_validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4


def _parse_eps(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse epsilon list {text!r}") from None
    if not values:
        raise ConfigError("empty epsilon list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starjunction",
        description="Solvers and studies for reaction-diffusion on thin star junctions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-graph", help="run the graph-limit term pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--order", type=int, choices=(0, 1), default=1)
    p.add_argument("--out", default="out")

    p = sub.add_parser("solve-cells", help="solve the special inner-layer problems")
    p.add_argument("--config", required=True)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--hv", type=float, default=None)
    p.add_argument("--out", default="out")

    p = sub.add_parser("solve-junction", help="solve the 3D reference problem")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--res", type=int, default=None)
    p.add_argument("--out", default="out")

    p = sub.add_parser("convergence", help="run a convergence sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", required=True, help="comma-separated, decreasing")
    p.add_argument("--order", type=int, choices=(0, 1), default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="run the invariant suite")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", default="0.1", help="comma-separated, decreasing")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_solve_graph(args) -> int:
    setup = load_config(args.config)
    run_term_scheduler(setup, out_dir=args.out)
    print(f"graph terms written to {args.out}")
    return EXIT_OK


def _cmd_solve_cells(args) -> int:
    setup = load_config(args.config)
    radius = args.radius if args.radius is not None else setup.numerics["cell_radius"]
    hv = args.hv if args.hv is not None else setup.numerics["cell_hv"]
    spec = cells.InnerDomainSpec(geometry=setup.geom, radius=float(radius), hv=float(hv))
    mesh = cells.build_inner_mesh(spec)
    out = Path(args.out)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    payload = {"radius": float(radius), "hv": float(hv), "outlets": []}
    for j in (1, 2):
        fld, rep = cells.solve_special_neumann(mesh, j)
        io.write_field_binary(out / "fields" / f"special_neumann_{j}.bin",
                              mesh, fld.values)
        payload["outlets"].append({
            "pair": j,
            "constants": rep.constant,
            "fitted_slopes": rep.fitted_slope,
            "decay_rates": rep.decay_rate,
            "compatibility_residual": fld.compatibility_residual,
        })
    io.write_json(out / "cells_report.json", payload)
    print(f"cell solutions written to {args.out}")
    return EXIT_OK


def _cmd_solve_junction(args) -> int:
    setup = load_config(args.config)
    res = args.res if args.res is not None else setup.numerics["resolution"]
    mesh = build_junction_mesh(setup.geom, float(args.eps), int(res))
    prob = ReferenceProblem(mesh, setup.geom, setup.data, setup.nl,
                            setup.regime, float(args.eps))
    series = prob.solve(setup.times)
    out = Path(args.out)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    io.write_field_binary(out / "fields" / "reference_final.bin", mesh,
                          series.values[-1])
    io.write_json(out / "junction_report.json", {
        "epsilon": float(args.eps),
        "voxels": mesh.n_voxels,
        "maxL2": space_time_norm(series, "L2_in_space_max_in_time"),
        "L2H1": space_time_norm(series, "L2_time_H1_space"),
    })
    print(f"reference solution written to {args.out}")
    return EXIT_OK


def _cmd_convergence(args) -> int:
    setup = load_config(args.config)
    plan = StudyPlan(kind="full-convergence", epsilons=_parse_eps(args.eps),
                     out_dir=args.out, seed=args.seed,
                     order="first" if args.order == 1 else "zeroth")
    report = run_convergence_study(setup, plan)
    n_fail = len(report.get("failures", []))
    print(f"convergence study finished: {len(report['rows'])} points, {n_fail} failures")
    return EXIT_OK if n_fail == 0 else EXIT_SOLVER


def _cmd_validate(args) -> int:
    setup = load_config(args.config)
    plan = StudyPlan(kind="validate", epsilons=_parse_eps(args.eps),
                     out_dir=args.out, seed=args.seed)
    result = run_validate(setup, plan)
    for check in result["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        print(f"[{status}] {check['name']}: {check['measured']:.3e} "
              f"(tolerance {check['tolerance']:.1e})")
    return EXIT_OK if result["passed"] else EXIT_VALIDATION


_COMMANDS = {
    "solve-graph": _cmd_solve_graph,
    "solve-cells": _cmd_solve_cells,
    "solve-junction": _cmd_solve_junction,
    "convergence": _cmd_convergence,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceFailure, SchedulerError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
