"""Command-line entry point: ``pbim {generate,solve,sweep,bounds,zeta}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import harness
from .relaxation import g_poly, zeta
from .sets import parse_set
from .solver import build_problem, detect_semiconvergence, paired_run, pbim_solve, SolverConfig
from .sparse import write_matrix_market, write_vector
from .tomo import add_noise, make_tomo_problem
from .weighting import SCHEMES

RULE_CHOICES = ("psi1", "psi2", "psi3", "gamma", "theta-opt", "constant")


class CLIError(Exception):
    pass


def _out_path(name: str | None, default: str) -> Path:
    path = Path(name or default)
    if not path.is_absolute() and name is None:
        path = harness.default_output_dir() / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _alpha(text: str):
    if text == "auto":
        return "auto"
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("alpha must be a number or 'auto'") from None
    if val < 0:
        raise argparse.ArgumentTypeError("alpha must be nonnegative")
    return val


def _problem_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("problem")
    g.add_argument("--matrix", help="Matrix Market file; uses --rhs and optionally --exact")
    g.add_argument("--rhs")
    g.add_argument("--exact")
    g.add_argument("--random", metavar="M,N", help="dense Gaussian system with a uniform [0,1] solution")
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--views", type=int, default=24)
    g.add_argument("--rays", type=int, default=95)


def _problem_spec(args) -> harness.ProblemSpec:
    if args.matrix:
        return harness.ProblemSpec("matrix", matrix=args.matrix, rhs=args.rhs, exact=args.exact)
    if args.random:
        try:
            m, n = (int(v) for v in args.random.split(","))
        except ValueError:
            raise CLIError("--random expects M,N") from None
        return harness.ProblemSpec("random", m=m, n=n, seed=args.seed)
    return harness.ProblemSpec("tomo", size=args.size, views=args.views, rays=args.rays)


def cmd_generate(args) -> dict:
    tp = make_tomo_problem(args.size, args.views, args.rays)
    b, _ = add_noise(tp.b, args.noise, args.seed)
    paths = {
        "matrix": _out_path(args.out_matrix, "matrix.mtx"),
        "rhs": _out_path(args.out_rhs, "rhs.txt"),
        "phantom": _out_path(args.out_phantom, "phantom.txt"),
    }
    write_matrix_market(paths["matrix"], tp.A)
    write_vector(paths["rhs"], b)
    write_vector(paths["phantom"], tp.x_exact)
    return {"rows": tp.A.n_rows, "cols": tp.A.n_cols, "nnz": tp.A.nnz, **{k: str(v) for k, v in paths.items()}}


def cmd_solve(args) -> dict:
    spec = _problem_spec(args)
    A, b_exact, x_exact = harness.load_system(spec)
    problem = build_problem(A, b_exact, args.blocks, args.weights, parse_set(args.constraint), x_exact)
    rule = args.rule.replace("-", "_")
    b_noisy, db = add_noise(b_exact, args.noise_level, args.seed)
    if rule == "gamma" and args.noise_level == 0 and args.guessed_noise is None:
        raise CLIError("rule gamma needs --noise-level or --guessed-noise")
    if rule == "theta_opt" and x_exact is None:
        raise CLIError("theta-opt needs the exact solution")
    sched = harness.make_schedule(rule, problem, b_noisy, args.noise_level, r=args.r, guessed=args.guessed_noise,
                                  seed=args.seed, theta=args.theta, alpha=args.alpha)
    cfg = SolverConfig(sched, cmax=args.cycles, alpha=args.alpha)
    if x_exact is not None:
        run = paired_run(problem, db, cfg)
        hist, x = run.noisy, run.x
    else:
        state = pbim_solve(problem.with_rhs(b_noisy), cfg)
        hist, x = state.history, state.x
    out = _out_path(args.out, "history.csv")
    hist.to_csv(out)
    result = {"history": str(out), "cycles": len(hist), "residual": hist.residual[-1],
              "sigma_bar": problem.spectral.sigma_bar, "sigma_underbar": problem.spectral.sigma_underbar}
    if x_exact is not None:
        result["k_star"], result["min_relative_error"] = detect_semiconvergence(hist)
        result["final_relative_error"] = hist.relative_error[-1]
    if args.out_solution:
        write_vector(args.out_solution, x)
        result["solution"] = args.out_solution
    return result


def cmd_sweep(args) -> dict:
    overrides = {
        "blocks": args.blocks, "rules": args.rules, "noise_levels": args.noise_levels,
        "guessed_levels": args.guessed_noise, "seeds": args.seeds, "cmax": args.cycles,
        "weights": args.weights, "alpha": args.alpha, "r": args.r, "theta": args.theta,
        "output_dir": args.out,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        spec = harness.load_spec(args.config, overrides)
    else:
        spec = harness.spec_from_mapping(overrides)
    if args.out is None and spec.output_dir == ".":
        spec = harness.spec_from_mapping({"output_dir": str(harness.default_output_dir())}, spec)
    report = harness.run_sweep(spec)
    return {"summary": str(report.summary), "beta_table": str(report.beta_table), "minima": str(report.minima),
            "cells": len(report.histories) + report.failures, "failures": report.failures}


def cmd_bounds(args) -> dict:
    out = _out_path(args.out, "bounds.csv")
    rows = harness.emit_bound_table(args.kmax, args.beta_db, args.sigma_underbar, args.r, out)
    return {"table": str(out), "rows": len(rows),
            "gamma_le_psi3": all(r[6] for r in rows), "psi2_le_psi1": all(r[7] for r in rows)}


def cmd_zeta(args) -> dict:
    if args.kmax < 2:
        raise CLIError("--kmax must be at least 2")
    ks = np.arange(2, args.kmax + 1)
    z = zeta(ks)
    out = _out_path(args.out, "zeta.csv")
    harness.write_csv(out, ("k", "zeta", "g_residual"),
                      [(int(k), float(v), float(g_poly(v, int(k)))) for k, v in zip(ks, z)])
    return {"table": str(out), "rows": int(ks.size)}


def _csv_list(cast):
    def parse(text):
        try:
            return ",".join(str(cast(v)) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbim", description="Projected block-iterative reconstruction.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a Shepp-Logan test problem")
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--views", type=int, default=24)
    g.add_argument("--rays", type=int, default=95)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-matrix")
    g.add_argument("--out-rhs")
    g.add_argument("--out-phantom")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run P-BIM on one problem")
    _problem_args(s)
    s.add_argument("--blocks", type=int, default=1)
    s.add_argument("--weights", choices=SCHEMES, default="cimmino")
    s.add_argument("--constraint", default="box:0,1")
    s.add_argument("--rule", choices=RULE_CHOICES, default="psi3")
    s.add_argument("--r", type=float)
    s.add_argument("--guessed-noise", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--cycles", type=int, default=100)
    s.add_argument("--alpha", type=_alpha, default=0.0)
    s.add_argument("--noise-level", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--out-solution")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run an experiment grid")
    w.add_argument("--config")
    w.add_argument("--blocks", type=_csv_list(int))
    w.add_argument("--rules", type=_csv_list(str))
    w.add_argument("--noise-levels", type=_csv_list(float))
    w.add_argument("--guessed-noise", type=_csv_list(float))
    w.add_argument("--seeds", type=_csv_list(int))
    w.add_argument("--cycles", type=int)
    w.add_argument("--weights", choices=SCHEMES)
    w.add_argument("--alpha", type=_alpha)
    w.add_argument("--r", type=float)
    w.add_argument("--theta", type=float)
    w.add_argument("--out", help="output directory")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bounds", help="tabulate the closed-form rule bounds")
    b.add_argument("--kmax", type=int, default=500)
    b.add_argument("--beta-db", type=float, required=True)
    b.add_argument("--sigma-underbar", type=float, required=True)
    b.add_argument("--r", type=float, default=1.5)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    z = sub.add_parser("zeta", help="tabulate the roots zeta_k")
    z.add_argument("--kmax", type=int, default=100)
    z.add_argument("--out")
    z.set_defaults(func=cmd_zeta)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}), file=sys.stderr)
        return 1
    print(json.dumps(result, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
