"""Experiment sweeps over (blocks, rule, noise level, seed) and CSV reports."""
from __future__ import annotations

import configparser
import csv
import hashlib
import logging
import os
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .relaxation import (
    RelaxationSchedule,
    beta_values,
    default_r,
    default_theta_grid,
    estimate_noise_vector,
    rule_bound,
    theta_opt_search,
    zeta,
)
from .sets import parse_set
from .solver import Problem, SolverConfig, build_problem, detect_semiconvergence, paired_run
from .sparse import read_matrix_market, read_vector
from .tomo import add_noise, make_tomo_problem

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "PBIM_OUTPUT_DIR"
SWEEP_RULES = ("psi1", "psi2", "psi3", "gamma", "theta_opt", "constant")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def fmt(v) -> str:
    """Deterministic CSV cell text."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# -- problems -------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """``kind`` is ``tomo``, ``matrix`` or ``random``."""

    kind: str = "tomo"
    size: int = 64
    views: int = 24
    rays: int = 95
    spacing: float = 1.0
    matrix: str | None = None
    rhs: str | None = None
    exact: str | None = None
    m: int = 60
    n: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("tomo", "matrix", "random"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind == "matrix" and not (self.matrix and self.rhs):
            raise ValueError("matrix problems need both a matrix and an rhs file")


def load_system(spec: ProblemSpec):
    """``(A, exact rhs, exact solution or None)``."""
    if spec.kind == "tomo":
        tp = make_tomo_problem(spec.size, spec.views, spec.rays, spec.spacing)
        return tp.A, tp.b, tp.x_exact
    if spec.kind == "random":
        from .sparse import SparseMatrix

        rng = np.random.default_rng(spec.seed)
        A = SparseMatrix.from_dense(rng.standard_normal((spec.m, spec.n)))
        x = rng.uniform(0.0, 1.0, spec.n)
        return A, A.csr @ x, x
    A = read_matrix_market(spec.matrix)
    b = read_vector(spec.rhs)
    x = None if spec.exact is None else read_vector(spec.exact)
    return A, b, x


# -- experiment spec ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    blocks: tuple[int, ...] = (8,)
    rules: tuple[str, ...] = ("psi3", "gamma")
    noise_levels: tuple[float, ...] = (0.02,)
    guessed_levels: tuple[float, ...] = ()
    cmax: int = 100
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "."
    weights: str = "cimmino"
    constraint: str = "box:0,1"
    alpha: float | str = 0.0
    r: float | None = None
    theta: float | None = None
    search_cycles: int = 100
    grid_points: int = 50

    def __post_init__(self):
        if not self.rules or not self.noise_levels:
            raise ValueError("need at least one rule and one noise level")
        if self.cmax < 1:
            raise ValueError("cmax must be at least 1")
        for rule in self.rules:
            if rule not in SWEEP_RULES:
                raise ValueError(f"unknown rule {rule!r}; choose from {SWEEP_RULES}")
        if "constant" in self.rules and self.theta is None:
            raise ValueError("rule 'constant' needs theta")


_LIST_FIELDS = {"blocks": int, "rules": str, "noise_levels": float, "guessed_levels": float, "seeds": int}
_SCALAR_FIELDS = {"cmax": int, "output_dir": str, "weights": str, "constraint": str, "r": float,
                  "theta": float, "search_cycles": int, "grid_points": int}


def _parse_value(key, text, types):
    cast = types[key]
    if key in _LIST_FIELDS:
        return tuple(cast(v.strip().replace("-", "_") if cast is str else v.strip())
                     for v in text.split(",") if v.strip())
    return cast(text.strip())


def spec_from_mapping(values: dict, base: ExperimentSpec | None = None) -> ExperimentSpec:
    """Apply flat ``key -> text`` settings (config file or CLI) to a spec."""
    spec = base or ExperimentSpec()
    prob_kw, exp_kw = {}, {}
    prob_types = {f.name: f.type for f in fields(ProblemSpec)}
    for key, text in values.items():
        if text is None:
            continue
        key = key.replace("-", "_")
        if key.startswith("problem_"):
            name = key[len("problem_"):]
            if name not in prob_types:
                raise ValueError(f"unknown problem setting {name!r}")
            default = getattr(ProblemSpec(), name)
            prob_kw[name] = text if default is None or isinstance(default, str) else type(default)(text)
        elif key == "alpha":
            exp_kw["alpha"] = "auto" if str(text).strip() == "auto" else float(text)
        elif key in _LIST_FIELDS:
            exp_kw[key] = _parse_value(key, text, _LIST_FIELDS) if isinstance(text, str) else tuple(text)
        elif key in _SCALAR_FIELDS:
            exp_kw[key] = _parse_value(key, text, _SCALAR_FIELDS) if isinstance(text, str) else text
        else:
            raise ValueError(f"unknown experiment setting {key!r}")
    if prob_kw:
        exp_kw["problem"] = replace(spec.problem, **prob_kw)
    return replace(spec, **exp_kw)


def load_spec(path, overrides: dict | None = None) -> ExperimentSpec:
    """Read an INI-style config with ``[problem]``, ``[experiment]`` and
    ``[solver]`` sections; ``overrides`` win over file values."""
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    flat = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            flat[f"problem_{key}" if section == "problem" else key] = val
    spec = spec_from_mapping(flat)
    return spec_from_mapping(overrides or {}, spec)


# -- sweep ---------------------------------------------------------------------------------

SUMMARY_COLUMNS = ("blocks", "rule", "noise_level", "guessed_level", "seed", "r", "theta", "min_relative_error",
                   "k_star", "final_relative_error", "theta_checksum", "history_file", "status")
BETA_COLUMNS = ("blocks", "noise_level", "seed", "exact_beta_db", "guessed_level", "estimated_beta_db")
MINIMA_COLUMNS = ("blocks", "noise_level", "seed", "rule", "guessed_level", "k_star", "min_relative_error")


@dataclass
class SweepReport:
    summary: Path
    beta_table: Path
    minima: Path
    histories: list[Path]
    failures: int


def theta_checksum(thetas) -> str:
    return hashlib.sha256(np.ascontiguousarray(thetas, dtype=np.float64).tobytes()).hexdigest()[:16]


def _cell_name(p, rule, level, g, seed) -> str:
    tag = rule if g is None else f"{rule}_g{g:g}"
    return f"history_p{p}_{tag}_noise{level:g}_seed{seed}.csv"


def make_schedule(rule: str, problem: Problem, b_noisy, level: float, *, r=None, guessed=None, seed=0,
                  theta=None, search_cycles=100, grid_points=50, alpha=0.0) -> RelaxationSchedule:
    """Schedule for one sweep cell; theta-opt trains on the exact solution."""
    sb = problem.spectral.sigma_bar
    if rule in ("psi1", "psi2"):
        return RelaxationSchedule(rule, sb)
    if rule == "psi3":
        return RelaxationSchedule(rule, sb, r=1.5 if r is None else r)
    if rule == "gamma":
        g = level if guessed is None else guessed
        part = problem.partition
        est = estimate_noise_vector(b_noisy, g, [seed, 1])
        return RelaxationSchedule(
            "gamma", sb, r=default_r(level) if r is None else r,
            beta_b=beta_values(part, problem.weights, b_noisy),
            beta_db=beta_values(part, problem.weights, est),
        )
    if rule == "theta_opt":
        noisy = problem.with_rhs(b_noisy)
        grid = default_theta_grid(sb, grid_points)
        res = theta_opt_search(noisy, grid, cmax=search_cycles,
                               alpha=alpha if alpha != "auto" else problem.spectral.sigma_underbar**2)
        return RelaxationSchedule("theta_opt", sb, theta=res.theta)
    if rule == "constant":
        return RelaxationSchedule("constant", sb, theta=theta)
    raise ValueError(f"unknown rule {rule!r}")


def run_sweep(spec: ExperimentSpec) -> SweepReport:
    """Paired runs for every cell, one history CSV each, plus summary tables.

    Failing cells are recorded with their error and the sweep continues.
    """
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    A, b_exact, x_exact = load_system(spec.problem)
    constraint = parse_set(spec.constraint)
    summary, beta_rows, minima, histories = [], [], [], []
    failures = 0
    for p in spec.blocks:
        problem = build_problem(A, b_exact, p, spec.weights, constraint, x_exact)
        for level in spec.noise_levels:
            guesses = spec.guessed_levels or (level,)
            for seed in spec.seeds:
                b_noisy, db = add_noise(b_exact, level, seed)
                exact_beta = beta_values(problem.partition, problem.weights, db)
                for g in guesses:
                    est = estimate_noise_vector(b_noisy, g, [seed, 1])
                    beta_rows.append((p, level, seed, exact_beta, g,
                                      beta_values(problem.partition, problem.weights, est)))
                for rule in spec.rules:
                    for g in (guesses if rule == "gamma" else (None,)):
                        name = _cell_name(p, rule, level, g, seed)
                        try:
                            sched = make_schedule(rule, problem, b_noisy, level, r=spec.r, guessed=g, seed=seed,
                                                  theta=spec.theta, search_cycles=spec.search_cycles,
                                                  grid_points=spec.grid_points, alpha=spec.alpha)
                            cfg = SolverConfig(sched, cmax=spec.cmax, alpha=spec.alpha)
                            with warnings.catch_warnings():
                                warnings.simplefilter("ignore")
                                run = paired_run(problem, db, cfg)
                            run.noisy.to_csv(out / name)
                            histories.append(out / name)
                            k_star, err = (detect_semiconvergence(run.noisy) if x_exact is not None
                                           else (None, None))
                            final = run.noisy.relative_error[-1]
                            r_used = sched.r if rule in ("psi3", "gamma") else None
                            theta_used = sched.theta if rule in ("theta_opt", "constant") else None
                            summary.append((p, rule, level, g, seed, r_used, theta_used, err, k_star, final,
                                            theta_checksum(run.decomposition.thetas), name, "ok"))
                            minima.append((p, level, seed, rule, g, k_star, err))
                        except Exception as exc:  # noqa: BLE001 - recorded per cell
                            failures += 1
                            logger.warning("cell %s failed: %s", name, exc)
                            summary.append((p, rule, level, g, seed, None, None, None, None, None, None, name,
                                            f"error: {type(exc).__name__}: {exc}"))
    report = SweepReport(out / "summary.csv", out / "beta_table.csv", out / "minima.csv", histories, failures)
    write_csv(report.summary, SUMMARY_COLUMNS, summary)
    write_csv(report.beta_table, BETA_COLUMNS, beta_rows)
    write_csv(report.minima, MINIMA_COLUMNS, minima)
    return report


# -- bound table ---------------------------------------------------------------------------

BOUND_COLUMNS = ("k", "zeta", "psi1", "psi2", "psi3", "gamma", "gamma_le_psi3", "psi2_le_psi1")


def emit_bound_table(k_max: int, beta_db: float, sigma_underbar: float, r: float = 1.5, path=None):
    """Per-k closed-form bounds of the four rules with the two dominance checks."""
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    ks = np.arange(2, k_max + 1)
    cols = {rule: rule_bound(rule, ks, sigma_underbar, beta_db, r) for rule in ("psi1", "psi2", "psi3", "gamma")}
    z = zeta(ks)
    rows = [
        (int(k), float(z[i]), *(float(cols[c][i]) for c in ("psi1", "psi2", "psi3", "gamma")),
         bool(cols["gamma"][i] <= cols["psi3"][i]), bool(cols["psi2"][i] <= cols["psi1"][i]))
        for i, k in enumerate(ks)
    ]
    if path is not None:
        write_csv(path, BOUND_COLUMNS, rows)
    return rows
