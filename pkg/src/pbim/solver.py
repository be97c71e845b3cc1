"""Projected block-iterative solvers (P-BIM, P-SIRT, block CQ) and paired
noisy/noise-free runs.

One step on block ``t`` reads

    x <- relaxed_project(C_t, x + theta_k * (A_t^T M_t r_t - alpha x), mu)

with ``r_t = b^t - A_t x`` for P-BIM and ``r_t = P_{Q_t}(A_t x) - A_t x`` for
the block CQ variant. A cycle is one pass over all ``p`` blocks; histories
are recorded at cycle boundaries.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .relaxation import NoiseBoundInputs, RelaxationSchedule, RelaxationWarning, delta_hat, noise_bound_general
from .sets import ConvexSet, WholeSpace, relaxed_project
from .sparse import BlockPartition, SparseMatrix, partition_blocks
from .spectral import SpectralEstimates, estimate_spectrum
from .weighting import BlockWeights, build_block_weights

logger = logging.getLogger(__name__)

ADMISSIBILITY_EPS = 1e-3
DIVERGENCE_LIMIT = 1e6


class SolverError(RuntimeError):
    pass


class DivergenceError(SolverError):
    pass


# -- problem -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Problem:
    """Block system with weights, per-block constraint sets and spectral data."""

    partition: BlockPartition
    weights: tuple[BlockWeights, ...]
    constraints: tuple[ConvexSet, ...]
    spectral: SpectralEstimates
    x_exact: np.ndarray | None = None

    def __post_init__(self):
        if len(self.weights) != self.partition.p or len(self.constraints) != self.partition.p:
            raise ValueError("need one weight set and one constraint set per block")

    @property
    def p(self) -> int:
        return self.partition.p

    @property
    def n(self) -> int:
        return self.partition.parent.n_cols

    @property
    def rhs(self) -> np.ndarray:
        return self.partition.rhs

    def with_rhs(self, b) -> "Problem":
        return replace(self, partition=self.partition.with_rhs(b))


def build_problem(
    A: SparseMatrix,
    b,
    p: int = 1,
    scheme: str = "cimmino",
    constraint: ConvexSet | Sequence[ConvexSet] | None = None,
    x_exact=None,
    power_tol: float = 1e-6,
    seed: int = 0,
) -> Problem:
    partition = partition_blocks(A, b, p)
    weights = build_block_weights(partition, scheme)
    if constraint is None:
        constraint = WholeSpace()
    sets = tuple(constraint) if isinstance(constraint, (list, tuple)) else (constraint,) * p
    spectral = estimate_spectrum(partition, weights, tol=power_tol, seed=seed)
    xs = None if x_exact is None else np.asarray(x_exact, dtype=np.float64)
    return Problem(partition, weights, sets, spectral, xs)


# -- configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Iteration settings.

    ``alpha`` may be ``"auto"``, meaning ``sigma_underbar**2``. ``control`` is
    ``"cyclic"`` or a finite sequence of 0-based block indices repeated
    periodically; such a sequence must contain every block in each window of
    ``window`` consecutive entries.
    """

    schedule: RelaxationSchedule
    cmax: int = 100
    alpha: float | str = 0.0
    mu: float = 1.0
    control: str | tuple[int, ...] = "cyclic"
    window: int | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.cmax < 1:
            raise ValueError("cmax must be at least 1")
        if not 0.0 < self.mu < 2.0:
            raise ValueError("mu must lie in (0, 2)")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ValueError(f"alpha must be a number or 'auto', got {self.alpha!r}")
        elif self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not isinstance(self.control, str):
            object.__setattr__(self, "control", tuple(int(i) for i in self.control))
        elif self.control != "cyclic":
            raise ValueError(f"unknown control {self.control!r}")

    def resolve_alpha(self, spectral: SpectralEstimates) -> float:
        if self.alpha == "auto":
            return spectral.sigma_underbar**2
        return float(self.alpha)


def validate_control(seq: Sequence[int], p: int, window: int) -> None:
    """Check that the periodic extension of ``seq`` is almost cyclic with ``window``."""
    seq = list(seq)
    if not seq:
        raise ValueError("empty control sequence")
    if any(not 0 <= i < p for i in seq):
        raise ValueError(f"control indices must lie in [0, {p})")
    if window < p:
        raise ValueError("window must be at least p")
    ext = seq * (window // len(seq) + 2)
    for start in range(len(seq)):
        if len(set(ext[start:start + window])) != p:
            raise ValueError(f"block missing from the window starting at position {start}")


def control_indices(config: SolverConfig, p: int, n_steps: int) -> np.ndarray:
    """Block index ``i_k`` (0-based) for ``k = 0 .. n_steps-1``."""
    if config.control == "cyclic":
        return np.arange(n_steps) % p
    seq = config.control
    validate_control(seq, p, config.window or len(seq))
    return np.resize(np.asarray(seq, dtype=np.int64), n_steps)


def step_thetas(problem: Problem, schedule: RelaxationSchedule, blocks: np.ndarray, alpha: float) -> np.ndarray:
    """``theta_k`` per step; the ``lambda`` rule is scaled by each block's norm."""
    n = len(blocks)
    if schedule.rule == "lambda":
        sig2 = np.asarray(problem.spectral.sigma_max_per_block) ** 2
        return schedule.theta / (sig2[blocks] + alpha)
    return schedule.thetas(n)


def _check_admissible(thetas, blocks, problem: Problem, alpha: float) -> None:
    sig2 = np.asarray(problem.spectral.sigma_max_per_block) ** 2
    lam = thetas * (sig2[blocks] + alpha)
    bad = (lam < ADMISSIBILITY_EPS) | (lam > 2.0 - ADMISSIBILITY_EPS)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        warnings.warn(
            f"implied lambda_{k} = {lam[k]:.4g} outside [{ADMISSIBILITY_EPS}, {2 - ADMISSIBILITY_EPS}]",
            RelaxationWarning,
            stacklevel=3,
        )


# -- history -------------------------------------------------------------------------

HISTORY_COLUMNS = ("cycle", "relative_error", "noise_error", "iteration_error", "residual", "theta", "bound")


@dataclass
class ErrorHistory:
    """Per-cycle error record; absent quantities are stored as ``None``."""

    cycle: list[int] = field(default_factory=list)
    relative_error: list[float | None] = field(default_factory=list)
    noise_error: list[float | None] = field(default_factory=list)
    iteration_error: list[float | None] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    theta: list[float] = field(default_factory=list)
    bound: list[float | None] = field(default_factory=list)

    def append(self, cycle, residual, theta, relative_error=None, noise_error=None, iteration_error=None, bound=None):
        self.cycle.append(int(cycle))
        self.residual.append(float(residual))
        self.theta.append(float(theta))
        self.relative_error.append(None if relative_error is None else float(relative_error))
        self.noise_error.append(None if noise_error is None else float(noise_error))
        self.iteration_error.append(None if iteration_error is None else float(iteration_error))
        self.bound.append(None if bound is None else float(bound))

    def __len__(self) -> int:
        return len(self.cycle)

    def rows(self):
        for i in range(len(self)):
            yield tuple(getattr(self, c)[i] for c in HISTORY_COLUMNS)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HISTORY_COLUMNS)
            for row in self.rows():
                writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "ErrorHistory":
        hist = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                opt = {c: (float(rec[c]) if rec[c] != "" else None) for c in HISTORY_COLUMNS[1:]}
                hist.append(int(rec["cycle"]), opt.pop("residual"), opt.pop("theta"), **opt)
        return hist


@dataclass
class SolverState:
    x: np.ndarray
    k: int = 0
    cycle: int = 0
    history: ErrorHistory = field(default_factory=ErrorHistory)


# -- single steps --------------------------------------------------------------------

def u_vector(A_t, x, b_t, alpha: float, weights: BlockWeights | None = None) -> np.ndarray:
    """``A_t^T M_t (b^t - A_t x) - alpha x`` (``M_t`` = identity if no weights)."""
    x = np.asarray(x, dtype=np.float64)
    b_t = np.asarray(b_t, dtype=np.float64)
    if A_t.shape != (b_t.size, x.size):
        raise ValueError(f"dimension mismatch: block {A_t.shape}, b {b_t.shape}, x {x.shape}")
    r = b_t - A_t @ x
    if weights is not None:
        r = weights.m_diag * r
    u = A_t.T @ r
    if alpha:
        u = u - alpha * x
    return u


def _advance(x, blk_t, w: BlockWeights, residual, theta, alpha, C: ConvexSet, mu) -> np.ndarray:
    g = blk_t @ (w.m_diag * residual)
    if w.n_diag is not None:
        g = w.n_diag * g
    if alpha:
        g = g - alpha * x
    x_new = relaxed_project(C, x + theta * g, mu)
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError("non-finite iterate")
    return x_new


def _theta_at(problem: Problem, schedule: RelaxationSchedule, t: int, k: int, alpha: float) -> float:
    if schedule.rule == "lambda":
        return schedule.theta / (problem.spectral.sigma_max_per_block[t] ** 2 + alpha)
    return schedule(k)


def _block_index(config: SolverConfig, p: int, k: int) -> int:
    if config.control == "cyclic":
        return k % p
    return config.control[k % len(config.control)]


def pbim_step(state: SolverState, problem: Problem, config: SolverConfig, theta: float | None = None) -> SolverState:
    """One P-BIM step on block ``i_k``; returns a new state."""
    t = _block_index(config, problem.p, state.k)
    alpha = config.resolve_alpha(problem.spectral)
    if theta is None:
        theta = _theta_at(problem, config.schedule, t, state.k, alpha)
    part = problem.partition
    blk = part.blocks[t]
    residual = part.rhs_blocks[t] - blk @ state.x
    x = _advance(state.x, part.blocks_t[t], problem.weights[t], residual, theta, alpha, problem.constraints[t], config.mu)
    k = state.k + 1
    return SolverState(x, k, k // problem.p, state.history)


def block_cq_step(
    state: SolverState,
    problem: Problem,
    targets: Sequence[ConvexSet],
    config: SolverConfig,
    theta: float | None = None,
) -> SolverState:
    """One block split-feasibility step: the data residual becomes
    ``P_{Q_t}(A_t x) - A_t x``. With ``Q_t = {b^t}`` this is :func:`pbim_step`."""
    t = _block_index(config, problem.p, state.k)
    alpha = config.resolve_alpha(problem.spectral)
    if theta is None:
        theta = _theta_at(problem, config.schedule, t, state.k, alpha)
    part = problem.partition
    ax = part.blocks[t] @ state.x
    residual = targets[t].project(ax) - ax
    x = _advance(state.x, part.blocks_t[t], problem.weights[t], residual, theta, alpha, problem.constraints[t], config.mu)
    k = state.k + 1
    return SolverState(x, k, k // problem.p, state.history)


# -- full runs ----------------------------------------------------------------------------

def _rel(x, x_exact, nrm):
    return float(np.linalg.norm(x - x_exact) / nrm)


def _run(problem: Problem, config: SolverConfig, x0, residual_fn, targets=None) -> SolverState:
    p = problem.p
    n_steps = config.cmax * p
    alpha = config.resolve_alpha(problem.spectral)
    blocks = control_indices(config, p, n_steps)
    thetas = step_thetas(problem, config.schedule, blocks, alpha)
    if np.any(thetas <= 0):
        raise ValueError("relaxation parameters must be positive")
    _check_admissible(thetas, blocks, problem, alpha)

    part = problem.partition
    A = part.parent.csr
    b = part.rhs
    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=np.float64)
    xs = problem.x_exact
    xs_norm = None if xs is None else float(np.linalg.norm(xs))
    history = ErrorHistory()
    for k in range(n_steps):
        t = blocks[k]
        blk = part.blocks[t]
        residual = residual_fn(t, blk, x)
        x = _advance(x, part.blocks_t[t], problem.weights[t], residual, thetas[k], alpha, problem.constraints[t], config.mu)
        if (k + 1) % p == 0:
            cycle = (k + 1) // p
            rel = None if xs is None else _rel(x, xs, xs_norm)
            if rel is not None and rel > DIVERGENCE_LIMIT:
                raise DivergenceError(f"relative error {rel:.3g} at cycle {cycle}")
            if cycle % config.record_every == 0 or cycle == config.cmax:
                history.append(cycle, np.linalg.norm(b - A @ x), thetas[k], relative_error=rel)
    return SolverState(x, n_steps, config.cmax, history)


def pbim_solve(problem: Problem, config: SolverConfig, x0=None) -> SolverState:
    """Run ``config.cmax`` cycles of P-BIM from ``x0`` (default zero)."""
    part = problem.partition

    def residual(t, blk, x):
        return part.rhs_blocks[t] - blk @ x

    return _run(problem, config, x0, residual)


def psirt_solve(A: SparseMatrix, b, C: ConvexSet, scheme: str, config: SolverConfig, x_exact=None, x0=None) -> SolverState:
    """P-SIRT: P-BIM with a single block; ``cmax`` counts iterations."""
    problem = build_problem(A, b, p=1, scheme=scheme, constraint=C, x_exact=x_exact)
    return pbim_solve(problem, config, x0)


def block_cq_solve(problem: Problem, targets: Sequence[ConvexSet], config: SolverConfig, x0=None) -> SolverState:
    if len(targets) != problem.p:
        raise ValueError("need one target set Q_t per block")

    def residual(t, blk, x):
        ax = blk @ x
        return targets[t].project(ax) - ax

    return _run(problem, config, x0, residual)


# -- paired runs ----------------------------------------------------------------------------

@dataclass
class NoiseDecomposition:
    """Per-iteration traces of a paired run; index ``k`` is the iterate ``x^k``."""

    noise_error: np.ndarray
    iteration_error: np.ndarray | None
    bound: np.ndarray | None
    thetas: np.ndarray
    thetas_clean: np.ndarray
    inputs: NoiseBoundInputs


@dataclass
class PairedRun:
    noisy: ErrorHistory
    clean: ErrorHistory
    decomposition: NoiseDecomposition
    x: np.ndarray
    x_clean: np.ndarray


def paired_run(problem: Problem, noise, config: SolverConfig, clean_schedule: RelaxationSchedule | None = None, x0=None) -> PairedRun:
    """Run P-BIM on ``b = bbar + noise`` and on ``bbar`` in lockstep.

    ``problem`` carries the exact data ``bbar``. Both trajectories share the
    control sequence. The noisy run uses ``config.schedule``; the noise-free
    run uses ``clean_schedule`` (default: the schedule with ``beta_db = 0``).
    The bound column is filled when ``alpha = sigma_underbar^2``.
    """
    p = problem.p
    part_clean = problem.partition
    noise = np.asarray(noise, dtype=np.float64)
    b_clean = part_clean.rhs
    if noise.shape != b_clean.shape:
        raise ValueError(f"noise has shape {noise.shape}, expected {b_clean.shape}")
    b_noisy = b_clean + noise
    part_noisy = part_clean.with_rhs(b_noisy)

    n_steps = config.cmax * p
    alpha = config.resolve_alpha(problem.spectral)
    blocks = control_indices(config, p, n_steps)
    schedule_clean = config.schedule.noise_free() if clean_schedule is None else clean_schedule
    thetas = step_thetas(problem, config.schedule, blocks, alpha)
    thetas_clean = step_thetas(problem, schedule_clean, blocks, alpha)
    if np.any(thetas <= 0) or np.any(thetas_clean <= 0):
        raise ValueError("relaxation parameters must be positive")
    _check_admissible(thetas, blocks, problem, alpha)

    sig_lo = problem.spectral.sigma_underbar
    with_bound = math.isclose(alpha, sig_lo**2, rel_tol=1e-12)
    A = part_clean.parent.csr
    xs = problem.x_exact
    xs_norm = None if xs is None else float(np.linalg.norm(xs))

    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=np.float64)
    xb = x.copy()
    e_noise = np.zeros(n_steps + 1)
    e_iter = None if xs is None else np.zeros(n_steps + 1)
    if e_iter is not None:
        e_iter[0] = np.linalg.norm(xb - xs)
    u_norms = np.zeros(n_steps)
    noisy, clean = ErrorHistory(), ErrorHistory()
    for k in range(n_steps):
        t = blocks[k]
        blk, blk_t, w, C = part_clean.blocks[t], part_clean.blocks_t[t], problem.weights[t], problem.constraints[t]
        r_noisy = part_noisy.rhs_blocks[t] - blk @ x
        r_clean = part_clean.rhs_blocks[t] - blk @ xb
        u_clean = blk_t @ (w.m_diag * r_clean)
        if alpha:
            u_clean = u_clean - alpha * xb
        u_norms[k] = np.linalg.norm(u_clean)
        x = _advance(x, blk_t, w, r_noisy, thetas[k], alpha, C, config.mu)
        xb = _advance(xb, blk_t, w, r_clean, thetas_clean[k], alpha, C, config.mu)
        e_noise[k + 1] = np.linalg.norm(x - xb)
        if e_iter is not None:
            e_iter[k + 1] = np.linalg.norm(xb - xs)
        if (k + 1) % p:
            continue
        cycle = (k + 1) // p
        rel = rel_clean = None
        if xs is not None:
            rel, rel_clean = _rel(x, xs, xs_norm), e_iter[k + 1] / xs_norm
            if max(rel, rel_clean) > DIVERGENCE_LIMIT:
                raise DivergenceError(f"relative error above {DIVERGENCE_LIMIT:g} at cycle {cycle}")
        if cycle % config.record_every == 0 or cycle == config.cmax:
            it_err = None if e_iter is None else e_iter[k + 1]
            noisy.append(cycle, np.linalg.norm(b_noisy - A @ x), thetas[k], relative_error=rel,
                         noise_error=e_noise[k + 1], iteration_error=it_err)
            clean.append(cycle, np.linalg.norm(b_clean - A @ xb), thetas_clean[k], relative_error=rel_clean,
                         noise_error=0.0, iteration_error=it_err)

    inputs = NoiseBoundInputs.from_traces(
        sig_lo, delta_hat(part_clean, problem.weights, noise), thetas, thetas_clean, u_norms, alpha,
        beta_b=config.schedule.beta_b, beta_db=config.schedule.beta_db,
    )
    bound = None
    if with_bound:
        bound = np.zeros(n_steps + 1)
        for k in range(1, n_steps + 1):
            bound[k] = noise_bound_general(inputs, k)
        noisy.bound[:] = [float(bound[c * p]) for c in noisy.cycle]
    decomposition = NoiseDecomposition(e_noise, e_iter, bound, thetas, thetas_clean, inputs)
    return PairedRun(noisy, clean, decomposition, x, xb)


def detect_semiconvergence(history: ErrorHistory) -> tuple[int, float]:
    """Cycle of the smallest relative error (earliest on ties) and its value."""
    if len(history) == 0:
        raise ValueError("empty history")
    errs = history.relative_error
    if any(e is None for e in errs):
        raise ValueError("relative error unavailable (no exact solution)")
    i = int(np.argmin(errs))
    return history.cycle[i], float(errs[i])
