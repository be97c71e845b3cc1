"""Relaxation-parameter schedules and noise-error bounds.

Every diminishing rule here is driven by ``zeta_k``, the unique root in
(0, 1) of ``g_{k-1}(y) = (2k-1) y^(k-1) - (1 + y + ... + y^(k-2))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .sparse import BlockPartition
from .weighting import BlockWeights

ZETA_TOL = 1e-14
RULES = ("psi1", "psi2", "psi3", "gamma", "theta_opt", "constant", "lambda")


class RelaxationWarning(UserWarning):
    pass


# -- zeta ----------------------------------------------------------------------

def g_poly(y, k):
    """``g_{k-1}(y)`` via the geometric-sum closed form (valid for y != 1)."""
    y = np.asarray(y, dtype=np.float64)
    yk1 = y ** (k - 1)
    return (2 * k - 1) * yk1 - (1.0 - yk1) / (1.0 - y)


def zeta_root(k: int, tol: float = ZETA_TOL) -> float:
    """Bisection for ``zeta_k`` on (0, 1); ``g(0) = -1 < 0 < g(1^-)``."""
    if k < 2:
        raise ValueError(f"zeta_k is defined for k >= 2, got {k}")
    lo, hi = 0.0, 1.0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g_poly(mid, k) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _bisect_all(ks: np.ndarray) -> np.ndarray:
    lo = np.zeros(ks.shape)
    hi = np.ones(ks.shape)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        neg = g_poly(mid, ks) < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


class ZetaTable:
    """Lazily grown table of ``zeta_k``; ``values[k]`` holds ``zeta_k`` for k >= 2."""

    def __init__(self, kmax: int = 2):
        self.values = np.full(2, np.nan)
        self.extend(kmax)

    @property
    def kmax(self) -> int:
        return len(self.values) - 1

    def extend(self, kmax: int) -> None:
        if kmax <= self.kmax:
            return
        ks = np.arange(len(self.values), kmax + 1, dtype=np.float64)
        self.values = np.concatenate([self.values, _bisect_all(ks)])

    def __getitem__(self, k):
        kk = np.max(k) if np.ndim(k) else k
        if kk > self.kmax:
            self.extend(max(int(kk), 2 * self.kmax))
        return self.values[k]


_ZETA = ZetaTable(1024)


def zeta(k):
    """``zeta_k`` from the shared table (scalar or integer array)."""
    if np.any(np.asarray(k) < 2):
        raise ValueError("zeta_k is defined for k >= 2")
    return _ZETA[k]


# -- Psi^k -----------------------------------------------------------------------

def psi_function(x: float, y: float, k: int) -> float:
    """``(1 - (1 - y x^2)^k) / x``, accurate when ``y x^2`` is small."""
    if x == 0:
        return 0.0
    t = y * x * x
    if t < 1.0:
        return -math.expm1(k * math.log1p(-t)) / x
    return (1.0 - (1.0 - t) ** k) / x


# -- schedules -------------------------------------------------------------------

@dataclass(frozen=True)
class RelaxationSchedule:
    """A rule producing ``theta_k`` for every iteration index ``k``.

    ``lambda`` is the only rule stated in terms of ``lambda_k``; the solver
    turns it into ``theta_k = lambda / (||M_t^{1/2} A_t||^2 + alpha)`` per block.
    """

    rule: str
    sigma_bar: float = 1.0
    r: float = 1.5
    beta_b: float = 0.0
    beta_db: float = 0.0
    theta: float | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; choose from {RULES}")
        if self.sigma_bar <= 0:
            raise ValueError("sigma_bar must be positive")
        if self.rule in ("psi3", "gamma") and not 1.0 < self.r <= 2.0:
            raise ValueError(f"r={self.r} must lie in (1, 2]")
        if self.rule == "gamma":
            if self.beta_b <= 0:
                raise ValueError("gamma rule needs beta_b > 0")
            if self.beta_db < 0:
                raise ValueError("beta_db must be nonnegative")
        if self.rule in ("constant", "theta_opt", "lambda"):
            if self.theta is None or not self.theta > 0:
                raise ValueError(f"rule {self.rule!r} needs a positive theta, got {self.theta}")

    @property
    def theta0(self) -> float:
        return math.sqrt(2.0) / self.sigma_bar**2

    @property
    def noise_dependent(self) -> bool:
        return self.rule == "gamma" and self.beta_db > 0

    def noise_free(self) -> "RelaxationSchedule":
        """The schedule a run on exact data uses (gamma with beta_db = 0)."""
        if self.rule == "gamma":
            return replace(self, beta_db=0.0)
        return self

    def thetas(self, n: int) -> np.ndarray:
        """``theta_0 .. theta_{n-1}``."""
        if self.rule in ("constant", "theta_opt", "lambda"):
            return np.full(n, float(self.theta))
        out = np.full(n, self.theta0)
        if n <= 2:
            return out
        k = np.arange(2, n)
        z = zeta(k)
        zk = z**k
        s2 = 2.0 / self.sigma_bar**2
        if self.rule == "psi1":
            out[2:] = s2 * (1.0 - z)
        elif self.rule == "psi2":
            out[2:] = s2 * (1.0 - z) / (1.0 - zk) ** 2
        elif self.rule == "psi3":
            out[2:] = s2 * (1.0 - zk) ** 2 / (1.0 - z) ** (1.0 - self.r)
        elif self.rule == "gamma":
            if self.beta_db == 0.0:
                return out
            out[2:] = _gamma_theta(z, zk, self)
        return out

    def __call__(self, k: int) -> float:
        return schedule_theta(self, k)


def _gamma_theta(z, zk, s: RelaxationSchedule):
    big_b = 2.0 * math.sqrt(2.0) * s.beta_b * (s.beta_b + s.beta_db)
    zed = (1.0 - z) ** ((1.0 - s.r) / 2.0) / np.sqrt(1.0 - zk)
    zb = zed * s.beta_db
    # B + Z^2 b^2 - Z b sqrt(Z^2 b^2 + 2B), rationalized to avoid cancellation
    num = big_b * big_b / (big_b + zb * zb + zb * np.sqrt(zb * zb + 2.0 * big_b))
    return num / (2.0 * s.sigma_bar**2 * s.beta_b**2)


def schedule_theta(schedule: RelaxationSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    return float(schedule.thetas(k + 1)[k])


def implied_lambdas(thetas, block_sigma_sq, alpha: float = 0.0) -> np.ndarray:
    """``lambda_k = theta_k (||A_hat_[k]||^2 + alpha)``."""
    return np.asarray(thetas) * (np.asarray(block_sigma_sq) + alpha)


def default_r(noise_level: float) -> float:
    """1.5 for noise around 2%, 1.75 for the 5% regime."""
    return 1.5 if noise_level < 0.035 else 1.75


# -- bounds ----------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseBoundInputs:
    """Per-iteration quantities entering the noise-error bounds.

    ``gamma_k``, ``eta_lo_k``, ``eta_hi_k`` and ``u_hat_k`` are indexed by
    the iteration ``k`` and are running maxima/minima over ``0..k``.
    """

    sigma_underbar: float
    delta_hat: float
    gamma_k: np.ndarray
    eta_lo_k: np.ndarray
    eta_hi_k: np.ndarray
    u_hat_k: np.ndarray
    alpha: float
    beta_b: float = 0.0
    beta_db: float = 0.0
    theta_k: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_traces(cls, sigma_underbar, delta_hat, thetas, thetas_clean, u_norms, alpha, **kw):
        """Build running extrema from raw per-iteration traces.

        ``u_norms[s]`` is ``||u^s(xbar^s, bbar^[s])||`` from the noise-free run.
        """
        thetas = np.asarray(thetas, dtype=np.float64)
        diff = np.abs(np.asarray(thetas_clean, dtype=np.float64) - thetas)
        return cls(
            sigma_underbar=float(sigma_underbar),
            delta_hat=float(delta_hat),
            gamma_k=np.maximum.accumulate(diff),
            eta_lo_k=np.minimum.accumulate(thetas),
            eta_hi_k=np.maximum.accumulate(thetas),
            u_hat_k=np.maximum.accumulate(np.asarray(u_norms, dtype=np.float64)),
            alpha=float(alpha),
            theta_k=thetas,
            **kw,
        )


def noise_bound_general(inputs: NoiseBoundInputs, k: int) -> float:
    """Upper bound on ``||x^k - xbar^k||`` valid when ``alpha = sigma_underbar^2``."""
    if k < 1:
        raise ValueError("bound defined for k >= 1")
    s = inputs.sigma_underbar
    if not math.isclose(inputs.alpha, s * s, rel_tol=1e-9):
        raise ValueError(f"bound requires alpha = sigma_underbar^2 = {s * s!r}, got {inputs.alpha!r}")
    j = k - 1
    lo = float(inputs.eta_lo_k[j])
    if lo <= 0:
        raise ValueError("eta_lo must be positive")
    pref = (float(inputs.gamma_k[j]) * float(inputs.u_hat_k[j]) + float(inputs.eta_hi_k[j]) * inputs.delta_hat) / lo
    return pref * psi_function(s, lo, k) / s


def noise_bound_decreasing(inputs: NoiseBoundInputs, schedule, k: int, block_sigma_max=None) -> float:
    """Bound for nonincreasing ``theta`` bounded by ``1/||M_t^{1/2} A_t||^2``.

    ``schedule`` is a :class:`RelaxationSchedule` or an array of ``theta_k``.
    """
    if k < 2:
        raise ValueError("decreasing-rule bound defined for k >= 2")
    thetas = schedule.thetas(k) if isinstance(schedule, RelaxationSchedule) else np.asarray(schedule, dtype=np.float64)[:k]
    th0, thk = float(thetas[0]), float(thetas[k - 1])
    if thk <= 0:
        raise ValueError("theta_{k-1} must be positive")
    if np.any(np.diff(thetas) > 0):
        warnings.warn("relaxation parameters are not nonincreasing", RelaxationWarning, stacklevel=2)
    if block_sigma_max is not None and np.any(thetas > 1.0 / max(block_sigma_max) ** 2):
        warnings.warn("theta exceeds 1/||M_t^{1/2} A_t||^2 for some k", RelaxationWarning, stacklevel=2)
    z = float(zeta(k))
    u = float(inputs.u_hat_k[k - 1]) if len(inputs.u_hat_k) else 0.0
    pref = ((th0 - thk) * u + th0 * inputs.delta_hat) / math.sqrt(thk)
    return pref * (1.0 - z**k) / math.sqrt(1.0 - z) / inputs.sigma_underbar


def rule_bound(rule: str, k, sigma_underbar: float, beta_db: float, r: float = 1.5):
    """Closed-form noise-error bounds paired with the psi1/psi2/psi3/gamma rules."""
    if np.any(np.asarray(k) < 2):
        raise ValueError("rule bounds defined for k >= 2")
    z = zeta(k)
    zk = z ** np.asarray(k)
    c = beta_db / sigma_underbar
    if rule == "psi1":
        val = c * (1.0 - zk) / (1.0 - z)
    elif rule == "psi2":
        val = c * (1.0 - zk) ** 2 / (1.0 - z)
    elif rule == "psi3":
        val = c * (1.0 - z) ** (-r / 2.0)
    elif rule == "gamma":
        val = c * np.sqrt(1.0 - zk) * (1.0 - z) ** (-r / 2.0)
    else:
        raise ValueError(f"no closed-form bound for rule {rule!r}")
    return float(val) if np.ndim(val) == 0 else val


# -- data-dependent constants -----------------------------------------------------

def beta_values(partition: BlockPartition, weights: Sequence[BlockWeights], v) -> float:
    """``max_t ||M_t^{1/2} v^t||``."""
    parts = partition.split(v)
    return max(float(np.linalg.norm(w.sqrt_m * vt)) for w, vt in zip(weights, parts, strict=True))


def delta_hat(partition: BlockPartition, weights: Sequence[BlockWeights], db) -> float:
    """``max_t ||A_t^T M_t db^t||``."""
    parts = partition.split(db)
    return max(
        float(np.linalg.norm(blk.T @ (w.m_diag * dt)))
        for blk, w, dt in zip(partition.blocks, weights, parts, strict=True)
    )


def estimate_noise_vector(b, guessed_level: float, seed) -> np.ndarray:
    """Random vector of norm ``guessed_level * ||b||`` used to estimate beta_db."""
    if guessed_level < 0:
        raise ValueError("guessed noise level must be nonnegative")
    b = np.asarray(b, dtype=np.float64)
    if guessed_level == 0:
        return np.zeros_like(b)
    e = np.random.default_rng(seed).standard_normal(b.size)
    return guessed_level * np.linalg.norm(b) * e / np.linalg.norm(e)


# -- theta-opt ---------------------------------------------------------------------

class ThetaOpt(NamedTuple):
    theta: float
    error: float
    cycle: int
    errors: np.ndarray


def default_theta_grid(sigma_bar: float, n: int = 50) -> np.ndarray:
    """``n`` equispaced interior points of (0, 2/sigma_bar^2)."""
    return np.linspace(0.0, 2.0 / sigma_bar**2, n + 2)[1:-1]


def theta_opt_search(problem, grid=None, cmax: int = 100, alpha: float = 0.0, mu: float = 1.0, x0=None) -> ThetaOpt:
    """Constant ``theta`` minimizing the best relative error within ``cmax`` cycles.

    Needs ``problem.x_exact``. Ties go to the earliest grid point.
    """
    from .solver import SolverConfig, detect_semiconvergence, pbim_solve

    if problem.x_exact is None:
        raise ValueError("theta-opt search needs the exact solution")
    grid = default_theta_grid(problem.spectral.sigma_bar) if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty theta grid")
    best = None
    errors = np.empty(grid.size)
    for i, th in enumerate(grid):
        cfg = SolverConfig(RelaxationSchedule("constant", theta=float(th)), cmax=cmax, alpha=alpha, mu=mu)
        state = pbim_solve(problem, cfg, x0=x0)
        cyc, err = detect_semiconvergence(state.history)
        errors[i] = err
        if best is None or err < best[1]:
            best = (float(th), err, cyc)
    return ThetaOpt(best[0], best[1], best[2], errors)
