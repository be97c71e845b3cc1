"""Largest and smallest nonzero singular values of the weighted blocks."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import aslinearoperator

from .sparse import BlockPartition, SparseMatrix
from .weighting import BlockWeights, WeightedBlock

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000
DEFAULT_RANK_TOL = 1e-10
DENSE_THRESHOLD = 4000


class SpectralWarning(RuntimeWarning):
    pass


class PowerIteration(NamedTuple):
    sigma: float
    iterations: int
    converged: bool
    rayleigh: np.ndarray


def _operator(op):
    if isinstance(op, SparseMatrix):
        return aslinearoperator(op.csr)
    return aslinearoperator(op)


def _dense(op) -> np.ndarray:
    if isinstance(op, SparseMatrix):
        return op.toarray()
    if sp.issparse(op):
        return op.toarray()
    if hasattr(op, "toarray"):
        return np.asarray(op.toarray())
    if isinstance(op, np.ndarray):
        return op
    lin = aslinearoperator(op)
    return lin.matmat(np.eye(lin.shape[1]))


def power_method(op, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> PowerIteration:
    """Power iteration on ``op^T op``.

    Stops when successive Rayleigh quotients differ by less than ``tol``
    relative to the current one. The returned ``rayleigh`` trace is the
    sequence of quotients, one per iteration.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lin = _operator(op)
    n = lin.shape[1]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    trace = []
    prev = None
    converged = False
    for it in range(1, max_iter + 1):
        w = lin.rmatvec(lin.matvec(v))
        rq = float(v @ w)
        trace.append(rq)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            if prev is None:
                raise ValueError("operator is zero")
            break
        if prev is not None and abs(rq - prev) < tol * abs(rq):
            converged = True
            break
        prev = rq
        v = w / nw
    return PowerIteration(float(np.sqrt(max(trace[-1], 0.0))), len(trace), converged, np.asarray(trace))


def largest_singular_value(op, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> float:
    """Estimate ``||op||_2``; warns if the iteration did not settle."""
    res = power_method(op, tol, max_iter, seed)
    if not res.converged:
        warnings.warn(
            f"power method stopped after {res.iterations} iterations without reaching tol={tol}",
            SpectralWarning,
            stacklevel=2,
        )
    return res.sigma


def smallest_nonzero_singular_value(op, rank_tol: float = DEFAULT_RANK_TOL, dense_threshold: int = DENSE_THRESHOLD) -> float:
    """Smallest singular value above ``rank_tol * sigma_max`` via a dense SVD."""
    dense = _dense(op)
    if min(dense.shape) > dense_threshold:
        warnings.warn(
            f"dense SVD on a {dense.shape[0]}x{dense.shape[1]} block", SpectralWarning, stacklevel=2
        )
    s = np.linalg.svd(dense, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("operator is zero")
    return float(s[s > rank_tol * s[0]][-1])


@dataclass(frozen=True)
class SpectralEstimates:
    sigma_max_per_block: tuple[float, ...]
    sigma_min_per_block: tuple[float, ...]
    tol: float
    iterations_used: tuple[int, ...]

    def __post_init__(self):
        if not 0 < self.sigma_underbar <= self.sigma_bar:
            raise ValueError("need 0 < sigma_underbar <= sigma_bar")

    @property
    def sigma_bar(self) -> float:
        return max(self.sigma_max_per_block)

    @property
    def sigma_underbar(self) -> float:
        return min(self.sigma_min_per_block)


def estimate_spectrum(
    partition: BlockPartition,
    weights: Sequence[BlockWeights],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> SpectralEstimates:
    """Per-block spectral data for schedules, regularization and bounds."""
    sig_max, sig_min, iters = [], [], []
    for t, (blk, w) in enumerate(zip(partition.blocks, weights, strict=True)):
        op = WeightedBlock(blk, w)
        res = power_method(op, tol, max_iter, seed + t)
        if not res.converged:
            warnings.warn(f"power method did not converge on block {t}", SpectralWarning, stacklevel=2)
        smin = smallest_nonzero_singular_value(op, rank_tol)
        # the dense SVD is exact; never let the power estimate undercut it
        sig_max.append(res.sigma)
        sig_min.append(min(smin, res.sigma))
        iters.append(res.iterations)
    logger.debug("spectral estimates: sigma_max=%s sigma_min=%s", sig_max, sig_min)
    return SpectralEstimates(tuple(sig_max), tuple(sig_min), tol, tuple(iters))
