"""Diagonal weight matrices M_t (and N) selecting the SIRT family member.

Weights are applied by scaling rows and columns with precomputed square
roots; the weighted operator ``M^{1/2} A_t N^{1/2}`` is never formed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .sparse import BlockPartition, SparseMatrix

SCHEMES = ("landweber", "cimmino", "cav", "drop", "sart")


class WeightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BlockWeights:
    """Diagonals of M_t and (for DROP and SART) N."""

    scheme: str
    m_diag: np.ndarray
    n_diag: np.ndarray | None = None

    @cached_property
    def sqrt_m(self) -> np.ndarray:
        return np.sqrt(self.m_diag)

    @cached_property
    def sqrt_n(self) -> np.ndarray | None:
        return None if self.n_diag is None else np.sqrt(self.n_diag)


def _as_csr(A) -> sp.csr_matrix:
    if isinstance(A, SparseMatrix):
        return A.csr
    return sp.csr_matrix(A)


def column_counts(A_full) -> np.ndarray:
    """Number of stored nonzeros per column (the CAV/DROP ``w_j``)."""
    csr = _as_csr(A_full)
    return np.bincount(csr.indices[csr.data != 0], minlength=csr.shape[1]).astype(np.float64)


def _require_positive(v: np.ndarray, what: str) -> None:
    bad = np.flatnonzero(~(v > 0))
    if bad.size:
        raise WeightError(f"zero {what} at index {int(bad[0])}")


def build_weights(scheme: str, A_t, A_full=None, *, counts=None) -> BlockWeights:
    """Weights for one row block.

    Parameters
    ----------
    scheme : str
        One of ``landweber``, ``cimmino``, ``cav``, ``drop``, ``sart``.
    A_t : sparse matrix
        The block rows.
    A_full : sparse matrix, optional
        The whole system matrix; its column statistics define ``W`` for CAV and
        DROP and ``N`` for SART. Defaults to ``A_t``.
    counts : ndarray, optional
        Precomputed column nonzero counts of ``A_full``.
    """
    if scheme not in SCHEMES:
        raise WeightError(f"unknown weighting scheme {scheme!r}; choose from {SCHEMES}")
    blk = _as_csr(A_t)
    full = blk if A_full is None else _as_csr(A_full)
    m_t = blk.shape[0]
    if scheme == "landweber":
        return BlockWeights(scheme, np.ones(m_t))
    if scheme == "sart":
        row_sums = np.asarray(abs(blk).sum(axis=1)).ravel()
        col_sums = np.asarray(abs(full).sum(axis=0)).ravel()
        _require_positive(row_sums, "row sum")
        _require_positive(col_sums, "column sum")
        return BlockWeights(scheme, 1.0 / row_sums, 1.0 / col_sums)

    if scheme == "cimmino":
        norms = np.asarray(blk.multiply(blk).sum(axis=1)).ravel()
        _require_positive(norms, "row norm")
        return BlockWeights(scheme, 1.0 / (m_t * norms))

    w = column_counts(full) if counts is None else np.asarray(counts, dtype=np.float64)
    _require_positive(w, "column count")
    if scheme == "cav":
        norms = blk.multiply(blk) @ w
        _require_positive(norms, "weighted row norm")
        return BlockWeights(scheme, 1.0 / (m_t * norms))
    # drop: M = m * D_C, N = W^{-1}
    norms = np.asarray(blk.multiply(blk).sum(axis=1)).ravel()
    _require_positive(norms, "row norm")
    return BlockWeights(scheme, 1.0 / norms, 1.0 / w)


def build_block_weights(partition: BlockPartition, scheme: str) -> tuple[BlockWeights, ...]:
    counts = column_counts(partition.parent) if scheme in ("cav", "drop") else None
    return tuple(
        build_weights(scheme, blk, partition.parent, counts=counts) for blk in partition.blocks
    )


def apply_weighted_block(A_t, weights: BlockWeights, x) -> np.ndarray:
    """``M_t^{1/2} A_t N^{1/2} x``."""
    blk = _as_csr(A_t)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (blk.shape[1],):
        raise ValueError(f"dimension mismatch: block has {blk.shape[1]} columns, got {x.shape}")
    if weights.sqrt_n is not None:
        x = weights.sqrt_n * x
    return weights.sqrt_m * (blk @ x)


def apply_weighted_block_transpose(A_t, weights: BlockWeights, y) -> np.ndarray:
    """``N^{1/2} A_t^T M_t^{1/2} y``, the adjoint of :func:`apply_weighted_block`."""
    blk = _as_csr(A_t)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (blk.shape[0],):
        raise ValueError(f"dimension mismatch: block has {blk.shape[0]} rows, got {y.shape}")
    out = blk.T @ (weights.sqrt_m * y)
    if weights.sqrt_n is not None:
        out = weights.sqrt_n * out
    return out


def apply_normal_weighted(A_t, weights: BlockWeights, y) -> np.ndarray:
    """``A_t^T M_t y``, the gradient companion used by the solver."""
    blk = _as_csr(A_t)
    return blk.T @ (weights.m_diag * np.asarray(y, dtype=np.float64))


class WeightedBlock(LinearOperator):
    """Linear operator ``M_t^{1/2} A_t N^{1/2}`` for spectral estimation."""

    def __init__(self, A_t, weights: BlockWeights):
        self.A_t = _as_csr(A_t)
        self.weights = weights
        super().__init__(dtype=np.float64, shape=self.A_t.shape)

    def _matvec(self, x):
        return apply_weighted_block(self.A_t, self.weights, np.ravel(x))

    def _rmatvec(self, y):
        return apply_weighted_block_transpose(self.A_t, self.weights, np.ravel(y))

    def toarray(self) -> np.ndarray:
        dense = self.A_t.toarray() * self.weights.sqrt_m[:, None]
        if self.weights.sqrt_n is not None:
            dense = dense * self.weights.sqrt_n[None, :]
        return dense
