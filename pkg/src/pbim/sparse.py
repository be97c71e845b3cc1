"""Compressed sparse row storage, row-block partitioning and the kernels used
by every solver step.

The kernels delegate to :mod:`scipy.sparse`; :class:`SparseMatrix` keeps the
raw CSR arrays so callers can inspect them and serialize them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp


class SparseFormatError(ValueError):
    """Raised when a matrix cannot be constructed from the given entries."""


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix with sorted column indices and no stored zeros."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = self.row_offsets
        if offsets.shape != (self.n_rows + 1,):
            raise SparseFormatError("row_offsets must have length n_rows + 1")
        if offsets[0] != 0 or offsets[-1] != len(self.values) or np.any(np.diff(offsets) < 0):
            raise SparseFormatError("row_offsets must be nondecreasing from 0 to nnz")
        if len(self.col_indices) != len(self.values):
            raise SparseFormatError("col_indices and values differ in length")
        if len(self.col_indices) and (self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols):
            raise SparseFormatError("column index out of range")
        same_row = np.ones(len(self.col_indices) - 1 if len(self.col_indices) else 0, dtype=bool)
        same_row[offsets[1:-1][(offsets[1:-1] > 0) & (offsets[1:-1] < len(self.values))] - 1] = False
        if np.any(np.diff(self.col_indices)[same_row] <= 0):
            raise SparseFormatError("column indices must be strictly increasing within each row")
        if np.any(self.values == 0.0):
            raise SparseFormatError("explicitly stored zero")
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.setflags(write=False)

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        csr = sp.csr_matrix(mat, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        return cls(
            n_rows=csr.shape[0],
            n_cols=csr.shape[1],
            row_offsets=csr.indptr.astype(np.int64),
            col_indices=csr.indices.astype(np.int64),
            values=csr.data.astype(np.float64),
        )

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """scipy view sharing the stored arrays."""
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False
        )

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


def csr_from_triplets(
    triplets: Iterable[tuple[int, int, float]], n_rows: int, n_cols: int
) -> SparseMatrix:
    """Build a :class:`SparseMatrix` from ``(row, col, value)`` entries.

    Duplicate coordinates are summed and entries that end up zero are dropped.
    """
    entries = list(triplets)
    if entries:
        rows, cols, vals = (np.asarray(c) for c in zip(*entries))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    return csr_from_arrays(rows, cols, vals, n_rows, n_cols)


def csr_from_arrays(rows, cols, vals, n_rows: int, n_cols: int) -> SparseMatrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if n_rows < 0 or n_cols < 0:
        raise SparseFormatError("matrix dimensions must be nonnegative")
    if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
        bad = int(rows[(rows < 0) | (rows >= n_rows)][0])
        raise SparseFormatError(f"row index {bad} out of range for {n_rows} rows")
    if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
        bad = int(cols[(cols < 0) | (cols >= n_cols)][0])
        raise SparseFormatError(f"column index {bad} out of range for {n_cols} columns")
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    return SparseMatrix.from_scipy(coo)


def remove_zero_rows(A: SparseMatrix, b) -> tuple[SparseMatrix, np.ndarray, np.ndarray]:
    """Drop rows without stored entries.

    Returns the reduced matrix, the reduced right-hand side and the original
    indices of the kept rows.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n_rows,):
        raise ValueError(f"b has length {b.size}, expected {A.n_rows}")
    kept = np.flatnonzero(A.row_nnz() > 0)
    if len(kept) == A.n_rows:
        return A, b.copy(), kept
    return SparseMatrix.from_scipy(A.csr[kept]), b[kept], kept


def matvec(A: SparseMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise ValueError(f"dimension mismatch: matrix has {A.n_cols} columns, vector has shape {x.shape}")
    return A.csr @ x


def matvec_transpose(A: SparseMatrix, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.n_rows,):
        raise ValueError(f"dimension mismatch: matrix has {A.n_rows} rows, vector has shape {y.shape}")
    return A.csr.T @ y


def weighted_row_norms(A, W=None) -> np.ndarray:
    """Squared row norms ``sum_j W_j a_ij**2`` (``W`` defaults to ones)."""
    csr = A.csr if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    sq = csr.multiply(csr)
    if W is None:
        return np.asarray(sq.sum(axis=1)).ravel()
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (csr.shape[1],):
        raise ValueError(f"W has length {W.size}, expected {csr.shape[1]}")
    if np.any(W < 0):
        raise ValueError(f"negative weight at column {int(np.flatnonzero(W < 0)[0])}")
    return sq @ W


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Disjoint contiguous row strips ``A_t, b^t`` of a system ``Ax = b``."""

    parent: SparseMatrix
    block_row_ranges: tuple[tuple[int, int], ...]
    rhs_blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        ranges = self.block_row_ranges
        if not ranges:
            raise ValueError("a partition needs at least one block")
        pos = 0
        for start, end in ranges:
            if start != pos or end <= start:
                raise ValueError("blocks must be nonempty contiguous strips covering all rows")
            pos = end
        if pos != self.parent.n_rows:
            raise ValueError("blocks do not cover every row")
        for (start, end), bt in zip(ranges, self.rhs_blocks, strict=True):
            if bt.shape != (end - start,):
                raise ValueError("rhs block length does not match its row range")

    @property
    def p(self) -> int:
        return len(self.block_row_ranges)

    @cached_property
    def blocks(self) -> tuple[sp.csr_matrix, ...]:
        csr = self.parent.csr
        return tuple(csr[s:e] for s, e in self.block_row_ranges)

    @cached_property
    def blocks_t(self) -> tuple[sp.csr_matrix, ...]:
        # transposes stored as CSR for fast A_t^T y products
        return tuple(sp.csr_matrix(blk.T) for blk in self.blocks)

    def block(self, t: int) -> sp.csr_matrix:
        return self.blocks[t]

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate(self.rhs_blocks)

    def split(self, v) -> tuple[np.ndarray, ...]:
        """Cut a data-space vector into the block strips."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.parent.n_rows,):
            raise ValueError(f"vector has shape {v.shape}, expected ({self.parent.n_rows},)")
        return tuple(v[s:e] for s, e in self.block_row_ranges)

    def with_rhs(self, b) -> "BlockPartition":
        """Same strips, different right-hand side; cached blocks are shared."""
        new = BlockPartition(self.parent, self.block_row_ranges, self.split(b))
        for name in ("blocks", "blocks_t"):
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new


def partition_blocks(A: SparseMatrix, b, p: int) -> BlockPartition:
    """Split into ``p`` strips in row order; sizes differ by at most one and
    the remainder rows go to the earliest blocks."""
    m = A.n_rows
    if not 1 <= p <= m:
        raise ValueError(f"block count p={p} must lie in [1, {m}]")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (m,):
        raise ValueError(f"b has length {b.size}, expected {m}")
    q, rem = divmod(m, p)
    sizes = [q + 1] * rem + [q] * (p - rem)
    ends = np.cumsum(sizes)
    ranges = tuple((int(e - s), int(e)) for s, e in zip(sizes, ends))
    return BlockPartition(A, ranges, tuple(b[s:e].copy() for s, e in ranges))


# -- file formats ------------------------------------------------------------

def write_matrix_market(path, A: SparseMatrix) -> None:
    scipy.io.mmwrite(str(path), A.csr.tocoo(), precision=17)


def read_matrix_market(path) -> SparseMatrix:
    mat = scipy.io.mmread(str(path))
    return SparseMatrix.from_scipy(sp.coo_matrix(mat))


def write_vector(path, v: Sequence[float]) -> None:
    arr = np.asarray(v, dtype=np.float64)
    Path(path).write_text("".join(f"{float(x)!r}\n" for x in arr))


def read_vector(path) -> np.ndarray:
    if not Path(path).read_text().strip():
        return np.zeros(0)
    return np.loadtxt(str(path), dtype=np.float64, ndmin=1)
