import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pbim.sparse import (
    BlockPartition,
    SparseFormatError,
    SparseMatrix,
    csr_from_arrays,
    csr_from_triplets,
    matvec,
    matvec_transpose,
    partition_blocks,
    read_matrix_market,
    read_vector,
    remove_zero_rows,
    weighted_row_norms,
    write_matrix_market,
    write_vector,
)


def test_triplets_identity():
    A = csr_from_triplets([(0, 0, 1), (1, 1, 1)], 2, 2)
    np.testing.assert_array_equal(A.toarray(), np.eye(2))


def test_triplets_duplicates_summed():
    A = csr_from_triplets([(0, 0, 2), (0, 0, 3)], 1, 1)
    assert A.nnz == 1
    assert A.values[0] == 5.0


def test_triplets_sorted_against_dense_oracle():
    trip = [(0, 1, 4), (0, 0, 3), (1, 1, 5)]
    dense = np.zeros((2, 2))
    for i, j, v in trip:
        dense[i, j] += v
    A = csr_from_triplets(trip, 2, 2)
    np.testing.assert_array_equal(A.toarray(), dense)
    np.testing.assert_array_equal(A.col_indices, [0, 1, 1])
    np.testing.assert_array_equal(A.row_offsets, [0, 2, 3])


def test_triplets_cancelling_duplicates_drop_zero():
    A = csr_from_triplets([(0, 0, 2), (0, 0, -2), (0, 1, 1)], 1, 2)
    assert A.nnz == 1 and A.col_indices[0] == 1


@pytest.mark.parametrize("trip", [[(2, 0, 1.0)], [(0, 5, 1.0)], [(-1, 0, 1.0)]])
def test_triplets_out_of_range(trip):
    with pytest.raises(SparseFormatError):
        csr_from_triplets(trip, 2, 2)


def test_constructor_validates():
    with pytest.raises(SparseFormatError):
        SparseMatrix(1, 2, np.array([0, 2]), np.array([1, 0]), np.array([1.0, 2.0]))
    with pytest.raises(SparseFormatError):
        SparseMatrix(1, 2, np.array([0, 1]), np.array([0]), np.array([0.0]))
    with pytest.raises(SparseFormatError):
        SparseMatrix(2, 2, np.array([0, 1]), np.array([0]), np.array([1.0]))


def test_arrays_read_only(a34):
    with pytest.raises(ValueError):
        a34.values[0] = 1.0


def test_remove_zero_rows_small():
    A = SparseMatrix.from_dense([[1.0, 0.0], [0.0, 0.0]])
    B, b, kept = remove_zero_rows(A, [1.0, 7.0])
    np.testing.assert_array_equal(B.toarray(), [[1.0, 0.0]])
    np.testing.assert_array_equal(b, [1.0])
    np.testing.assert_array_equal(kept, [0])


def test_remove_zero_rows_identity():
    A = SparseMatrix.from_dense(np.eye(3))
    B, b, kept = remove_zero_rows(A, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(B.toarray(), np.eye(3))
    np.testing.assert_array_equal(kept, [0, 1, 2])


def test_matvec_identity_and_dense(a34):
    x = np.array([0.3, -2.0, 5.0])
    np.testing.assert_array_equal(matvec(SparseMatrix.from_dense(np.eye(3)), x), x)
    np.testing.assert_array_equal(matvec(a34, [1.0, 1.0]), [7.0, 5.0])
    np.testing.assert_array_equal(matvec_transpose(a34, [1.0, 1.0]), [3.0, 9.0])


def test_matvec_dimension_mismatch(a34):
    with pytest.raises(ValueError):
        matvec(a34, np.ones(3))
    with pytest.raises(ValueError):
        matvec_transpose(a34, np.ones(3))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_adjoint_identity(m, n, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((m, n)) * (rng.random((m, n)) < 0.5)
    A = SparseMatrix.from_dense(D)
    x, y = rng.standard_normal(n), rng.standard_normal(m)
    lhs, rhs = matvec(A, x) @ y, x @ matvec_transpose(A, y)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, np.abs(D).sum() * np.abs(x).max() * np.abs(y).max())


def test_partition_equal_and_remainder():
    A = SparseMatrix.from_dense(np.eye(7))
    part = partition_blocks(A, np.arange(7.0), 3)
    assert part.block_row_ranges == ((0, 3), (3, 5), (5, 7))
    part6 = partition_blocks(SparseMatrix.from_dense(np.eye(6)), np.zeros(6), 3)
    assert part6.block_row_ranges == ((0, 2), (2, 4), (4, 6))
    np.testing.assert_array_equal(part.rhs_blocks[1], [3.0, 4.0])


def test_partition_single_block(a34):
    part = partition_blocks(a34, [7.0, 5.0], 1)
    assert part.p == 1
    np.testing.assert_array_equal(part.blocks[0].toarray(), a34.toarray())


@pytest.mark.parametrize("p", [0, 3])
def test_partition_invalid_p(a34, p):
    with pytest.raises(ValueError):
        partition_blocks(a34, [1.0, 2.0], p)


def test_partition_rejects_gaps(a34):
    with pytest.raises(ValueError):
        BlockPartition(a34, ((0, 1),), (np.zeros(1),))


@given(st.integers(1, 40), st.integers(1, 40))
def test_partition_covers_rows(m, p):
    p = min(p, m)
    part = partition_blocks(SparseMatrix.from_dense(np.eye(m)), np.arange(m, dtype=float), p)
    sizes = [hi - lo for lo, hi in part.block_row_ranges]
    assert sum(sizes) == m and min(sizes) >= 1 and max(sizes) - min(sizes) <= 1
    assert sizes == sorted(sizes, reverse=True)
    np.testing.assert_array_equal(np.concatenate(part.rhs_blocks), np.arange(m))


def test_weighted_row_norms(a34):
    np.testing.assert_array_equal(weighted_row_norms(a34), [25.0, 25.0])
    np.testing.assert_array_equal(weighted_row_norms(a34, np.ones(2)), [25.0, 25.0])
    assert weighted_row_norms(SparseMatrix.from_dense([[1.0, 1.0]]), [2.0, 3.0])[0] == 5.0
    with pytest.raises(ValueError):
        weighted_row_norms(a34, [-1.0, 1.0])


def test_matrix_market_round_trip(tmp_path, rng):
    D = rng.standard_normal((5, 4)) * (rng.random((5, 4)) < 0.6)
    A = SparseMatrix.from_dense(D)
    write_matrix_market(tmp_path / "a.mtx", A)
    B = read_matrix_market(tmp_path / "a.mtx")
    np.testing.assert_array_equal(B.toarray(), D)


@given(arrays(np.float64, st.integers(0, 20), elements=st.floats(-1e300, 1e300)))
def test_vector_round_trip(v):
    import tempfile, os

    fd, path = tempfile.mkstemp()
    os.close(fd)
    try:
        write_vector(path, v)
        np.testing.assert_array_equal(read_vector(path), v)
    finally:
        os.unlink(path)


def test_from_scipy_canonicalizes():
    m = sp.coo_matrix(([1.0, 2.0, 0.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    A = SparseMatrix.from_scipy(m)
    assert A.nnz == 1 and A.values[0] == 3.0
    assert csr_from_arrays([0], [0], [1.0], 1, 1).shape == (1, 1)
