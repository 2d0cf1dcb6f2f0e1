""" Tests for compressed-row storage, precision handling and Matrix Market
    input and output.
"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Import standard Python packages.
import io

# Import numerical packages.
import numpy as np
import numpy.testing
import pytest
import scipy.sparse

# Import the package under test.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.exceptions import MatrixMarketError
from block_jacobi_gmres.exceptions import PrecisionError
from block_jacobi_gmres.exceptions import SparseFormatError
from block_jacobi_gmres.fixtures import convection_diffusion_2d
from block_jacobi_gmres.fixtures import laplacian_2d
from block_jacobi_gmres.fixtures import random_well_conditioned
from block_jacobi_gmres.sparse import Norm
from block_jacobi_gmres.sparse import Precision
from block_jacobi_gmres.sparse import PrecisionPolicy
from block_jacobi_gmres.sparse import SparseMatrix
from block_jacobi_gmres.sparse import cast_vector
from block_jacobi_gmres.sparse import csr_from_triplets
from block_jacobi_gmres.sparse import extract_block
from block_jacobi_gmres.sparse import inverse_permutation
from block_jacobi_gmres.sparse import matrix_inf_norm
from block_jacobi_gmres.sparse import matrix_info
from block_jacobi_gmres.sparse import matrix_market_text
from block_jacobi_gmres.sparse import matrix_one_norm
from block_jacobi_gmres.sparse import permute_symmetric
from block_jacobi_gmres.sparse import read_matrix_market
from block_jacobi_gmres.sparse import spmv
from block_jacobi_gmres.sparse import vector_norm
from block_jacobi_gmres.sparse import write_matrix_market


# Define a helper for parsing inline Matrix Market text.
def parse(text):
    return read_matrix_market(io.BytesIO(text.encode()))


def assert_same_matrix(first, second):
    numpy.testing.assert_array_equal(first.row_starts, second.row_starts)
    numpy.testing.assert_array_equal(first.col_indices, second.col_indices)
    numpy.testing.assert_array_equal(first.values_high, second.values_high)


def test_unit_roundoff():
    """ Unit roundoffs of the two formats. """
    assert Precision.LOW.unit_roundoff == 2.0 ** -24
    assert Precision.HIGH.unit_roundoff == 2.0 ** -53
    assert PrecisionPolicy.from_name('double').working is Precision.HIGH
    with pytest.raises(ArgumentError):
        PrecisionPolicy.from_name('quad')


def test_triplets_sum_duplicates():
    """ Duplicate triplets are summed and rows come out sorted. """
    A = csr_from_triplets([(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0),
                           (1, 2, 4.0)], 2, 3)
    assert A.row_starts.tolist() == [0, 1, 3]
    assert A.col_indices.tolist() == [1, 0, 2]
    assert A.values_high.tolist() == [2.0, 3.0, 5.0]


def test_triplets_order_independent():
    """ Any ordering of the triplets gives a bit-identical matrix. """
    rng = np.random.default_rng(3)
    rows = rng.integers(0, 20, 300)
    cols = rng.integers(0, 20, 300)
    values = rng.standard_normal(300)
    triplets = list(zip(rows, cols, values))
    first = csr_from_triplets(triplets, 20, 20)
    shuffled = [triplets[index] for index in rng.permutation(len(triplets))]
    assert_same_matrix(first, csr_from_triplets(shuffled, 20, 20))


def test_triplet_out_of_range():
    with pytest.raises(ArgumentError):
        csr_from_triplets([(2, 0, 1.0)], 2, 2)


@pytest.mark.parametrize('arrays', [
    ([0, 2, 1], [1, 0, 0], [1.0, 1.0, 1.0]),
    ([0, 1, 2], [0, 0], [1.0, 1.0, 1.0]),
    ([1, 1, 2], [0, 1], [1.0, 1.0]),
    ([0, 1, 2], [0, 5], [1.0, 1.0]),
])
def test_invalid_storage(arrays):
    """ Broken compressed-row arrays are rejected. """
    with pytest.raises(SparseFormatError):
        SparseMatrix(*arrays, shape=(2, 2))


def test_unsorted_columns_rejected():
    with pytest.raises(SparseFormatError, match='row 0'):
        SparseMatrix([0, 2, 2], [1, 0], [1.0, 1.0], shape=(2, 2))


def test_explicit_zeros_kept():
    """ Stored zeros are structural entries. """
    A = csr_from_triplets([(0, 0, 1.0), (0, 1, 0.0)], 2, 2)
    assert A.nnz == 2


def test_from_scipy_drops_zeros():
    M = scipy.sparse.csr_matrix(([1.0, 0.0], ([0, 1], [0, 1])))
    assert SparseMatrix.from_scipy(M).nnz == 1
    assert SparseMatrix.from_scipy(M, drop_zeros=False).nnz == 2

    # Structure survives a transpose.
    A = csr_from_triplets([(0, 1, 0.0), (1, 1, 1.0)], 2, 2)
    assert A.transpose().nnz == 2


def test_grid_fixtures_store_no_zeros():
    """ Five-point grids store exactly their nonzero stencil entries. """
    assert laplacian_2d(2).nnz == 12
    for A in (laplacian_2d(5, 3), convection_diffusion_2d(4, convection=1.0)):
        assert np.all(A.values_high != 0.0)
        assert A.nnz == np.count_nonzero(A.toarray())


def test_arrays_read_only():
    A = laplacian_2d(3)
    with pytest.raises(ValueError):
        A.values_high[0] = 7.0


def test_read_general():
    """ A general file with comments and blank lines. """
    A = parse('%%MatrixMarket matrix coordinate real general\n'
              '% a comment\n'
              '\n'
              '2 3 3\n'
              '1 1 1.5\n'
              '2 3 -2e-3\n'
              '1 2 4\n')
    assert A.shape == (2, 3)
    numpy.testing.assert_array_equal(
      A.toarray(), [[1.5, 4.0, 0.0], [0.0, 0.0, -2e-3]])


def test_read_symmetric_expands():
    """ Symmetric storage is mirrored, without doubling the diagonal. """
    A = parse('%%MatrixMarket matrix coordinate real symmetric\n'
              '3 3 4\n'
              '1 1 2\n2 1 -1\n3 2 -1\n3 3 2\n')
    assert A.nnz == 6
    numpy.testing.assert_array_equal(A.toarray(), A.toarray().T)
    assert A.toarray()[0, 0] == 2.0


def test_read_integer_field_and_text_stream():
    A = read_matrix_market(io.StringIO(
      '%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 3\n'))
    assert A.values_high.tolist() == [3.0]


@pytest.mark.parametrize(('text', 'line'), [
    ('%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1\n', 3),
    ('%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n'
     '% c\n3 1 1\n', 5),
    ('%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n', 3),
    ('%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n', 1),
    ('%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n', 1),
    ('%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n', 1),
    ('%%MatrixMarket matrix coordinate real general\n2 2\n', 2),
    ('not a header\n', 1),
    ('%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1\n', 2),
    ('%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n', 3),
])
def test_read_errors_name_the_line(text, line):
    """ Parse failures report the offending line. """
    with pytest.raises(MatrixMarketError) as info:
        parse(text)
    assert info.value.line == line
    assert str(info.value).startswith(f'line {line}:')


@pytest.mark.parametrize('header', [
    'general\n2 2 100000000000000\n',
    'general\n2 2 5\n',
    'symmetric\n2 2 4\n',
])
def test_read_rejects_impossible_entry_counts(header):
    """ A count larger than the matrix can hold fails on the size line. """
    with pytest.raises(MatrixMarketError) as info:
        parse('%%MatrixMarket matrix coordinate real ' + header + '1 1 1\n')
    assert info.value.line == 2
    assert 'exceed' in str(info.value)


def test_write_read_round_trip(tmp_path):
    """ Writing then reading reproduces every value exactly. """
    A = random_well_conditioned(30, density=0.2, seed=11)
    path = tmp_path / 'random.mtx'
    write_matrix_market(A, path)
    with open(path, 'rb') as stream:
        assert_same_matrix(A, read_matrix_market(stream))


def test_write_header():
    text = matrix_market_text(laplacian_2d(2))
    lines = text.splitlines()
    assert lines[0] == '%%MatrixMarket matrix coordinate real general'
    assert lines[1] == '4 4 12'
    assert lines[2] == '1 1 4'


def test_spmv_high():
    A = convection_diffusion_2d(4, convection=0.5)
    x = np.arange(A.ncols, dtype=float)
    numpy.testing.assert_allclose(spmv(A, x), A.toarray() @ x, rtol=1e-15)


def test_spmv_low_requires_materialization():
    A = laplacian_2d(4)
    with pytest.raises(PrecisionError):
        spmv(A, np.ones(A.ncols), Precision.LOW)
    A.materialize_low()
    y = spmv(A, np.linspace(0.0, 1.0, A.ncols), Precision.LOW)
    assert y.dtype == np.float32
    assert A.values_low.dtype == np.float32


def test_spmv_low_deterministic_and_accurate():
    """ binary32 products repeat bit for bit and stay near binary64. """
    A = random_well_conditioned(60, density=0.3, seed=2).materialize_low()
    x = np.random.default_rng(5).standard_normal(A.ncols)
    first = spmv(A, x, Precision.LOW)
    numpy.testing.assert_array_equal(first, spmv(A, x, Precision.LOW))
    exact = spmv(A, x)
    assert vector_norm(first - exact) <= 1e-6 * vector_norm(exact)


def test_spmv_low_rounds_values():
    A = csr_from_triplets([(0, 0, 0.1)], 1, 1).materialize_low()
    y = spmv(A, np.ones(1), Precision.LOW)
    assert y[0] == np.float32(0.1)
    assert float(y[0]) != 0.1


def test_cast_vector_rounding():
    half = cast_vector([0.5], Precision.LOW)
    assert half.dtype == np.float32
    assert float(half[0]) == 0.5

    # Nearest binary32 neighbour of 0.1.
    tenth = float(cast_vector([0.1], Precision.LOW)[0])
    assert tenth != 0.1
    assert abs(tenth - 0.1) / 0.1 < 2.0 ** -23
    assert cast_vector([tenth], Precision.HIGH).dtype == np.float64

    # Zeros both ways.
    for precision in Precision:
        numpy.testing.assert_array_equal(
          cast_vector(np.zeros(3), precision), np.zeros(3))


def test_spmv_dimension_mismatch():
    with pytest.raises(DimensionError):
        spmv(laplacian_2d(2), np.ones(3))


def test_permute_symmetric():
    """ B[p(i), p(j)] = A[i, j], and the inverse permutation undoes it. """
    A = convection_diffusion_2d(3, convection=1.0)
    perm = np.random.default_rng(0).permutation(A.nrows)
    B = permute_symmetric(A, perm)
    dense = A.toarray()
    permuted = B.toarray()
    for (i, j) in zip(*np.nonzero(dense)):
        assert permuted[perm[i], perm[j]] == dense[i, j]
    assert_same_matrix(A, permute_symmetric(B, inverse_permutation(perm)))


def test_permute_rejects_non_bijection():
    with pytest.raises(ArgumentError):
        permute_symmetric(laplacian_2d(2), [0, 0, 1, 2])


def test_vector_norm():
    """ Norms accumulate in binary64 even for binary32 input. """
    x = np.full(1000, 0.1, dtype=np.float32)
    assert vector_norm(x) == pytest.approx(
      np.sqrt(1000) * float(np.float32(0.1)), rel=1e-12)
    assert vector_norm(np.zeros(0)) == 0.0
    assert vector_norm([-3.0, 2.0], Norm.INF) == 3.0


def test_matrix_norms():
    A = csr_from_triplets([(0, 0, 1.0), (0, 1, -2.0), (1, 0, 3.0),
                           (1, 1, 4.0)], 2, 2)
    assert matrix_inf_norm(A) == 7.0
    assert matrix_one_norm(A) == 6.0
    assert matrix_inf_norm(csr_from_triplets([], 3, 3)) == 0.0


def test_extract_block():
    A = laplacian_2d(3)
    block = extract_block(A, 3, 6)
    numpy.testing.assert_array_equal(block.toarray(), A.toarray()[3:6, 3:6])


def test_matrix_info():
    """ Symmetry fractions of symmetric and nonsymmetric matrices. """
    info = matrix_info(laplacian_2d(4), name='lap')
    assert (info.name, info.n, info.nnz) == ('lap', 16, 64)
    assert info.nnz_per_row == 4.0
    assert info.pattern_symmetry == 1.0
    assert info.numeric_symmetry == 1.0
    info = matrix_info(convection_diffusion_2d(4, convection=1.0))
    assert info.pattern_symmetry == 1.0
    assert info.numeric_symmetry == 0.5


# Main.
if __name__ == '__main__':
    pytest.main([__file__])
