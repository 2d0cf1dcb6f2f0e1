""" Compressed-row sparse matrices, the precision policy, and Matrix Market
    ingestion shared by every other module of the package.

Matrices are stored in compressed-row (CSR) form with binary64 as the master
precision. A binary32 copy of the values can be materialized once, and is
required before any binary32 operation on the matrix.

Examples
--------

Assemble a small matrix from (row, column, value) triplets. Duplicate
entries are summed.

>>> A = csr_from_triplets([(0, 0, 2.0), (1, 0, 1.0), (1, 1, 3.0),
...                        (1, 1, 0.0)], nrows=2, ncols=2)
>>> A
SparseMatrix(shape=(2, 2), nnz=3, low_precision=False)
>>> A.row_starts.tolist()
[0, 1, 3]
>>> spmv(A, [1.0, 1.0]).tolist()
[2.0, 4.0]

Binary32 products require the binary32 copy of the values.

>>> spmv(A, [1.0, 1.0], precision=Precision.LOW).dtype
Traceback (most recent call last):
...
block_jacobi_gmres.exceptions.PrecisionError: binary32 values have not been materialized
>>> spmv(A.materialize_low(), [1.0, 1.0], precision=Precision.LOW).dtype
dtype('float32')

Norms always accumulate in binary64.

>>> vector_norm([3.0, 4.0])
5.0
>>> vector_norm([1.0, -7.0, 2.0], which=Norm.ONE)
10.0
>>> matrix_inf_norm(csr_from_triplets([(0, 0, 1.0), (0, 1, -2.0),
...                                    (1, 0, 3.0), (1, 1, 4.0)], 2, 2))
7.0

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Standard library imports.
import dataclasses
import enum
import io
import logging
from pathlib import Path

# Numerical imports.
import numpy as np
import scipy.sparse

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.exceptions import MatrixMarketError
from block_jacobi_gmres.exceptions import PrecisionError
from block_jacobi_gmres.exceptions import SparseFormatError


# Module logger.
logger = logging.getLogger(__name__)


MATRIX_MARKET_BANNER = '%%MatrixMarket matrix coordinate real general'
""" Header line emitted when writing a matrix. """

MATRIX_MARKET_VALUE_FORMAT = '%d %d %.17g'
""" Entry format used when writing; 17 significant digits round-trip any
    binary64 value exactly.
"""


# Precision definitions.
class Precision(enum.Enum):
    """ Floating-point formats used by the solver. """

    LOW = 'binary32'
    HIGH = 'binary64'

    @property
    def dtype(self):
        """ The numpy dtype that implements the format. """
        return np.dtype(np.float32 if self is Precision.LOW else np.float64)

    @property
    def unit_roundoff(self):
        """ Unit roundoff (half the machine epsilon) of the format. """
        return float(np.finfo(self.dtype).eps) / 2.0


class PrecisionMode(enum.Enum):
    """ Selects which parts of a solve run in binary32. """

    DOUBLE_ONLY = 'double'
    HYBRID = 'hybrid'


@dataclasses.dataclass(frozen=True)
class PrecisionPolicy:
    """ Precision policy of a solve.

    In `HYBRID` mode the Krylov basis is built in binary32 (`low`); residuals,
    least squares and solution updates always run in binary64 (`high`).

    >>> PrecisionPolicy.from_name('hybrid').working
    <Precision.LOW: 'binary32'>
    >>> PrecisionPolicy().working
    <Precision.HIGH: 'binary64'>
    """

    mode: PrecisionMode = PrecisionMode.DOUBLE_ONLY
    low: Precision = dataclasses.field(default=Precision.LOW, init=False)
    high: Precision = dataclasses.field(default=Precision.HIGH, init=False)

    @classmethod
    def from_name(cls, name):
        """ Build a policy from a mode name (`double` or `hybrid`). """
        try:
            return cls(mode=PrecisionMode(name))
        except ValueError:
            raise ArgumentError(f'unknown precision mode {name!r}') from None

    @property
    def is_hybrid(self):
        return self.mode is PrecisionMode.HYBRID

    @property
    def working(self):
        """ Precision of the Krylov basis construction. """
        return self.low if self.is_hybrid else self.high


class Norm(enum.Enum):
    """ Vector norms understood by `vector_norm`. """

    TWO = 2
    INF = 'inf'
    ONE = 1


# Sparse matrix class.
class SparseMatrix:
    """ Compressed-row sparse matrix with dual-precision value storage.

    The binary64 values are the source of truth. The binary32 copy is derived
    from them by round-to-nearest and is only created by `materialize_low`.
    Instances are immutable; array properties return read-only views.

    Arguments
    ---------
    row_starts : array_like of int
        Offsets of the first entry of each row; length `nrows + 1`.
    col_indices : array_like of int
        Column of each stored entry; strictly increasing within a row.
    values : array_like of float
        Value of each stored entry.
    shape : tuple of int
        `(nrows, ncols)`.
    """

    def __init__(self, row_starts, col_indices, values, shape):

        # Normalize the arrays.
        row_starts = np.asarray(row_starts, dtype=np.int64)
        col_indices = np.asarray(col_indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        (nrows, ncols) = (int(shape[0]), int(shape[1]))

        # Enforce the storage invariants.
        _check_compressed_rows(row_starts, col_indices, values, nrows, ncols)

        # Store the master copy.
        self._csr = scipy.sparse.csr_matrix((values, col_indices, row_starts),
                                            shape=(nrows, ncols), copy=True)
        self._csr.has_sorted_indices = True
        self._low = None

    @classmethod
    def from_scipy(cls, matrix, drop_zeros=True):
        """ Convert any scipy sparse matrix (or dense array) to canonical CSR.

        Duplicates are summed and rows sorted. Entries whose value is zero,
        stored or produced by summing duplicates, are dropped unless
        `drop_zeros` is false, in which case they stay as structural entries.

        >>> import scipy.sparse
        >>> M = scipy.sparse.csr_matrix(([1.0, 0.0], ([0, 1], [0, 1])))
        >>> (SparseMatrix.from_scipy(M).nnz,
        ...  SparseMatrix.from_scipy(M, drop_zeros=False).nnz)
        (1, 2)
        """
        csr = scipy.sparse.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        if drop_zeros:
            csr.eliminate_zeros()
        return cls(csr.indptr, csr.indices, csr.data, csr.shape)

    @property
    def shape(self):
        return self._csr.shape

    @property
    def nrows(self):
        return self._csr.shape[0]

    @property
    def ncols(self):
        return self._csr.shape[1]

    @property
    def nnz(self):
        return int(self._csr.indptr[-1])

    @property
    def row_starts(self):
        return _read_only(self._csr.indptr)

    @property
    def col_indices(self):
        return _read_only(self._csr.indices)

    @property
    def values_high(self):
        return _read_only(self._csr.data)

    @property
    def values_low(self):
        """ The binary32 copy of the values, or None if not materialized. """
        return None if self._low is None else _read_only(self._low.data)

    @property
    def has_low(self):
        return self._low is not None

    def materialize_low(self):
        """ Create the binary32 copy of the values (once) and return self. """
        if self._low is None:
            data = self._csr.data.astype(np.float32)
            self._low = scipy.sparse.csr_matrix(
                (data, self._csr.indices, self._csr.indptr),
                shape=self._csr.shape)
            self._low.has_sorted_indices = True
        return self

    def csr(self, precision=Precision.HIGH):
        """ The scipy CSR matrix holding the values in `precision`.

        The returned object is shared with this instance and must not be
        modified.
        """
        if precision is Precision.HIGH:
            return self._csr
        if self._low is None:
            raise PrecisionError('binary32 values have not been materialized')
        return self._low

    def to_scipy(self):
        """ An independent scipy CSR copy of the binary64 values. """
        return self._csr.copy()

    def toarray(self):
        """ Dense binary64 copy; intended for small matrices and tests. """
        return self._csr.toarray()

    def diagonal(self):
        return self._csr.diagonal()

    def transpose(self):
        return SparseMatrix.from_scipy(self._csr.T, drop_zeros=False)

    def __repr__(self):
        return (f'SparseMatrix(shape={self.shape}, nnz={self.nnz}, '
                f'low_precision={self.has_low})')


def _read_only(array):
    """ Return a non-writeable view of an array. """
    view = array.view()
    view.flags.writeable = False
    return view


def _check_compressed_rows(row_starts, col_indices, values, nrows, ncols):
    """ Raise `SparseFormatError` unless the arrays form a valid CSR matrix.
    """

    # Shape checks.
    if nrows < 0 or ncols < 0:
        raise SparseFormatError(f'negative shape ({nrows}, {ncols})')
    if row_starts.ndim != 1 or row_starts.size != nrows + 1:
        raise SparseFormatError('row_starts must have length nrows + 1')
    if row_starts[0] != 0:
        raise SparseFormatError('row_starts[0] must be 0')
    if np.any(np.diff(row_starts) < 0):
        raise SparseFormatError('row_starts must be non-decreasing')

    # Entry counts.
    nnz = int(row_starts[-1])
    if col_indices.size != nnz or values.size != nnz:
        raise SparseFormatError(
          f'row_starts[nrows]={nnz} but {col_indices.size} column indices '
          f'and {values.size} values were given')
    if nnz == 0:
        return

    # Column range.
    if col_indices.min() < 0 or col_indices.max() >= ncols:
        raise SparseFormatError(f'column index outside 0..{ncols - 1}')

    # Strictly increasing columns within each row.
    increasing = np.diff(col_indices) > 0
    boundaries = row_starts[1:-1]
    boundaries = boundaries[(boundaries > 0) & (boundaries < nnz)]
    increasing[boundaries - 1] = True
    if not increasing.all():
        row = int(np.searchsorted(row_starts,
                                  np.flatnonzero(~increasing)[0] + 1,
                                  side='right')) - 1
        raise SparseFormatError(
          f'column indices of row {row} are not strictly increasing')


def _assemble(rows, cols, values, nrows, ncols):
    """ Build a `SparseMatrix` from triplet arrays, summing duplicates.

    Triplets are first put in a canonical order (row, column, value), so the
    result is bit-identical for any ordering of the input.
    """

    # Canonical ordering.
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((values, cols, rows))
    (rows, cols, values) = (rows[order], cols[order], values[order])

    # Sum runs of identical (row, column) keys.
    if rows.size:
        new_key = np.ones(rows.size, dtype=bool)
        new_key[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new_key)
        values = np.add.reduceat(values, starts)
        (rows, cols) = (rows[starts], cols[starts])

    # Compress the rows.
    counts = np.bincount(rows, minlength=nrows)
    row_starts = np.concatenate(([0], np.cumsum(counts)))
    return SparseMatrix(row_starts, cols, values, (nrows, ncols))


def csr_from_triplets(triplets, nrows, ncols):
    """ Assemble a CSR matrix from `(row, col, value)` triplets.

    Arguments
    ---------
    triplets : iterable of (int, int, float)
        Zero-based entries; duplicates are summed.
    nrows, ncols : int
        Matrix shape.

    Returns
    -------
    SparseMatrix
        The assembled matrix, independent of the triplet order.
    """

    # Unpack the triplets.
    entries = list(triplets)
    if entries:
        (rows, cols, values) = (np.asarray(c) for c in zip(*entries))
    else:
        (rows, cols, values) = ([], [], [])
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    # Validate the index range.
    if rows.size and (rows.min() < 0 or rows.max() >= nrows
                      or cols.min() < 0 or cols.max() >= ncols):
        raise ArgumentError(
          f'triplet index out of range for shape ({nrows}, {ncols})')

    return _assemble(rows, cols, values, nrows, ncols)


def _numbered_lines(stream):
    """ Yield `(line_number, text)` pairs from a byte or text stream. """
    for (number, line) in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode('utf-8', errors='replace')
        yield (number, line.strip())


def read_matrix_market(stream):
    """ Read a Matrix Market coordinate file into a `SparseMatrix`.

    Arguments
    ---------
    stream : iterable of bytes or str
        An open file (binary or text mode) or any iterable of lines.

    Returns
    -------
    SparseMatrix
        CSR matrix with symmetric storage expanded, duplicates summed and
        rows sorted.

    >>> text = ['%%MatrixMarket matrix coordinate real symmetric',
    ...         '% lower triangle only', '2 2 2', '1 1 1.0', '2 1 5.0']
    >>> read_matrix_market(text).toarray().tolist()
    [[1.0, 5.0], [5.0, 0.0]]
    """

    lines = _numbered_lines(stream)

    # Parse the banner.
    (number, banner) = next(lines, (1, ''))
    tokens = banner.split()
    if len(tokens) != 5 or tokens[0] != '%%MatrixMarket':
        raise MatrixMarketError('malformed Matrix Market header', line=number)
    (kind, layout, field, symmetry) = (t.lower() for t in tokens[1:])
    if kind != 'matrix' or layout != 'coordinate':
        raise MatrixMarketError(f'unsupported object {kind!r} {layout!r}; '
                                'only "matrix coordinate" is read',
                                line=number)
    if field not in ('real', 'integer'):
        raise MatrixMarketError(f'unsupported field {field!r}', line=number)
    if symmetry not in ('general', 'symmetric'):
        raise MatrixMarketError(f'unsupported symmetry {symmetry!r}',
                                line=number)

    # Parse the size line, skipping comments.
    size = None
    for (number, line) in lines:
        if not line or line.startswith('%'):
            continue
        try:
            size = [int(token) for token in line.split()]
        except ValueError:
            size = []
        if len(size) != 3 or min(size) < 0:
            raise MatrixMarketError('expected "nrows ncols nnz"', line=number)
        break
    if size is None:
        raise MatrixMarketError('missing size line', line=number)
    (nrows, ncols, count) = size
    if symmetry == 'symmetric' and nrows != ncols:
        raise MatrixMarketError('symmetric matrix must be square',
                                line=number)
    if symmetry == 'symmetric':
        capacity = nrows * (nrows + 1) // 2
    else:
        capacity = nrows * ncols
    if count > capacity:
        raise MatrixMarketError(f'{count} entries exceed the {capacity} '
                                f'positions of a {nrows} x {ncols} '
                                f'{symmetry} matrix', line=number)

    # Parse the entries.
    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    values = np.empty(count, dtype=np.float64)
    read = 0
    for (number, line) in lines:
        if not line or line.startswith('%'):
            continue
        if read == count:
            raise MatrixMarketError(f'more than {count} entries', line=number)
        fields = line.split()
        if len(fields) != 3:
            raise MatrixMarketError(f'expected 3 fields, found {len(fields)}',
                                    line=number)
        try:
            (i, j, value) = (int(fields[0]), int(fields[1]), float(fields[2]))
        except ValueError:
            raise MatrixMarketError(f'cannot parse entry {line!r}',
                                    line=number) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(
              f'index ({i}, {j}) outside 1..{nrows} x 1..{ncols}', line=number)
        (rows[read], cols[read], values[read]) = (i - 1, j - 1, value)
        read += 1
    if read != count:
        raise MatrixMarketError(f'expected {count} entries, found {read}',
                                line=number)

    # Expand symmetric storage.
    if symmetry == 'symmetric':
        mirror = rows != cols
        (rows, cols, values) = (np.concatenate((rows, cols[mirror])),
                                np.concatenate((cols, rows[mirror])),
                                np.concatenate((values, values[mirror])))

    logger.debug('read %d x %d matrix with %d stored entries (%s)',
                 nrows, ncols, count, symmetry)
    return _assemble(rows, cols, values, nrows, ncols)


def load_matrix_market(path):
    """ Read a Matrix Market file from a filesystem path. """
    with open(path, 'rb') as stream:
        return read_matrix_market(stream)


def write_matrix_market(A, target):
    """ Write a matrix in Matrix Market coordinate general format.

    Values are written with 17 significant digits, so reading the file back
    reproduces every binary64 value exactly.

    Arguments
    ---------
    A : SparseMatrix
        Matrix to write.
    target : str, pathlib.Path or text stream
        Destination.
    """

    # Open the destination, when given a path.
    if isinstance(target, (str, Path)):
        with open(target, 'w') as stream:
            return write_matrix_market(A, stream)

    # Expand the row offsets into one-based coordinates.
    csr = A.csr()
    rows = np.repeat(np.arange(A.nrows), np.diff(csr.indptr)) + 1
    table = np.column_stack((rows, csr.indices + 1, csr.data))

    # Write header, size line and entries.
    target.write(f'{MATRIX_MARKET_BANNER}\n')
    target.write(f'{A.nrows} {A.ncols} {A.nnz}\n')
    if A.nnz:
        np.savetxt(target, table, fmt=MATRIX_MARKET_VALUE_FORMAT)


def matrix_market_text(A):
    """ Render a matrix as Matrix Market text. """
    stream = io.StringIO()
    write_matrix_market(A, stream)
    return stream.getvalue()


def spmv(A, x, precision=Precision.HIGH):
    """ Sparse matrix-vector product `A @ x` in a single precision.

    Each row is accumulated left to right in column order, in `precision`,
    so repeated calls are bit-identical.

    Arguments
    ---------
    A : SparseMatrix
        The matrix.
    x : array_like
        Vector of length `A.ncols`; cast to `precision` first.
    precision : Precision
        Arithmetic precision of the product.

    Returns
    -------
    numpy.ndarray
        `A @ x` with dtype `precision.dtype`.
    """
    matrix = A.csr(precision)
    x = np.asarray(x)
    if x.shape != (A.ncols,):
        raise DimensionError(f'vector of shape {x.shape} does not match '
                             f'{A.ncols} columns')
    return matrix @ x.astype(precision.dtype, copy=False)


def inverse_permutation(perm):
    """ Inverse of a permutation array. """
    perm = np.asarray(perm, dtype=np.int64)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    return inverse


def check_permutation(perm, n):
    """ Return `perm` as an int64 array, or raise if it is not a bijection
        on `0..n-1`.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ArgumentError(f'not a permutation of 0..{n - 1}')
    return perm


def permute_symmetric(A, perm):
    """ Symmetric permutation `Q A Q^T` with `B[p(i), p(j)] = A[i, j]`.

    >>> A = csr_from_triplets([(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0),
    ...                        (1, 1, 4.0)], 2, 2)
    >>> permute_symmetric(A, [1, 0]).toarray().tolist()
    [[4.0, 3.0], [2.0, 1.0]]
    """
    if A.nrows != A.ncols:
        raise DimensionError(f'matrix of shape {A.shape} is not square')
    perm = check_permutation(perm, A.nrows)
    coo = A.csr().tocoo()
    return _assemble(perm[coo.row], perm[coo.col], coo.data, A.nrows, A.ncols)


def extract_block(A, start, stop):
    """ The diagonal block `A[start:stop, start:stop]`. """
    return SparseMatrix.from_scipy(A.csr()[start:stop, start:stop],
                                   drop_zeros=False)


def vector_norm(x, which=Norm.TWO):
    """ Vector norm computed in binary64, whatever the precision of `x`. """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    order = np.inf if which is Norm.INF else which.value
    return float(np.linalg.norm(x, order))


def cast_vector(x, precision):
    """ Round a vector to `precision` (round-to-nearest-even). """
    return np.asarray(x).astype(precision.dtype)


def matrix_inf_norm(A):
    """ Maximum absolute row sum. """
    if A.nnz == 0:
        return 0.0
    sums = np.add.reduceat(np.abs(A.csr().data), A.csr().indptr[:-1])
    sums[np.diff(A.csr().indptr) == 0] = 0.0
    return float(sums.max())


def matrix_one_norm(A):
    """ Maximum absolute column sum. """
    if A.nnz == 0:
        return 0.0
    sums = np.bincount(A.csr().indices, weights=np.abs(A.csr().data),
                       minlength=A.ncols)
    return float(sums.max())


@dataclasses.dataclass(frozen=True)
class MatrixInfo:
    """ Size and symmetry metadata of a matrix.

    `pattern_symmetry` is the fraction of off-diagonal stored entries whose
    transposed position is also stored; `numeric_symmetry` the fraction whose
    transposed entry holds the same value.
    """

    name: str
    n: int
    nnz: int
    nnz_per_row: float
    pattern_symmetry: float
    numeric_symmetry: float


def matrix_info(A, name=''):
    """ Compute `MatrixInfo` for a square matrix.

    >>> info = matrix_info(csr_from_triplets(
    ...     [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 4.0), (2, 1, 2.0),
    ...      (2, 2, 4.0)], 3, 3), name='demo')
    >>> (info.n, info.nnz, info.nnz_per_row)
    (3, 6, 2.0)
    >>> (info.pattern_symmetry, info.numeric_symmetry)
    (0.6666666666666666, 0.6666666666666666)
    """

    # Off-diagonal entries.
    coo = A.csr().tocoo()
    off = coo.row != coo.col
    (rows, cols, values) = (coo.row[off], coo.col[off], coo.data[off])

    # Look up transposed partners.
    if rows.size:
        pattern = scipy.sparse.csr_matrix(
          (np.ones(A.nnz), A.csr().indices, A.csr().indptr), shape=A.shape)
        present = np.asarray(pattern[cols, rows]).ravel() != 0
        partners = np.asarray(A.csr()[cols, rows]).ravel()
        pattern_symmetry = float(present.mean())
        numeric_symmetry = float((present & (partners == values)).mean())
    else:
        (pattern_symmetry, numeric_symmetry) = (1.0, 1.0)

    n = A.nrows
    return MatrixInfo(name=name, n=n, nnz=A.nnz,
                      nnz_per_row=round(A.nnz / n, 2) if n else 0.0,
                      pattern_symmetry=pattern_symmetry,
                      numeric_symmetry=numeric_symmetry)


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
