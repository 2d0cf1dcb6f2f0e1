""" Sparse LU kernels: left-looking LU with partial pivoting and pivot
    regularization, zero fill-in incomplete LU, and level-scheduled triangular
    solves in either precision.

Examples
--------

Factor a tridiagonal block. It produces no fill-in.

>>> from block_jacobi_gmres.fixtures import tridiagonal
>>> factors = gp_lu(tridiagonal(3))
>>> factors.U.diagonal().tolist()
[2.0, 1.5, 1.3333333333333335]
>>> factors.perturbations
()
>>> import numpy as np
>>> np.allclose(lu_solve(factors, [1.0, 0.0, 1.0]), 1.0, rtol=1e-15)
True

A tiny pivot is replaced by `eps_pivot` times the block infinity norm and
recorded.

>>> from block_jacobi_gmres.fixtures import diagonal
>>> gp_lu(diagonal([1e-20, 1.0]), eps_pivot=1e-10).perturbations
(PerturbationRecord(pivot_index=0, original_value=1e-20, replaced_value=1e-10),)

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Standard library imports.
import dataclasses
import enum
import functools
import logging

# Numerical imports.
import numpy as np
import scipy.sparse

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.exceptions import PrecisionError
from block_jacobi_gmres.exceptions import SingularBlockError
from block_jacobi_gmres.sparse import Precision
from block_jacobi_gmres.sparse import SparseMatrix
from block_jacobi_gmres.sparse import cast_vector
from block_jacobi_gmres.sparse import matrix_inf_norm


# Module logger.
logger = logging.getLogger(__name__)


DEFAULT_EPS_PIVOT = 1e-10
""" Relative pivot threshold below which pivots are regularized. """


@dataclasses.dataclass(frozen=True)
class PerturbationRecord:
    """ A pivot replaced during factorization.

    `pivot_index` is the elimination step; the other fields are the computed
    pivot and the value that replaced it.
    """

    pivot_index: int
    original_value: float
    replaced_value: float

    @property
    def delta(self):
        return self.replaced_value - self.original_value


class FactorKind(enum.Enum):
    EXACT = 'exact'
    ILU0 = 'ilu0'


class TriangularSolver:
    """ Sparse triangular solver using level scheduling.

    Rows are grouped into levels such that every row depends only on rows of
    earlier levels; each level is then solved with one sparse product.

    Arguments
    ---------
    matrix : SparseMatrix
        Square triangular matrix. Entries outside the referenced triangle are
        ignored.
    lower : bool
        Solve with the lower (True) or upper (False) triangle.
    unit_diagonal : bool
        Assume a unit diagonal instead of reading it.
    """

    def __init__(self, matrix, lower, unit_diagonal=False):

        # Split off the strict triangle and the diagonal.
        csr = matrix.csr()
        n = matrix.nrows
        if lower:
            strict = scipy.sparse.tril(csr, k=-1, format='csr')
        else:
            strict = scipy.sparse.triu(csr, k=1, format='csr')
        diagonal = np.ones(n) if unit_diagonal else csr.diagonal()
        if not np.all(diagonal):
            raise ArgumentError('triangular matrix has a zero diagonal entry')

        # Level of each row.
        levels = np.zeros(n, dtype=np.int64)
        for row in (range(n) if lower else range(n - 1, -1, -1)):
            columns = strict.indices[strict.indptr[row]:strict.indptr[row + 1]]
            if columns.size:
                levels[row] = levels[columns].max() + 1

        # Gather the rows of each level.
        order = np.argsort(levels, kind='stable')
        counts = np.bincount(levels, minlength=1)
        self._levels = [(rows, strict[rows], diagonal[rows])
                        for rows in np.split(order, np.cumsum(counts)[:-1])]
        self._low_levels = None
        self.n = n
        self.unit_diagonal = unit_diagonal

    @property
    def depth(self):
        """ Number of levels. """
        return len(self._levels)

    @property
    def has_low(self):
        return self._low_levels is not None

    def materialize_low(self):
        """ Create binary32 copies of the level slices. """
        if self._low_levels is None:
            self._low_levels = [(rows, part.astype(np.float32),
                                 diagonal.astype(np.float32))
                                for (rows, part, diagonal) in self._levels]
        return self

    def solve(self, rhs, precision=Precision.HIGH):
        """ Solve `T x = rhs` with all arithmetic in `precision`. """

        # Select the level data.
        if precision is Precision.LOW:
            if self._low_levels is None:
                raise PrecisionError('binary32 factors have not been '
                                     'materialized')
            levels = self._low_levels
        else:
            levels = self._levels

        # Substitute level by level.
        rhs = cast_vector(rhs, precision)
        solution = np.zeros(self.n, dtype=precision.dtype)
        for (rows, part, diagonal) in levels:
            values = rhs[rows] - part @ solution
            solution[rows] = values if self.unit_diagonal else values / diagonal
        return solution


@dataclasses.dataclass(frozen=True, eq=False)
class LUFactors:
    """ Factors `P M + E = L U` of a square block `M`.

    `L` is unit lower triangular with its diagonal stored, `U` is upper
    triangular, row `k` of `P M` is row `row_perm[k]` of `M`, and `E` is the
    diagonal perturbation assembled from `perturbations`.
    """

    n: int
    L: SparseMatrix
    U: SparseMatrix
    row_perm: np.ndarray
    perturbations: tuple
    kind: FactorKind
    matrix: SparseMatrix
    eps_pivot: float = 0.0
    block_inf_norm: float = 0.0

    @functools.cached_property
    def lower_solver(self):
        return TriangularSolver(self.L, lower=True, unit_diagonal=True)

    @functools.cached_property
    def upper_solver(self):
        return TriangularSolver(self.U, lower=False)

    @functools.cached_property
    def transpose_solvers(self):
        """ Solvers for `U^T` (lower) and `L^T` (unit upper). """
        return (TriangularSolver(self.U.transpose(), lower=True),
                TriangularSolver(self.L.transpose(), lower=False,
                                 unit_diagonal=True))

    @property
    def nnz(self):
        """ Stored entries of `L + U`, counting the diagonal once. """
        return self.L.nnz + self.U.nnz - self.n

    def materialize_low(self):
        self.lower_solver.materialize_low()
        self.upper_solver.materialize_low()
        return self

    def perturbation_matrix(self):
        """ The perturbation `E` in the pivoted frame, as a dense array. """
        perturbation = np.zeros((self.n, self.n))
        for record in self.perturbations:
            perturbation[record.pivot_index, record.pivot_index] += record.delta
        return perturbation

    def perturbed_matrix(self):
        """ The block actually factored, `M + P^T E`, as a dense array. """
        perturbed = self.matrix.toarray()
        for record in self.perturbations:
            column = record.pivot_index
            perturbed[self.row_perm[column], column] += record.delta
        return perturbed


def regularize_pivot(pivot, block_inf_norm, eps_pivot):
    """ Replace a pivot that is small relative to the block norm.

    Returns `(value, perturbed)`. A pivot with `|pivot| / block_inf_norm`
    below `eps_pivot` becomes `sign(pivot) * eps_pivot * block_inf_norm`, with
    the sign of zero taken as positive.

    >>> regularize_pivot(2.0, 1.0, 1e-10)
    (2.0, False)
    >>> regularize_pivot(-1e-15, 1.0, 1e-10)
    (-1e-10, True)
    >>> regularize_pivot(0.0, 3.0, 1e-10)
    (3e-10, True)
    """
    pivot = float(pivot)
    if block_inf_norm == 0.0:
        if pivot != 0.0:
            return (pivot, False)
    elif abs(pivot) / block_inf_norm >= eps_pivot:
        return (pivot, False)
    sign = -1.0 if pivot < 0.0 else 1.0
    return (sign * eps_pivot * block_inf_norm, True)


def _reach(starts, pinv, lower_rows):
    """ Elimination steps reachable from `starts`, in topological order.

    Step `j` leads to step `pinv[i]` for every pivoted row `i` stored in
    column `j` of `L`.
    """

    visited = set()
    postorder = []
    for start in starts:
        if start in visited:
            continue
        visited.add(start)
        stack = [(start, iter(lower_rows[start]))]
        while stack:
            (step, rows) = stack[-1]
            for row in rows:
                child = pinv[row]
                if child >= 0 and child not in visited:
                    visited.add(child)
                    stack.append((child, iter(lower_rows[child])))
                    break
            else:
                stack.pop()
                postorder.append(step)
    postorder.reverse()
    return postorder


def gp_lu(block, eps_pivot=DEFAULT_EPS_PIVOT):
    """ Left-looking sparse LU with partial pivoting.

    Each column is computed by a sparse triangular solve with the columns of
    `L` found so far, visiting only the steps reachable in the graph of `L`.
    The pivot is the eligible entry of largest magnitude (ties to the
    smallest row index) and is passed through `regularize_pivot`.

    Arguments
    ---------
    block : SparseMatrix
        Square block, factored in binary64.
    eps_pivot : float
        Relative pivot threshold; 0 disables regularization.

    Returns
    -------
    LUFactors
        Factors of kind `FactorKind.EXACT`.
    """

    # Validate.
    n = block.nrows
    if block.ncols != n:
        raise DimensionError(f'block of shape {block.shape} is not square')
    if eps_pivot < 0:
        raise ArgumentError('eps_pivot must be non-negative')
    norm = matrix_inf_norm(block)
    columns = block.csr().tocsc()
    columns.sort_indices()

    # Factor storage. Rows of L are original row indices until the end.
    lower_rows = [None] * n
    lower_values = [None] * n
    upper_steps = []
    upper_columns = []
    upper_values = []
    pinv = np.full(n, -1, dtype=np.int64)
    row_perm = np.empty(n, dtype=np.int64)
    perturbations = []
    work = np.zeros(n)

    for k in range(n):

        # Scatter column k and find the steps it depends on.
        rows = columns.indices[columns.indptr[k]:columns.indptr[k + 1]]
        work[rows] = columns.data[columns.indptr[k]:columns.indptr[k + 1]]
        starts = [int(pinv[row]) for row in rows if pinv[row] >= 0]
        steps = _reach(starts, pinv, lower_rows)

        # Sparse triangular solve with the known columns of L.
        for step in steps:
            value = work[row_perm[step]]
            upper_steps.append(step)
            upper_columns.append(k)
            upper_values.append(value)
            work[lower_rows[step]] -= lower_values[step] * value

        # Eligible pivot rows.
        pattern = np.unique(np.concatenate(
          [rows] + [lower_rows[step] for step in steps]))
        candidates = pattern[pinv[pattern] < 0]
        if candidates.size:
            pivot_row = int(candidates[np.argmax(np.abs(work[candidates]))])
            pivot = work[pivot_row]
        else:
            pivot_row = int(np.flatnonzero(pinv < 0)[0])
            pivot = 0.0

        # Regularize.
        (value, perturbed) = regularize_pivot(pivot, norm, eps_pivot)
        if value == 0.0:
            raise SingularBlockError(f'zero pivot in column {k}', column=k)
        if perturbed:
            record = PerturbationRecord(pivot_index=k,
                                        original_value=float(pivot),
                                        replaced_value=value)
            logger.debug('regularized pivot: %s', record)
            perturbations.append(record)

        # Store the pivot and column k of L.
        pinv[pivot_row] = k
        row_perm[k] = pivot_row
        upper_steps.append(k)
        upper_columns.append(k)
        upper_values.append(value)
        below = candidates[candidates != pivot_row]
        lower_rows[k] = below
        lower_values[k] = work[below] / value

        # Clear the work vector.
        work[pattern] = 0.0

    if perturbations:
        logger.warning('%d of %d pivots regularized (eps_pivot=%g, '
                       'block norm %g)', len(perturbations), n, eps_pivot, norm)

    # Assemble L in pivoted row order, with its unit diagonal.
    counts = [rows.size for rows in lower_rows]
    lower = scipy.sparse.coo_matrix(
      (np.concatenate(lower_values + [np.ones(n)]),
       (np.concatenate([pinv[rows] for rows in lower_rows] + [np.arange(n)]),
        np.concatenate([np.repeat(np.arange(n), counts), np.arange(n)]))),
      shape=(n, n))
    upper = scipy.sparse.coo_matrix(
      (upper_values, (upper_steps, upper_columns)), shape=(n, n))

    return LUFactors(n=n, L=SparseMatrix.from_scipy(lower, drop_zeros=False),
                     U=SparseMatrix.from_scipy(upper, drop_zeros=False),
                     row_perm=row_perm,
                     perturbations=tuple(perturbations), kind=FactorKind.EXACT,
                     matrix=block, eps_pivot=eps_pivot, block_inf_norm=norm)


def _check_rhs(factors, rhs):
    rhs = np.asarray(rhs)
    if rhs.shape != (factors.n,):
        raise DimensionError(f'right-hand side of shape {rhs.shape} does not '
                             f'match dimension {factors.n}')
    return rhs


def lu_solve(factors, rhs, precision=Precision.HIGH):
    """ Solve `M x = rhs` with the factors of `M`, in `precision`.

    With regularized pivots this solves the perturbed block instead of `M`.
    """
    rhs = _check_rhs(factors, rhs)
    permuted = factors.lower_solver.solve(rhs[factors.row_perm], precision)
    return factors.upper_solver.solve(permuted, precision)


def lu_solve_transpose(factors, rhs):
    """ Solve `M^T x = rhs` in binary64. """
    rhs = _check_rhs(factors, rhs)
    (upper_transpose, lower_transpose) = factors.transpose_solvers
    permuted = lower_transpose.solve(upper_transpose.solve(rhs))
    solution = np.empty_like(permuted)
    solution[factors.row_perm] = permuted
    return solution


def ilu0(A):
    """ Incomplete LU factorization with zero fill-in.

    Row-wise elimination in which an update of entry (i, j) is applied only
    when (i, j) is stored in `A`. There is no pivoting and no regularization.

    >>> from block_jacobi_gmres.fixtures import laplacian_2d
    >>> factors = ilu0(laplacian_2d(3))
    >>> factors.U.nnz + factors.L.nnz - factors.n == laplacian_2d(3).nnz
    True
    """

    # Validate.
    n = A.nrows
    if A.ncols != n:
        raise DimensionError(f'matrix of shape {A.shape} is not square')
    csr = A.to_scipy()
    (starts, indices, data) = (csr.indptr, csr.indices, csr.data)

    # Locate the diagonal of each row.
    diagonal = np.full(n, -1, dtype=np.int64)
    for row in range(n):
        found = np.flatnonzero(indices[starts[row]:starts[row + 1]] == row)
        if not found.size:
            raise SingularBlockError(f'row {row} has no diagonal entry',
                                     row=row)
        diagonal[row] = starts[row] + found[0]

    # Eliminate row by row.
    position = np.full(n, -1, dtype=np.int64)
    for row in range(n):
        (start, stop) = (starts[row], starts[row + 1])
        position[indices[start:stop]] = np.arange(start, stop)
        for entry in range(start, diagonal[row]):
            k = indices[entry]
            data[entry] /= data[diagonal[k]]
            multiplier = data[entry]
            targets = indices[diagonal[k] + 1:starts[k + 1]]
            where = position[targets]
            inside = where >= 0
            data[where[inside]] -= (
              multiplier * data[diagonal[k] + 1:starts[k + 1]][inside])
        position[indices[start:stop]] = -1
        if data[diagonal[row]] == 0.0:
            raise SingularBlockError(f'zero pivot in row {row}', row=row)

    # Split into L and U.
    factored = scipy.sparse.csr_matrix((data, indices, starts), shape=(n, n))
    lower = scipy.sparse.tril(factored, k=-1) + scipy.sparse.identity(n)
    upper = scipy.sparse.triu(factored)
    logger.debug('ILU(0) of order %d with %d stored entries', n, csr.nnz)

    return LUFactors(n=n, L=SparseMatrix.from_scipy(lower, drop_zeros=False),
                     U=SparseMatrix.from_scipy(upper, drop_zeros=False),
                     row_perm=np.arange(n), perturbations=(),
                     kind=FactorKind.ILU0, matrix=A,
                     block_inf_norm=matrix_inf_norm(A))


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
