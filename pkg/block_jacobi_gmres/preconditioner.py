""" Right preconditioners: identity, ILU(0), and the block-Jacobi
    preconditioner built from LU factors of the diagonal blocks of a
    symmetrically permuted matrix.

Examples
--------

Build a two-block preconditioner for the worked example. The coupling
entries between the blocks are not part of it.

>>> import numpy as np
>>> from block_jacobi_gmres.fixtures import worked_example
>>> from block_jacobi_gmres.graph import graph_from_matrix, partition_graph
>>> A = worked_example()
>>> partition = partition_graph(graph_from_matrix(A), 2, matrix=A)
>>> P = build_block_jacobi(A, partition)
>>> P.block_matrix().toarray()
array([[4., 1., 0., 0.],
       [2., 5., 0., 0.],
       [0., 0., 6., 1.],
       [0., 0., 3., 7.]])
>>> z = P.apply(np.array([5.0, 7.0, 7.0, 10.0]))
>>> np.allclose(z, 1.0)
True

Per-block statistics are available for reporting.

>>> [entry['dim'] for entry in stats_to_list(P.stats)]
[2, 2]

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Standard library imports.
import concurrent.futures
import dataclasses
import functools
import json
import logging
import time

# Numerical imports.
import numpy as np
import scipy.sparse
import scipy.sparse.linalg

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.exceptions import PreconditionerError
from block_jacobi_gmres.factorization import DEFAULT_EPS_PIVOT
from block_jacobi_gmres.factorization import FactorKind
from block_jacobi_gmres.factorization import LUFactors
from block_jacobi_gmres.factorization import PerturbationRecord
from block_jacobi_gmres.factorization import gp_lu
from block_jacobi_gmres.factorization import ilu0
from block_jacobi_gmres.factorization import lu_solve
from block_jacobi_gmres.factorization import lu_solve_transpose
from block_jacobi_gmres.sparse import Precision
from block_jacobi_gmres.sparse import PrecisionPolicy
from block_jacobi_gmres.sparse import SparseMatrix
from block_jacobi_gmres.sparse import cast_vector
from block_jacobi_gmres.sparse import extract_block
from block_jacobi_gmres.sparse import inverse_permutation
from block_jacobi_gmres.sparse import permute_symmetric
from block_jacobi_gmres.sparse import spmv


# Module logger.
logger = logging.getLogger(__name__)


DEFAULT_NEUMANN_ORDER = 0
""" Order of the truncated Neumann series; 0 means direct block solves. """

DENSE_CONDITION_LIMIT = 64
""" Largest block whose condition number is computed densely. """


@dataclasses.dataclass(frozen=True)
class PreconditionerStats:
    """ Diagnostics of one diagonal block. """

    block_dim: int
    block_nnz: int
    perturbation_count: int
    cond_estimate: float
    error_bound: float

    def to_dict(self):
        return {'dim': self.block_dim, 'nnz': self.block_nnz,
                'perturbations': self.perturbation_count,
                'cond_estimate': _finite_or_none(self.cond_estimate),
                'error_bound': _finite_or_none(self.error_bound)}


def _finite_or_none(value):
    return value if np.isfinite(value) else None


def stats_to_list(stats):
    """ Convert block statistics to a list of JSON-ready dictionaries. """
    return [entry.to_dict() for entry in stats]


def stats_to_json(stats, indent=None):
    """ Serialize block statistics as a JSON array. """
    return json.dumps(stats_to_list(stats), indent=indent)


class Preconditioner:
    """ Base class of right preconditioners `v -> M^-1 v`.

    Arguments
    ---------
    n : int
        Dimension of the system.
    apply_precision : Precision
        Precision used when `apply` is called without one.
    """

    name = 'none'
    """ Name used in reports and on the command line. """

    def __init__(self, n, apply_precision=Precision.HIGH):
        self.n = n
        self.apply_precision = apply_precision
        self.stats = ()
        self.setup_seconds = 0.0

    @property
    def solve_cost(self):
        """ Floating point operations of one application. """
        return 0

    def _check(self, v, precision):
        v = np.asarray(v)
        if v.shape != (self.n,):
            raise DimensionError(f'vector of shape {v.shape} does not match '
                                 f'dimension {self.n}')
        return (v, self.apply_precision if precision is None else precision)

    def apply(self, v, precision=None):
        raise NotImplementedError

    def __repr__(self):
        return f'{type(self).__name__}(n={self.n})'


class IdentityPreconditioner(Preconditioner):
    """ `M = I`; application only rounds to the requested precision. """

    def apply(self, v, precision=None):
        (v, precision) = self._check(v, precision)
        return cast_vector(v, precision)


class ILU0Preconditioner(Preconditioner):
    """ ILU(0) of the whole matrix, applied by one forward and one backward
        substitution.
    """

    name = 'ilu0'

    def __init__(self, factors, apply_precision=Precision.HIGH):
        super().__init__(factors.n, apply_precision)
        self.factors = factors

    @property
    def solve_cost(self):
        return 2 * self.factors.nnz

    def apply(self, v, precision=None):
        (v, precision) = self._check(v, precision)
        return lu_solve(self.factors, v, precision)


@dataclasses.dataclass(frozen=True, eq=False)
class BlockJacobiData:
    """ State of a built block-Jacobi preconditioner.

    `combined` holds the block factors assembled block-diagonally in the
    permuted ordering, so one pair of triangular solves treats all blocks.
    """

    partition: object
    perm: np.ndarray
    block_factors: tuple
    combined: LUFactors
    low_ready: bool
    phi_blocks: tuple
    matrix: SparseMatrix
    neumann_order: int
    stats: tuple


class BlockJacobiPreconditioner(Preconditioner):
    """ Block-Jacobi preconditioner `M = Q^T diag(M_1, ..., M_s) Q`.

    With a positive Neumann order `k` the application is replaced by the
    truncated series of `apply_neumann`.
    """

    name = 'block-jacobi'

    def __init__(self, data, apply_precision=Precision.HIGH):
        super().__init__(data.perm.size, apply_precision)
        self.data = data
        self.stats = data.stats
        self._gather = inverse_permutation(data.perm)

    @property
    def s(self):
        return len(self.data.block_factors)

    @property
    def perturbation_count(self):
        return len(self.data.combined.perturbations)

    @property
    def solve_cost(self):
        cost = 2 * self.data.combined.nnz
        order = self.data.neumann_order
        return cost * (order + 1) + 2 * self.data.matrix.nnz * order

    def block_matrix(self):
        """ The block-diagonal matrix in the permuted ordering, before pivot
            regularization.
        """
        return self.data.combined.matrix

    def solve_blocks(self, v, precision=None):
        """ Solve with the block-diagonal factors, without Neumann terms. """
        (v, precision) = self._check(v, precision)
        permuted = lu_solve(self.data.combined, v[self._gather], precision)
        return permuted[self.data.perm]

    def apply(self, v, precision=None):
        if self.data.neumann_order > 0:
            return apply_neumann(self, self.data.matrix, v,
                                 self.data.neumann_order, precision)
        return self.solve_blocks(v, precision)


def apply(P, v, precision=None):
    """ Apply preconditioner `P` to `v`.

    >>> from block_jacobi_gmres.fixtures import diagonal
    >>> from block_jacobi_gmres.graph import Partition
    >>> A = diagonal([2.0, 4.0])
    >>> P = build_block_jacobi(A, Partition.from_assignment([0, 1], 2))
    >>> apply(P, [2.0, 4.0]).tolist()
    [1.0, 1.0]
    """
    return P.apply(v, precision)


def apply_neumann(P, A, v, k, precision=None):
    """ Truncated Neumann series `sum_{i=0..k} (I - F^-1 A)^i F^-1 v`.

    `F` is the block-diagonal part of `A` held by `P`. The series is
    evaluated in Horner form, `S <- S + F^-1 (v - A S)`, starting from
    `S = F^-1 v`.

    >>> from block_jacobi_gmres.fixtures import tridiagonal
    >>> from block_jacobi_gmres.graph import Partition
    >>> A = tridiagonal(2, 1.0, 2.0, 1.0)
    >>> P = build_block_jacobi(A, Partition.from_assignment([0, 1], 2),
    ...                        neumann_order=1)
    >>> apply_neumann(P, A, [1.0, 0.0], 1).tolist()
    [0.5, -0.25]
    """

    # Check the request against what was built.
    if not isinstance(P, BlockJacobiPreconditioner) or not P.data.phi_blocks:
        raise PreconditionerError('preconditioner was not built for '
                                  'Neumann application')
    if not 0 <= k <= P.data.neumann_order:
        raise PreconditionerError(f'Neumann order {k} exceeds the built '
                                  f'order {P.data.neumann_order}')
    if A.shape != (P.n, P.n):
        raise DimensionError(f'matrix of shape {A.shape} does not match '
                             f'dimension {P.n}')

    # Horner evaluation.
    (v, precision) = P._check(v, precision)
    v = cast_vector(v, precision)
    total = P.solve_blocks(v, precision)
    for _ in range(k):
        total = total + P.solve_blocks(v - spmv(A, total, precision),
                                       precision)
    return total


def block_error_bound(cond_estimate, eps, eps_d):
    """ Normalized relative error bound of a low-precision block solve,
        `(cond * eps_d + eps) * cond`.

    >>> block_error_bound(1.0, 2.0**-24, 2.0**-53) == 2.0**-53 + 2.0**-24
    True
    >>> block_error_bound(1.0, 0.0, 0.0)
    0.0
    """
    if cond_estimate < 1.0:
        raise ArgumentError(f'condition estimate {cond_estimate} below 1')
    return (cond_estimate * eps_d + eps) * cond_estimate


def cond_estimate_block(factors):
    """ 1-norm condition number of the block that `factors` represent.

    Small blocks are computed exactly from the dense perturbed block; larger
    ones combine the exact 1-norm with a block 1-norm estimate of the
    inverse, obtained through `lu_solve` and `lu_solve_transpose`.

    >>> from block_jacobi_gmres.fixtures import diagonal
    >>> cond_estimate_block(gp_lu(diagonal([1.0, 1000.0])))
    1000.0
    """

    n = factors.n
    if n <= DENSE_CONDITION_LIMIT:
        estimate = np.linalg.cond(factors.perturbed_matrix(), 1)
    else:

        # Exact norm of the perturbed block.
        deltas = [(factors.row_perm[record.pivot_index], record.pivot_index,
                   record.delta) for record in factors.perturbations]
        perturbed = factors.matrix.to_scipy()
        if deltas:
            (rows, columns, values) = zip(*deltas)
            perturbed = perturbed + scipy.sparse.coo_matrix(
              (values, (rows, columns)), shape=(n, n))
        norm = scipy.sparse.linalg.norm(perturbed, 1)

        # Estimated norm of the inverse.
        inverse = scipy.sparse.linalg.LinearOperator(
          (n, n), dtype=np.float64,
          matvec=lambda x: lu_solve(factors, np.ravel(x)),
          rmatvec=lambda x: lu_solve_transpose(factors, np.ravel(x)))
        estimate = norm * scipy.sparse.linalg.onenormest(inverse)

    return max(1.0, float(estimate))


def _block_stats(block, factors, policy, diagnostics):
    """ Statistics of one factored block.

    The error bound is that of binary32 factor storage under every policy.
    """
    if diagnostics:
        cond = cond_estimate_block(factors)
        bound = block_error_bound(cond, Precision.LOW.unit_roundoff,
                                  policy.high.unit_roundoff)
    else:
        (cond, bound) = (float('nan'), float('nan'))
    return PreconditionerStats(block_dim=factors.n, block_nnz=block.nnz,
                               perturbation_count=len(factors.perturbations),
                               cond_estimate=cond, error_bound=bound)


def _combine(blocks, factors, offsets):
    """ Assemble block factors into block-diagonal factors of order n. """
    records = tuple(
      PerturbationRecord(pivot_index=int(offset) + record.pivot_index,
                         original_value=record.original_value,
                         replaced_value=record.replaced_value)
      for (offset, block) in zip(offsets, factors)
      for record in block.perturbations)
    return LUFactors(
      n=int(offsets[-1]),
      L=SparseMatrix.from_scipy(
        scipy.sparse.block_diag([block.L.csr() for block in factors],
                                format='csr'), drop_zeros=False),
      U=SparseMatrix.from_scipy(
        scipy.sparse.block_diag([block.U.csr() for block in factors],
                                format='csr'), drop_zeros=False),
      row_perm=np.concatenate([block.row_perm + offset for (offset, block)
                               in zip(offsets, factors)]),
      perturbations=records, kind=FactorKind.EXACT,
      matrix=SparseMatrix.from_scipy(scipy.sparse.block_diag(
        [block.csr() for block in blocks], format='csr'), drop_zeros=False))


def build_block_jacobi(A, partition, eps_pivot=DEFAULT_EPS_PIVOT,
                       neumann_order=DEFAULT_NEUMANN_ORDER,
                       policy=PrecisionPolicy(), workers=None,
                       diagnostics=True):
    """ Build the block-Jacobi preconditioner of `A` for a partition.

    Arguments
    ---------
    A : SparseMatrix
        System matrix.
    partition : Partition
        Partition of the rows of `A` into diagonal blocks.
    eps_pivot : float
        Pivot regularization threshold passed to `gp_lu`.
    neumann_order : int
        Order of the truncated Neumann series applied instead of plain block
        solves; 0 selects plain block solves.
    policy : PrecisionPolicy
        In hybrid mode binary32 copies of the factors are created.
    workers : int
        Number of threads factoring blocks; None factors sequentially.
    diagnostics : bool
        Compute per-block condition estimates and error bounds.

    Returns
    -------
    BlockJacobiPreconditioner
        The preconditioner, applying in the policy's working precision.
    """

    # Validate.
    start = time.perf_counter()
    if A.nrows != A.ncols:
        raise DimensionError(f'matrix of shape {A.shape} is not square')
    if partition.n != A.nrows:
        raise DimensionError(f'partition of {partition.n} nodes does not '
                             f'match dimension {A.nrows}')
    if neumann_order < 0:
        raise ArgumentError('Neumann order must be non-negative')

    # Slice the diagonal blocks of the permuted matrix.
    permuted = permute_symmetric(A, partition.perm)
    offsets = partition.offsets
    blocks = [extract_block(permuted, begin, end)
              for (begin, end) in zip(offsets[:-1], offsets[1:])]

    # Factor the blocks, in parallel when requested.
    factor = functools.partial(gp_lu, eps_pivot=eps_pivot)
    if workers and workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            factors = list(pool.map(factor, blocks))
    else:
        factors = [factor(block) for block in blocks]

    # Assemble and optionally round the factors.
    combined = _combine(blocks, factors, offsets)
    if policy.is_hybrid:
        combined.materialize_low()
        if neumann_order > 0:
            A.materialize_low()

    # Statistics.
    stats = tuple(_block_stats(block, block_factors, policy, diagnostics)
                  for (block, block_factors) in zip(blocks, factors))

    data = BlockJacobiData(partition=partition, perm=partition.perm,
                           block_factors=tuple(factors), combined=combined,
                           low_ready=policy.is_hybrid,
                           phi_blocks=tuple(blocks) if neumann_order else (),
                           matrix=A, neumann_order=neumann_order, stats=stats)
    preconditioner = BlockJacobiPreconditioner(data, policy.working)
    preconditioner.setup_seconds = time.perf_counter() - start

    logger.info('block-Jacobi preconditioner: %d blocks, %d regularized '
                'pivots, %.2f ms', len(blocks), len(combined.perturbations),
                preconditioner.setup_seconds * 1e3)
    return preconditioner


def build_ilu0(A, policy=PrecisionPolicy()):
    """ Build the ILU(0) preconditioner of `A`. """
    start = time.perf_counter()
    factors = ilu0(A)
    if policy.is_hybrid:
        factors.materialize_low()
    preconditioner = ILU0Preconditioner(factors, policy.working)
    preconditioner.setup_seconds = time.perf_counter() - start
    logger.info('ILU(0) preconditioner: %d stored entries, %.2f ms',
                factors.nnz, preconditioner.setup_seconds * 1e3)
    return preconditioner


def build_identity(A, policy=PrecisionPolicy()):
    """ The identity preconditioner of the dimension of `A`. """
    return IdentityPreconditioner(A.nrows, policy.working)


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
