""" Tests for the identity, ILU(0) and block-Jacobi preconditioners.
"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Import standard Python packages.
import json

# Import numerical packages.
import numpy as np
import numpy.testing
import pytest

# Import the package under test.
from block_jacobi_gmres import fixtures
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.exceptions import PreconditionerError
from block_jacobi_gmres.factorization import gp_lu
from block_jacobi_gmres.fixtures import convection_diffusion_2d
from block_jacobi_gmres.fixtures import diagonal
from block_jacobi_gmres.fixtures import laplacian_2d
from block_jacobi_gmres.fixtures import tridiagonal
from block_jacobi_gmres.fixtures import worked_example
from block_jacobi_gmres.graph import Partition
from block_jacobi_gmres.graph import graph_from_matrix
from block_jacobi_gmres.graph import import_partition
from block_jacobi_gmres.graph import partition_graph
from block_jacobi_gmres.preconditioner import apply
from block_jacobi_gmres.preconditioner import apply_neumann
from block_jacobi_gmres.preconditioner import block_error_bound
from block_jacobi_gmres.preconditioner import build_block_jacobi
from block_jacobi_gmres.preconditioner import build_identity
from block_jacobi_gmres.preconditioner import build_ilu0
from block_jacobi_gmres.preconditioner import cond_estimate_block
from block_jacobi_gmres.preconditioner import stats_to_json
from block_jacobi_gmres.preconditioner import stats_to_list
from block_jacobi_gmres.sparse import Precision
from block_jacobi_gmres.sparse import PrecisionPolicy
from block_jacobi_gmres.sparse import csr_from_triplets


HYBRID = PrecisionPolicy.from_name('hybrid')


def block_diagonal_part(A, partition):
    """ Dense `A` with every coupling between different blocks removed. """
    assignment = partition.assignment
    return A.toarray() * (assignment[:, None] == assignment[None, :])


def convection_setup(s=4):
    A = convection_diffusion_2d(6, convection=2.0)
    return (A, partition_graph(graph_from_matrix(A), s, matrix=A))


def test_identity():
    P = build_identity(laplacian_2d(2))
    v = np.array([1.0, -2.0, 3.0, 0.5])
    numpy.testing.assert_array_equal(apply(P, v), v)
    assert apply(P, v, Precision.LOW).dtype == np.float32
    with pytest.raises(DimensionError):
        apply(P, np.ones(3))


def test_worked_example():
    """ Two 2 by 2 blocks; the coupling entries are ignored. """
    A = worked_example()
    P = build_block_jacobi(A, partition_graph(graph_from_matrix(A), 2,
                                              matrix=A))
    numpy.testing.assert_allclose(apply(P, [5.0, 7.0, 7.0, 10.0]), 1.0,
                                  rtol=1e-15)
    assert P.s == 2
    assert [entry.block_dim for entry in P.stats] == [2, 2]
    assert [entry.block_nnz for entry in P.stats] == [4, 4]


def test_matches_dense_block_diagonal():
    """ Applying P solves with the block-diagonal part of A. """
    (A, partition) = convection_setup()
    P = build_block_jacobi(A, partition)
    v = np.random.default_rng(8).standard_normal(A.nrows)
    expected = np.linalg.solve(block_diagonal_part(A, partition), v)
    numpy.testing.assert_allclose(apply(P, v), expected, rtol=1e-12,
                                  atol=1e-14)


def test_non_contiguous_blocks():
    """ Imported partitions need not be contiguous. """
    A = worked_example()
    partition = import_partition(['1', '0', '1', '0'], n=4, s=2, matrix=A)
    P = build_block_jacobi(A, partition)
    v = np.array([1.0, 2.0, 3.0, 4.0])
    expected = np.linalg.solve(block_diagonal_part(A, partition), v)
    numpy.testing.assert_allclose(apply(P, v), expected, rtol=1e-14)


def test_blocks_are_independent():
    """ Changing the input in one block leaves the other blocks alone. """
    A = tridiagonal(8)
    partition = Partition.from_assignment([0] * 4 + [1] * 4, 2)
    P = build_block_jacobi(A, partition)
    v = np.arange(8.0)
    w = v.copy()
    w[5] = 100.0
    (first, second) = (apply(P, v), apply(P, w))
    numpy.testing.assert_array_equal(first[:4], second[:4])
    assert not np.array_equal(first[4:], second[4:])


def test_single_block_is_exact_solve():
    A = convection_diffusion_2d(5)
    P = build_block_jacobi(A, Partition.from_assignment(np.zeros(25), 1))
    v = np.ones(25)
    numpy.testing.assert_allclose(apply(P, v),
                                  np.linalg.solve(A.toarray(), v), rtol=1e-12)


def test_parallel_factorization_identical():
    (A, partition) = convection_setup(6)
    v = np.linspace(-1.0, 1.0, A.nrows)
    sequential = build_block_jacobi(A, partition)
    threaded = build_block_jacobi(A, partition, workers=3)
    numpy.testing.assert_array_equal(apply(sequential, v), apply(threaded, v))


def test_hybrid_application():
    """ binary32 application stays within 1e-5 of binary64. """
    (A, partition) = convection_setup()
    v = np.random.default_rng(2).standard_normal(A.nrows)
    double = build_block_jacobi(A, partition)
    hybrid = build_block_jacobi(A, partition, policy=HYBRID)
    low = apply(hybrid, v)
    assert low.dtype == np.float32
    high = apply(double, v)
    assert np.linalg.norm(low - high) <= 1e-5 * np.linalg.norm(high)
    numpy.testing.assert_array_equal(apply(hybrid, v, Precision.HIGH), high)


def test_ilu0_preconditioner():
    """ On a tridiagonal matrix ILU(0) is exact. """
    A = tridiagonal(10)
    P = build_ilu0(A)
    assert P.name == 'ilu0'
    v = np.ones(10)
    numpy.testing.assert_allclose(apply(P, v),
                                  np.linalg.solve(A.toarray(), v), rtol=1e-12)
    assert apply(build_ilu0(A, HYBRID), v).dtype == np.float32


@pytest.mark.parametrize('order', [1, 2, 3])
def test_neumann_series(order):
    """ The truncated series matches its dense evaluation. """
    (A, partition) = convection_setup()
    P = build_block_jacobi(A, partition, neumann_order=order)
    v = np.random.default_rng(order).standard_normal(A.nrows)

    # Dense series.
    inverse = np.linalg.inv(block_diagonal_part(A, partition))
    step = np.eye(A.nrows) - inverse @ A.toarray()
    term = inverse @ v
    expected = term.copy()
    for _ in range(order):
        term = step @ term
        expected += term

    numpy.testing.assert_allclose(apply(P, v), expected, rtol=1e-10,
                                  atol=1e-12)
    numpy.testing.assert_array_equal(apply_neumann(P, A, v, order),
                                     apply(P, v))


def test_neumann_order_zero_is_block_solve():
    (A, partition) = convection_setup()
    P = build_block_jacobi(A, partition, neumann_order=2)
    v = np.ones(A.nrows)
    numpy.testing.assert_array_equal(apply_neumann(P, A, v, 0),
                                     P.solve_blocks(v))


def test_neumann_errors():
    (A, partition) = convection_setup()
    plain = build_block_jacobi(A, partition)
    with pytest.raises(PreconditionerError):
        apply_neumann(plain, A, np.ones(A.nrows), 1)
    built = build_block_jacobi(A, partition, neumann_order=1)
    with pytest.raises(PreconditionerError):
        apply_neumann(built, A, np.ones(A.nrows), 2)
    with pytest.raises(PreconditionerError):
        apply_neumann(build_ilu0(A), A, np.ones(A.nrows), 1)
    with pytest.raises(ArgumentError):
        build_block_jacobi(A, partition, neumann_order=-1)


def test_partition_size_mismatch():
    with pytest.raises(DimensionError):
        build_block_jacobi(laplacian_2d(3),
                           Partition.from_assignment([0, 1], 2))


def test_regularized_block_counted():
    """ Pivot perturbations surface in the statistics. """
    A = csr_from_triplets([(0, 0, 1e-20), (1, 1, 1.0), (2, 2, 2.0),
                           (3, 3, 3.0)], 4, 4)
    P = build_block_jacobi(A, Partition.from_assignment([0, 0, 1, 1], 2))
    assert P.perturbation_count == 1
    assert [entry.perturbation_count for entry in P.stats] == [1, 0]


def test_perturbation_records_stay_few():
    """ Each tiny pivot is recorded once, far fewer than half the rows. """
    block = [(0, 0, 1e-20), (0, 1, 1.0), (1, 1, 2.0), (1, 2, 1.0),
             (2, 1, 1.0), (2, 2, 3.0)]
    A = csr_from_triplets([(3 * k + i, 3 * k + j, value) for k in range(4)
                           for (i, j, value) in block], 12, 12)
    partition = Partition.from_assignment(np.repeat(np.arange(4), 3), 4)
    P = build_block_jacobi(A, partition, eps_pivot=1e-10)
    assert P.perturbation_count == 4
    assert P.perturbation_count < A.nrows / 2

    for (name, make) in sorted(fixtures.FIXTURES.items()):
        A = make(10)
        P = build_block_jacobi(A, partition_graph(graph_from_matrix(A), 2,
                                                  matrix=A))
        assert P.perturbation_count < A.nrows / 2, name


def test_cond_estimate_small_block():
    assert cond_estimate_block(gp_lu(diagonal([1.0, 1000.0]))) == 1000.0
    factors = gp_lu(diagonal([5.0, 5.0]))
    assert cond_estimate_block(factors) == pytest.approx(1.0)


def test_cond_estimate_large_block():
    """ The sparse estimate brackets the dense 1-norm condition number. """
    A = convection_diffusion_2d(9, convection=1.0)
    exact = np.linalg.cond(A.toarray(), 1)
    estimate = cond_estimate_block(gp_lu(A))
    assert exact / 3.0 <= estimate <= exact * (1.0 + 1e-8)


def test_block_error_bound():
    eps = Precision.LOW.unit_roundoff
    eps_d = Precision.HIGH.unit_roundoff
    assert block_error_bound(10.0, eps, eps_d) == pytest.approx(
      (10.0 * eps_d + eps) * 10.0)
    with pytest.raises(ArgumentError):
        block_error_bound(0.5, eps, eps_d)


def test_error_bound_charges_binary32_storage():
    """ The bound uses binary32 storage roundoff under both policies. """
    (A, partition) = convection_setup()
    double = build_block_jacobi(A, partition)
    hybrid = build_block_jacobi(A, partition, policy=HYBRID)
    for entry in double.stats:
        assert entry.error_bound == pytest.approx(block_error_bound(
          entry.cond_estimate, 2.0 ** -24, 2.0 ** -53))
    numpy.testing.assert_allclose(
      [entry.error_bound for entry in double.stats],
      [entry.error_bound for entry in hybrid.stats], rtol=1e-6)


def test_stats_serialization():
    """ Statistics serialize to JSON; skipped diagnostics become null. """
    (A, partition) = convection_setup(3)
    P = build_block_jacobi(A, partition, policy=HYBRID)
    entries = stats_to_list(P.stats)
    assert sum(entry['dim'] for entry in entries) == A.nrows
    assert set(entries[0]) == {'dim', 'nnz', 'perturbations',
                               'cond_estimate', 'error_bound'}
    assert all(entry['cond_estimate'] >= 1.0 for entry in entries)
    assert all(entry['error_bound'] > 0.0 for entry in entries)
    quiet = build_block_jacobi(A, partition, diagnostics=False)
    decoded = json.loads(stats_to_json(quiet.stats))
    assert decoded[0]['cond_estimate'] is None
    assert decoded[0]['error_bound'] is None


def test_solve_cost_grows_with_neumann_order():
    (A, partition) = convection_setup()
    costs = [build_block_jacobi(A, partition, neumann_order=order).solve_cost
             for order in (0, 1, 2)]
    assert 0 < costs[0] < costs[1] < costs[2]


# Main.
if __name__ == '__main__':
    pytest.main([__file__])
