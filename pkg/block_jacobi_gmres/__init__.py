""" Hybrid-precision block-Jacobi preconditioned restarted GMRES for large
    sparse linear systems, with the ILU(0) baseline it is compared against.

Examples
--------
Create a test system: the five-point Laplacian on a 16 by 16 grid, with a
right-hand side whose solution is the vector of ones.

>>> import numpy as np
>>> A = laplacian_2d(16)
>>> b = spmv(A, np.ones(A.nrows))

Split the matrix graph into eight balanced blocks, and factor the diagonal
blocks of the permuted matrix. In hybrid mode the factors are also rounded to
binary32.

>>> partition = partition_graph(graph_from_matrix(A), 8, matrix=A)
>>> (partition.s, int(partition.block_sizes.sum()))
(8, 256)
>>> policy = PrecisionPolicy.from_name('hybrid')
>>> P = build_block_jacobi(A, partition, policy=policy)

Run restarted GMRES. The Krylov basis is built in binary32; the residual that
decides convergence is always computed in binary64.

>>> config = GmresConfig(restart_m=30, tol=1e-10, policy=policy)
>>> (x, report) = hybrid_restart_gmres(A, P, b, config)
>>> report.converged
True
>>> bool(np.max(np.abs(x - 1.0)) < 1e-6)
True

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Local imports.
from block_jacobi_gmres.exceptions import BlockJacobiError
from block_jacobi_gmres.sparse import Norm
from block_jacobi_gmres.sparse import Precision
from block_jacobi_gmres.sparse import PrecisionMode
from block_jacobi_gmres.sparse import PrecisionPolicy
from block_jacobi_gmres.sparse import SparseMatrix
from block_jacobi_gmres.sparse import cast_vector
from block_jacobi_gmres.sparse import csr_from_triplets
from block_jacobi_gmres.sparse import load_matrix_market
from block_jacobi_gmres.sparse import matrix_inf_norm
from block_jacobi_gmres.sparse import matrix_info
from block_jacobi_gmres.sparse import permute_symmetric
from block_jacobi_gmres.sparse import read_matrix_market
from block_jacobi_gmres.sparse import spmv
from block_jacobi_gmres.sparse import vector_norm
from block_jacobi_gmres.sparse import write_matrix_market
from block_jacobi_gmres.graph import Partition
from block_jacobi_gmres.graph import WeightedGraph
from block_jacobi_gmres.graph import cut_weight
from block_jacobi_gmres.graph import graph_from_matrix
from block_jacobi_gmres.graph import import_partition
from block_jacobi_gmres.graph import partition_graph
from block_jacobi_gmres.factorization import LUFactors
from block_jacobi_gmres.factorization import gp_lu
from block_jacobi_gmres.factorization import ilu0
from block_jacobi_gmres.factorization import lu_solve
from block_jacobi_gmres.factorization import regularize_pivot
from block_jacobi_gmres.preconditioner import IdentityPreconditioner
from block_jacobi_gmres.preconditioner import apply
from block_jacobi_gmres.preconditioner import apply_neumann
from block_jacobi_gmres.preconditioner import block_error_bound
from block_jacobi_gmres.preconditioner import build_block_jacobi
from block_jacobi_gmres.preconditioner import build_ilu0
from block_jacobi_gmres.preconditioner import cond_estimate_block
from block_jacobi_gmres.krylov import GmresConfig
from block_jacobi_gmres.krylov import SolveReport
from block_jacobi_gmres.krylov import arnoldi_step
from block_jacobi_gmres.krylov import gmres_cycle
from block_jacobi_gmres.krylov import hybrid_restart_gmres
from block_jacobi_gmres.krylov import ritz_values
from block_jacobi_gmres.krylov import solve_hessenberg_ls
from block_jacobi_gmres.fixtures import laplacian_2d
from block_jacobi_gmres.fixtures import convection_diffusion_2d
from block_jacobi_gmres.fixtures import random_well_conditioned
from block_jacobi_gmres.fixtures import tridiagonal
from block_jacobi_gmres.fixtures import worked_example


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
