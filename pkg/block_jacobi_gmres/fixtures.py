""" Gallery of test matrices shipped with the package.

Examples
--------

>>> A = laplacian_2d(8)
>>> (A.shape, A.nnz)
((64, 64), 288)
>>> worked_example().toarray().tolist()[1]
[2.0, 5.0, -1.0, 0.0]

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Numerical imports.
import numpy as np
import scipy.sparse

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.sparse import SparseMatrix


def tridiagonal(n, lower=-1.0, diag=2.0, upper=-1.0):
    """ Constant-coefficient tridiagonal matrix of order `n`. """
    if n < 1:
        raise ArgumentError(f'matrix order must be positive, got {n}')
    bands = scipy.sparse.diags([lower, diag, upper], [-1, 0, 1],
                               shape=(n, n), format='csr')
    return SparseMatrix.from_scipy(bands)


def laplacian_2d(nx, ny=None):
    """ Five-point finite-difference Laplacian on an `nx` by `ny` grid.

    The matrix is symmetric positive definite with 4 on the diagonal and -1
    for each grid neighbour. Rows are numbered along x first.
    """
    ny = nx if ny is None else ny
    return _grid_operator(_second_difference(nx), _second_difference(ny))


def convection_diffusion_2d(nx, convection=1.0, ny=None):
    """ Upwind convection-diffusion operator on an `nx` by `ny` grid.

    Convection acts along x with strength `convection` (in grid units), which
    makes the matrix nonsymmetric while keeping it weakly diagonally
    dominant.

    >>> A = convection_diffusion_2d(3, convection=2.0)
    >>> A.toarray()[1, :3].tolist()
    [-3.0, 6.0, -1.0]
    """
    if convection < 0:
        raise ArgumentError('convection must be non-negative')
    ny = nx if ny is None else ny
    c = float(convection)
    along_x = scipy.sparse.diags([-1.0 - c, 2.0 + c, -1.0], [-1, 0, 1],
                                 shape=(nx, nx), format='csr')
    return _grid_operator(along_x, _second_difference(ny))


def worked_example():
    """ The 4 by 4 tridiagonal example used throughout the documentation.

    Its graph is a path on four nodes, and a two-way partition splits it into
    the leading and trailing 2 by 2 blocks.
    """
    dense = np.array([[4.0, 1.0, 0.0, 0.0],
                      [2.0, 5.0, -1.0, 0.0],
                      [0.0, -2.0, 6.0, 1.0],
                      [0.0, 0.0, 3.0, 7.0]])
    return SparseMatrix.from_scipy(scipy.sparse.csr_matrix(dense))


def random_well_conditioned(n, density=0.1, seed=0):
    """ Seeded random sparse matrix made strictly diagonally dominant.

    Off-diagonal values are uniform in [-1, 1]; each diagonal entry exceeds
    the absolute sum of its row by one.
    """
    if n < 1 or not 0.0 <= density <= 1.0:
        raise ArgumentError('need n >= 1 and 0 <= density <= 1')
    rng = np.random.default_rng(seed)
    dense = np.where(rng.random((n, n)) < density,
                     rng.uniform(-1.0, 1.0, (n, n)), 0.0)
    np.fill_diagonal(dense, 0.0)
    np.fill_diagonal(dense, np.abs(dense).sum(axis=1) + 1.0)
    return SparseMatrix.from_scipy(scipy.sparse.csr_matrix(dense))


def identity(n):
    return SparseMatrix.from_scipy(scipy.sparse.identity(n, format='csr'))


def diagonal(values):
    return SparseMatrix.from_scipy(scipy.sparse.diags([values], [0],
                                                      format='csr'))


def _second_difference(n):
    return scipy.sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n),
                              format='csr')


def _grid_operator(along_x, along_y):
    (nx, ny) = (along_x.shape[0], along_y.shape[0])
    if nx < 1 or ny < 1:
        raise ArgumentError('grid dimensions must be positive')
    operator = (scipy.sparse.kron(scipy.sparse.identity(ny), along_x)
                + scipy.sparse.kron(along_y, scipy.sparse.identity(nx)))
    return SparseMatrix.from_scipy(operator.tocsr())


FIXTURES = {
    'laplacian': lambda size, **options: laplacian_2d(size),
    'convection-diffusion': lambda size, convection=1.0, **options:
        convection_diffusion_2d(size, convection=convection),
    'tridiagonal': lambda size, **options: tridiagonal(size),
    'worked-example': lambda size, **options: worked_example(),
    'random': lambda size, seed=0, density=0.1, **options:
        random_well_conditioned(size, density=density, seed=seed),
    'identity': lambda size, **options: identity(size),
}
""" Fixture constructors by name, as offered by the `generate` command. """


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
