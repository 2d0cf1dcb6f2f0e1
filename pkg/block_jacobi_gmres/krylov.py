""" Arnoldi process, Givens least squares and restarted right-preconditioned
    GMRES with an optional binary32 Krylov basis.

Examples
--------

Solve a small system without preconditioning.

>>> import numpy as np
>>> from block_jacobi_gmres.fixtures import diagonal
>>> A = diagonal([1.0, 2.0])
>>> (x, report) = hybrid_restart_gmres(A, None, np.array([1.0, 2.0]),
...                                    GmresConfig(restart_m=10, tol=1e-12))
>>> (report.converged, report.total_iterations)
(True, 2)
>>> np.allclose(x, 1.0)
True

In hybrid mode the basis is built in binary32 while residuals and updates
stay in binary64, so the final residual still reaches binary64 tolerances.

>>> from block_jacobi_gmres.fixtures import laplacian_2d
>>> from block_jacobi_gmres.sparse import PrecisionPolicy, spmv
>>> A = laplacian_2d(6)
>>> b = spmv(A, np.ones(A.nrows))
>>> config = GmresConfig(restart_m=40, tol=1e-10,
...                      policy=PrecisionPolicy.from_name('hybrid'))
>>> (x, report) = hybrid_restart_gmres(A, None, b, config)
>>> report.converged and report.final_residual <= 1e-10
True

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Standard library imports.
import dataclasses
import logging
import time

# Numerical imports.
import numpy as np
import scipy.linalg
import scipy.linalg.blas

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.exceptions import KrylovError
from block_jacobi_gmres.preconditioner import IdentityPreconditioner
from block_jacobi_gmres.sparse import Precision
from block_jacobi_gmres.sparse import PrecisionPolicy
from block_jacobi_gmres.sparse import cast_vector
from block_jacobi_gmres.sparse import spmv
from block_jacobi_gmres.sparse import vector_norm


# Module logger.
logger = logging.getLogger(__name__)


DEFAULT_RESTART = 50
""" Krylov subspace dimension per restart cycle. """

DEFAULT_TOLERANCE = 1e-8
""" Convergence tolerance on the relative residual. """

DEFAULT_MAX_RESTARTS = 40
""" Maximum number of restart cycles. """

BREAKDOWN_FACTOR = 1e2
""" Breakdown threshold in units of the working unit roundoff, relative to
    the norm of the operator image before orthogonalization.
"""

STAGNATION_FACTOR = 4.0
""" Residual-estimate floor of a binary32 cycle, in unit roundoffs relative
    to the cycle's initial residual; the cycle ends once it is reached.
"""

STAGNATION_ONSET = 1e3
""" Below this many unit roundoffs (relative, as above) a binary32 cycle
    also ends once an iteration leaves the estimate above `STAGNATION_RATIO`
    times the previous one.
"""

STAGNATION_RATIO = 0.9
""" Estimate ratio of consecutive iterations that counts as no progress. """

RITZ_LIMIT = 200
""" Largest Hessenberg matrix accepted by `ritz_values`. """


# Arnoldi process.
@dataclasses.dataclass
class ArnoldiState:
    """ Orthonormal Krylov basis and Hessenberg matrix being built.

    Basis vectors are stored in `precision`; `H` is binary64 with shape
    `(m_max + 1, m_max)`, and `j` steps have been taken.
    """

    m_max: int
    precision: Precision
    V: list
    H: np.ndarray
    j: int = 0
    breakdown: bool = False
    inner_products: int = 0

    @classmethod
    def start(cls, v, m_max, precision=Precision.HIGH):
        """ Begin a basis with the normalized vector `v`. """
        if m_max < 1:
            raise ArgumentError('Arnoldi capacity must be positive')
        v = np.asarray(v, dtype=np.float64)
        norm = vector_norm(v)
        if norm == 0.0:
            raise ArgumentError('cannot start an Arnoldi basis from zero')
        return cls(m_max=m_max, precision=precision,
                   V=[cast_vector(v / norm, precision)],
                   H=np.zeros((m_max + 1, m_max)))

    def hessenberg(self):
        """ The `(j + 1) x j` Hessenberg matrix built so far. """
        return self.H[:self.j + 1, :self.j]

    def basis(self, count=None):
        """ The first `count` basis vectors as binary64 columns. """
        count = len(self.V) if count is None else count
        return np.column_stack(self.V[:count]).astype(np.float64)


def arnoldi_step(operator, state):
    """ Extend the basis by one vector with modified Gram-Schmidt.

    Inner products accumulate in binary64; the subtractions run in the state's
    precision. When the new vector's norm falls to `BREAKDOWN_FACTOR` unit
    roundoffs of the operator image, the step records a breakdown, stores a
    zero subdiagonal entry and appends no vector.

    Arguments
    ---------
    operator : callable
        Maps a basis vector to its image, in the state's precision.
    state : ArnoldiState
        State to update in place.

    Returns
    -------
    ArnoldiState
        The updated state.
    """

    # Preconditions.
    if state.breakdown:
        raise KrylovError('Arnoldi process has already broken down')
    if state.j >= state.m_max:
        raise KrylovError(f'Arnoldi basis is full ({state.m_max} steps)')

    # Operator image.
    dtype = state.precision.dtype
    j = state.j
    w = cast_vector(operator(state.V[j]), state.precision)
    image_norm = vector_norm(w)

    # Orthogonalize.
    for (i, v) in enumerate(state.V[:j + 1]):
        h = float(np.dot(v.astype(np.float64), w.astype(np.float64)))
        state.H[i, j] = h
        w = w - dtype.type(h) * v
    state.inner_products += j + 1

    # Normalize, or detect breakdown.
    norm = vector_norm(w)
    state.j = j + 1
    threshold = BREAKDOWN_FACTOR * state.precision.unit_roundoff * image_norm
    if norm <= threshold:
        state.H[j + 1, j] = 0.0
        state.breakdown = True
        logger.debug('Arnoldi breakdown at step %d (%.3e <= %.3e)',
                     j + 1, norm, threshold)
    else:
        state.H[j + 1, j] = norm
        state.V.append(cast_vector(w / dtype.type(norm), state.precision))

    return state


def run_arnoldi(operator, v, steps, precision=Precision.HIGH):
    """ Take up to `steps` Arnoldi steps from `v`, stopping on breakdown. """
    state = ArnoldiState.start(v, steps, precision)
    while state.j < steps and not state.breakdown:
        arnoldi_step(operator, state)
    return state


# Least squares.
class GivensLeastSquares:
    """ Incremental solution of `min || beta e_1 - H y ||` for a growing
        upper Hessenberg `H`, using Givens rotations.

    Arguments
    ---------
    beta : float
        Norm of the initial residual.
    m_max : int
        Maximum number of columns.
    """

    def __init__(self, beta, m_max):
        self.R = np.zeros((m_max + 1, m_max))
        self.g = np.zeros(m_max + 1)
        self.g[0] = beta
        self.rotations = []
        self.j = 0
        self.rank_deficient = False

    @property
    def residual(self):
        """ Norm of the least-squares residual for the current columns. """
        return abs(float(self.g[self.j]))

    def append_column(self, column):
        """ Add column `j` of `H` (its `j + 2` leading entries). """

        # Apply the previous rotations.
        j = self.j
        column = np.array(column[:j + 2], dtype=np.float64)
        for (i, (c, s)) in enumerate(self.rotations):
            (column[i], column[i + 1]) = (c * column[i] + s * column[i + 1],
                                          -s * column[i] + c * column[i + 1])

        # Annihilate the subdiagonal entry.
        (c, s) = scipy.linalg.blas.drotg(column[j], column[j + 1])
        (c, s) = (float(c), float(s))
        column[j] = c * column[j] + s * column[j + 1]
        column[j + 1] = 0.0
        (self.g[j], self.g[j + 1]) = (c * self.g[j], -s * self.g[j])
        if column[j] == 0.0:
            self.rank_deficient = True

        self.rotations.append((c, s))
        self.R[:j + 2, j] = column
        self.j = j + 1

    def solve(self):
        """ The minimizer `y` for the current columns. """
        j = self.j
        if j == 0:
            return np.zeros(0)
        if self.rank_deficient:
            return scipy.linalg.lstsq(self.R[:j, :j], self.g[:j])[0]
        return scipy.linalg.solve_triangular(self.R[:j, :j], self.g[:j])


def solve_hessenberg_ls(H, beta):
    """ Minimize `|| beta e_1 - H y ||_2` for an upper Hessenberg `H`.

    Returns `(y, residual_norm)`.

    >>> (y, residual) = solve_hessenberg_ls(np.array([[3.0], [4.0]]), 5.0)
    >>> (round(float(y[0]), 12), round(residual, 12))
    (0.6, 4.0)
    """
    H = np.asarray(H, dtype=np.float64)
    (rows, columns) = H.shape
    if rows != columns + 1:
        raise DimensionError(f'Hessenberg matrix of shape {H.shape} is not '
                             '(j + 1) x j')
    if beta < 0:
        raise ArgumentError('beta must be non-negative')
    least_squares = GivensLeastSquares(beta, columns)
    for k in range(columns):
        least_squares.append_column(H[:k + 2, k])
    return (least_squares.solve(), least_squares.residual)


# Spectral diagnostics.
def ritz_values(H):
    """ Eigenvalues of a square Hessenberg matrix, ordered by real then
        imaginary part.

    >>> values = ritz_values(np.array([[0.0, -1.0], [1.0, 0.0]]))
    >>> values.imag.tolist()
    [-1.0, 1.0]
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise KrylovError(f'matrix of shape {H.shape} is not square')
    if H.shape[0] > RITZ_LIMIT:
        raise KrylovError(f'order {H.shape[0]} exceeds {RITZ_LIMIT}')
    try:
        values = scipy.linalg.eigvals(H)
    except (np.linalg.LinAlgError, ValueError) as error:
        raise KrylovError(f'eigenvalue iteration failed: {error}') from error
    return np.sort_complex(values.astype(np.complex128))


# GMRES.
@dataclasses.dataclass(frozen=True)
class GmresConfig:
    """ Parameters of a restarted GMRES solve.

    `tol` applies to `||r|| / ||b||`, or to `||r||` when `absolute` is set.
    """

    restart_m: int = DEFAULT_RESTART
    tol: float = DEFAULT_TOLERANCE
    max_restarts: int = DEFAULT_MAX_RESTARTS
    policy: PrecisionPolicy = PrecisionPolicy()
    preconditioner: object = None
    absolute: bool = False

    def __post_init__(self):
        if self.restart_m < 1:
            raise ArgumentError(f'restart dimension {self.restart_m} < 1')
        if not self.tol > 0:
            raise ArgumentError(f'tolerance {self.tol} must be positive')
        if self.max_restarts < 1:
            raise ArgumentError(f'max_restarts {self.max_restarts} < 1')


@dataclasses.dataclass
class OperationCounts:
    """ Work performed by a solve. """

    spmv_low: int = 0
    spmv_high: int = 0
    precond_low: int = 0
    precond_high: int = 0
    inner_products: int = 0
    flops: int = 0

    def count(self, kind, precision, times=1):
        suffix = 'low' if precision is Precision.LOW else 'high'
        name = f'{kind}_{suffix}'
        setattr(self, name, getattr(self, name) + times)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class HistoryEntry:
    restart_cycle: int
    global_iteration: int
    relative_residual: float


@dataclasses.dataclass
class CycleOutcome:
    """ Result of one restart cycle. """

    iterations: int
    estimates: list
    breakdown: bool = False
    rank_deficient: bool = False
    hessenberg: np.ndarray = None
    stagnated: bool = False


@dataclasses.dataclass
class SolveReport:
    """ Outcome of `hybrid_restart_gmres`.

    `residual_history` holds the initial residual (iteration 0) followed by
    the least-squares residual estimate of every iteration; `cycle_residuals`
    holds the true binary64 residual before the first and after every cycle.
    Residuals are relative to `||b||` unless the solve was absolute.
    """

    converged: bool
    total_iterations: int
    restarts: int
    residual_history: list
    cycle_residuals: list
    final_residual: float
    breakdown: bool = False
    rank_deficient: bool = False
    wall_times: dict = dataclasses.field(default_factory=dict)
    operations: OperationCounts = dataclasses.field(
      default_factory=OperationCounts)
    diagnostics: dict = dataclasses.field(default_factory=dict)


def _resolve_preconditioner(A, P, config):
    if P is None:
        P = config.preconditioner
    if P is None:
        P = IdentityPreconditioner(A.nrows, config.policy.working)
    if P.n != A.nrows:
        raise DimensionError(f'preconditioner of dimension {P.n} does not '
                             f'match {A.nrows}')
    return P


def _residual_scale(b, config):
    return 1.0 if config.absolute else vector_norm(b)


def gmres_cycle(A, P, b, x0, config, counts=None):
    """ One restart cycle of right-preconditioned GMRES.

    The initial residual, the least-squares problem and the update
    `x0 + M^-1 V y` run in binary64; the operator `A M^-1` is applied in the
    policy's working precision. In binary32 the cycle also ends as soon as
    the residual estimate reaches its rounding floor or stops shrinking near
    it, leaving the next cycle to start from a binary64 residual.

    Arguments
    ---------
    A : SparseMatrix
        System matrix; needs its binary32 copy in hybrid mode.
    P : Preconditioner
        Right preconditioner, or None for the config's (or identity).
    b, x0 : numpy.ndarray
        Right-hand side and starting iterate.
    config : GmresConfig
        Solver parameters.
    counts : OperationCounts
        Counter updated in place.

    Returns
    -------
    tuple
        The new iterate and a `CycleOutcome`.
    """

    # Set up.
    P = _resolve_preconditioner(A, P, config)
    counts = OperationCounts() if counts is None else counts
    working = config.policy.working
    b = np.asarray(b, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    scale = _residual_scale(b, config)
    if scale == 0.0:
        return (np.zeros_like(b), CycleOutcome(iterations=0, estimates=[]))

    # Initial residual in binary64.
    residual = b - spmv(A, x0)
    counts.count('spmv', Precision.HIGH)
    beta = vector_norm(residual)
    if beta <= config.tol * scale:
        return (x0.copy(), CycleOutcome(iterations=0, estimates=[]))

    # Operator in working precision.
    def operator(v):
        counts.count('precond', working)
        counts.count('spmv', working)
        return spmv(A, P.apply(v, working), working)

    # Arnoldi with progressive least squares.
    m = config.restart_m
    state = ArnoldiState.start(residual, m, working)
    least_squares = GivensLeastSquares(beta, m)
    estimates = []
    stagnated = False
    while state.j < m:
        arnoldi_step(operator, state)
        least_squares.append_column(state.H[:state.j + 1, state.j - 1])
        estimates.append(least_squares.residual / scale)
        logger.debug('iteration %d: residual estimate %.6e', state.j,
                     estimates[-1])
        if state.breakdown or least_squares.residual <= config.tol * scale:
            break

        # A binary32 estimate levels off near its rounding floor.
        if working is Precision.LOW:
            relative = least_squares.residual / (beta * working.unit_roundoff)
            stagnated = (relative <= STAGNATION_FACTOR
                         or (relative <= STAGNATION_ONSET
                             and len(estimates) > 1
                             and estimates[-1]
                             > STAGNATION_RATIO * estimates[-2]))
            if stagnated:
                logger.debug('iteration %d: estimate stagnated, restarting',
                             state.j)
                break

    # Update in binary64.
    y = least_squares.solve()
    step = P.apply(state.basis(y.size) @ y, Precision.HIGH)
    counts.count('precond', Precision.HIGH)
    counts.inner_products += state.inner_products
    k = state.j
    counts.flops += int(k * (A.nnz + P.solve_cost + k * A.nrows) + k * k)

    outcome = CycleOutcome(iterations=k, estimates=estimates,
                           breakdown=state.breakdown,
                           rank_deficient=least_squares.rank_deficient,
                           hessenberg=state.H[:k, :k].copy(),
                           stagnated=stagnated)
    return (x0 + step, outcome)


def hybrid_restart_gmres(A, P, b, config=GmresConfig(), x0=None, ritz=False):
    """ Restarted right-preconditioned GMRES.

    After each cycle the true residual is recomputed in binary64 and the best
    iterate is kept. Failure to converge within `config.max_restarts` cycles
    is reported, not raised.

    Arguments
    ---------
    A : SparseMatrix
        System matrix.
    P : Preconditioner
        Right preconditioner, or None for the config's (or identity).
    b : array_like
        Right-hand side.
    config : GmresConfig
        Solver parameters.
    x0 : array_like
        Starting iterate; zero by default.
    ritz : bool
        Compute Ritz values of the first cycle's Hessenberg matrix.

    Returns
    -------
    tuple
        The solution and a `SolveReport`.
    """

    # Set up.
    start = time.perf_counter()
    P = _resolve_preconditioner(A, P, config)
    if config.policy.is_hybrid:
        A.materialize_low()
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.nrows,):
        raise DimensionError(f'right-hand side of shape {b.shape} does not '
                             f'match {A.nrows} rows')
    x = np.zeros(A.nrows) if x0 is None else np.array(x0, dtype=np.float64)
    counts = OperationCounts()
    scale = _residual_scale(b, config)

    # Zero right-hand side.
    if scale == 0.0:
        report = SolveReport(converged=True, total_iterations=0, restarts=0,
                             residual_history=[HistoryEntry(0, 0, 0.0)],
                             cycle_residuals=[0.0], final_residual=0.0,
                             wall_times={'setup': P.setup_seconds,
                                         'iterate': 0.0},
                             operations=counts)
        return (np.zeros(A.nrows), report)

    # Initial residual.
    measure = vector_norm(b - spmv(A, x)) / scale
    counts.count('spmv', Precision.HIGH)
    history = [HistoryEntry(0, 0, measure)]
    cycle_residuals = [measure]
    (best_measure, best_x) = (measure, x)
    (total, cycles, breakdown, rank_deficient) = (0, 0, False, False)
    hessenberg = None

    # Restart cycles.
    while best_measure > config.tol and cycles < config.max_restarts:
        (x, outcome) = gmres_cycle(A, P, b, x, config, counts)
        cycles += 1
        history.extend(HistoryEntry(cycles, total + k + 1, estimate)
                       for (k, estimate) in enumerate(outcome.estimates))
        total += outcome.iterations
        breakdown = breakdown or outcome.breakdown
        rank_deficient = rank_deficient or outcome.rank_deficient
        if hessenberg is None:
            hessenberg = outcome.hessenberg

        # True residual in binary64.
        measure = vector_norm(b - spmv(A, x)) / scale
        counts.count('spmv', Precision.HIGH)
        cycle_residuals.append(measure)
        logger.info('cycle %d: %d iterations, true residual %.6e', cycles,
                    outcome.iterations, measure)
        if measure < best_measure:
            (best_measure, best_x) = (measure, x)
        if outcome.iterations == 0:
            break

    # Report.
    converged = best_measure <= config.tol
    if not converged:
        logger.warning('GMRES did not converge in %d cycles: residual %.6e '
                       '> %.1e', cycles, best_measure, config.tol)
    diagnostics = {'stats': P.stats}
    if ritz and hessenberg is not None and hessenberg.size:
        try:
            diagnostics['ritz'] = ritz_values(hessenberg)
        except KrylovError as error:
            logger.warning('Ritz values unavailable: %s', error)
    report = SolveReport(converged=converged, total_iterations=total,
                         restarts=cycles, residual_history=history,
                         cycle_residuals=cycle_residuals,
                         final_residual=best_measure, breakdown=breakdown,
                         rank_deficient=rank_deficient,
                         wall_times={'setup': P.setup_seconds,
                                     'iterate': time.perf_counter() - start},
                         operations=counts, diagnostics=diagnostics)
    return (best_x, report)


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
