""" Command-line benchmark harness.

Sub-commands
------------
solve
    Load a matrix, build a preconditioner, run GMRES, write the JSON report
    and the convergence history.
bench
    Run every matrix with every preconditioner, repeatedly, and print a table
    of median timings.
partition
    Write the partition file of a matrix and print its quality.
generate
    Write one of the shipped test matrices in Matrix Market format.

Exit status is 0 on convergence, 2 when the solver does not converge and 1 on
any input error.

Examples
--------

>>> spec = RunSpec.from_options(matrix_path='A.mtx', precond='ilu0')
>>> (spec.precond, spec.restart_m, spec.tol, spec.blocks)
('ilu0', 50, 1e-08, None)
>>> RunSpec.from_options(matrix_path='A.mtx', precond='ilu0', blocks=4)
Traceback (most recent call last):
...
block_jacobi_gmres.exceptions.ArgumentError: --blocks requires --precond block-jacobi
>>> parse_rhs('random:7')
('random', 7, None)

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Standard library imports.
import argparse
import dataclasses
import logging
import statistics
import sys
import time
from pathlib import Path

# Numerical imports.
import numpy as np

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import BlockJacobiError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.factorization import DEFAULT_EPS_PIVOT
from block_jacobi_gmres.fixtures import FIXTURES
from block_jacobi_gmres.graph import DEFAULT_IMBALANCE_TOL
from block_jacobi_gmres.graph import cut_weight
from block_jacobi_gmres.graph import export_partition
from block_jacobi_gmres.graph import graph_from_matrix
from block_jacobi_gmres.graph import load_partition
from block_jacobi_gmres.graph import partition_graph
from block_jacobi_gmres.krylov import DEFAULT_MAX_RESTARTS
from block_jacobi_gmres.krylov import DEFAULT_RESTART
from block_jacobi_gmres.krylov import DEFAULT_TOLERANCE
from block_jacobi_gmres.krylov import GmresConfig
from block_jacobi_gmres.krylov import hybrid_restart_gmres
from block_jacobi_gmres.preconditioner import DEFAULT_NEUMANN_ORDER
from block_jacobi_gmres.preconditioner import build_block_jacobi
from block_jacobi_gmres.preconditioner import build_identity
from block_jacobi_gmres.preconditioner import build_ilu0
from block_jacobi_gmres.report import BenchRow
from block_jacobi_gmres.report import build_report
from block_jacobi_gmres.report import format_bench_table
from block_jacobi_gmres.report import milliseconds
from block_jacobi_gmres.report import write_bench_csv
from block_jacobi_gmres.report import write_history
from block_jacobi_gmres.report import write_report
from block_jacobi_gmres.sparse import PrecisionPolicy
from block_jacobi_gmres.sparse import load_matrix_market
from block_jacobi_gmres.sparse import matrix_info
from block_jacobi_gmres.sparse import spmv
from block_jacobi_gmres.sparse import write_matrix_market


# Module logger.
logger = logging.getLogger(__name__)


PROGRAM = 'block-jacobi-gmres'
""" Name of the console script. """

DEFAULT_BLOCKS = 16
""" Number of diagonal blocks when `--blocks` is not given. """

PRECONDITIONERS = ('none', 'ilu0', 'block-jacobi')
PRECISIONS = ('double', 'hybrid')

EXIT_CONVERGED = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def parse_rhs(text):
    """ Split a right-hand side selector into `(mode, seed, path)`.

    Selectors are `ones`, `axones` (b = A 1), `random:SEED` and `file:PATH`.
    """
    (mode, _, argument) = text.partition(':')
    if mode in ('ones', 'axones') and not argument:
        return (mode, None, None)
    if mode == 'random':
        try:
            return (mode, int(argument), None)
        except ValueError:
            raise ArgumentError(f'bad random seed in {text!r}') from None
    if mode == 'file' and argument:
        return (mode, None, argument)
    raise ArgumentError(f'unknown right-hand side {text!r}')


@dataclasses.dataclass(frozen=True)
class RunSpec:
    """ Every option of one solver run. """

    matrix_path: str
    rhs: str
    precond: str
    blocks: int = None
    restart_m: int = DEFAULT_RESTART
    tol: float = DEFAULT_TOLERANCE
    max_restarts: int = DEFAULT_MAX_RESTARTS
    precision: str = 'double'
    eps_pivot: float = DEFAULT_EPS_PIVOT
    neumann_order: int = DEFAULT_NEUMANN_ORDER
    imbalance_tol: float = DEFAULT_IMBALANCE_TOL
    partition_file: str = None
    report_path: str = None
    history_path: str = None
    ritz: bool = False
    absolute: bool = False
    workers: int = None

    DEFAULT_OPTIONS = dict(rhs='axones', precond='block-jacobi')
    """ Options applied under explicit overrides by `from_options`. """

    def __post_init__(self):
        parse_rhs(self.rhs)
        if self.precond not in PRECONDITIONERS:
            raise ArgumentError(f'unknown preconditioner {self.precond!r}')
        if self.precision not in PRECISIONS:
            raise ArgumentError(f'unknown precision {self.precision!r}')
        block_jacobi = self.precond == 'block-jacobi'
        if not block_jacobi:
            for (flag, value) in (('--blocks', self.blocks),
                                  ('--partition-file', self.partition_file)):
                if value is not None:
                    raise ArgumentError(
                      f'{flag} requires --precond block-jacobi')
            if self.neumann_order:
                raise ArgumentError(
                  '--neumann-order requires --precond block-jacobi')
        if self.blocks is not None and self.blocks < 1:
            raise ArgumentError(f'--blocks must be positive, got {self.blocks}')
        if self.eps_pivot < 0 or self.neumann_order < 0:
            raise ArgumentError('--eps-pivot and --neumann-order must be '
                                'non-negative')
        GmresConfig(restart_m=self.restart_m, tol=self.tol,
                    max_restarts=self.max_restarts)

    @classmethod
    def from_options(cls, **overrides):
        """ Build a spec from keyword options merged over the defaults. """
        return cls(**{**cls.DEFAULT_OPTIONS, **overrides})

    @property
    def name(self):
        return Path(self.matrix_path).stem

    @property
    def policy(self):
        return PrecisionPolicy.from_name(self.precision)

    def gmres_config(self):
        return GmresConfig(restart_m=self.restart_m, tol=self.tol,
                           max_restarts=self.max_restarts, policy=self.policy,
                           absolute=self.absolute)

    def to_config(self):
        """ The options as a JSON-ready mapping. """
        return {field.name: getattr(self, field.name)
                for field in dataclasses.fields(self)}


@dataclasses.dataclass
class RunResult:
    """ Everything produced by `execute`. """

    info: object
    solution: np.ndarray
    solve_report: object
    preconditioner: object
    setup_seconds: float
    solve_seconds: float


def load_rhs(spec, A):
    """ The right-hand side selected by `spec.rhs`. """
    (mode, seed, path) = parse_rhs(spec.rhs)
    n = A.nrows
    if mode == 'ones':
        return np.ones(n)
    if mode == 'axones':
        return spmv(A, np.ones(n))
    if mode == 'random':
        return np.random.default_rng(seed).standard_normal(n)
    try:
        b = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except ValueError as error:
        raise ArgumentError(f'{path}: {error}') from None
    if b.shape != (n,):
        raise DimensionError(f'{path}: {b.size} values for {n} rows')
    return b


def build_preconditioner(spec, A):
    """ Partition and factor according to `spec`. """
    if spec.precond == 'none':
        return build_identity(A, spec.policy)
    if spec.precond == 'ilu0':
        return build_ilu0(A, spec.policy)

    # Partition, from a file or the graph.
    if spec.partition_file:
        partition = load_partition(spec.partition_file, A.nrows, matrix=A)
        if spec.blocks is not None and spec.blocks != partition.s:
            raise ArgumentError(f'--blocks {spec.blocks} disagrees with the '
                                f'{partition.s} blocks of '
                                f'{spec.partition_file}')
    else:
        blocks = spec.blocks
        if blocks is None:
            blocks = min(DEFAULT_BLOCKS, A.nrows)
        partition = partition_graph(graph_from_matrix(A), blocks,
                                    spec.imbalance_tol, matrix=A)

    return build_block_jacobi(A, partition, eps_pivot=spec.eps_pivot,
                              neumann_order=spec.neumann_order,
                              policy=spec.policy, workers=spec.workers)


def execute(spec, A=None):
    """ Run the load, partition, build and solve pipeline of one spec. """

    # Load.
    if A is None:
        A = load_matrix_market(spec.matrix_path)
    info = matrix_info(A, spec.name)
    b = load_rhs(spec, A)
    logger.info('%s: n=%d nnz=%d', info.name, info.n, info.nnz)

    # Build.
    start = time.perf_counter_ns()
    preconditioner = build_preconditioner(spec, A)
    setup_seconds = (time.perf_counter_ns() - start) * 1e-9

    # Solve.
    start = time.perf_counter_ns()
    (solution, solve_report) = hybrid_restart_gmres(
      A, preconditioner, b, spec.gmres_config(), ritz=spec.ritz)
    solve_seconds = (time.perf_counter_ns() - start) * 1e-9
    logger.info('%s/%s: %d iterations, residual %.3e, setup %.2f ms, solve '
                '%.2f ms', info.name, preconditioner.name,
                solve_report.total_iterations, solve_report.final_residual,
                milliseconds(setup_seconds), milliseconds(solve_seconds))

    return RunResult(info=info, solution=solution, solve_report=solve_report,
                     preconditioner=preconditioner,
                     setup_seconds=setup_seconds, solve_seconds=solve_seconds)


def cmd_solve(spec):
    """ Solve one system and write its artifacts; returns the exit status. """
    result = execute(spec)
    report = result.solve_report
    if spec.report_path:
        document = build_report(result.info, spec.to_config(), report,
                                result.setup_seconds, result.solve_seconds,
                                stats=result.preconditioner.stats,
                                ritz=report.diagnostics.get('ritz'))
        write_report(document, spec.report_path)
    if spec.history_path:
        write_history(report.residual_history, spec.history_path)
    print(f'{result.info.name}: converged={report.converged} '
          f'iterations={report.total_iterations} '
          f'residual={report.final_residual:.3e}')
    return EXIT_CONVERGED if report.converged else EXIT_NOT_CONVERGED


def cmd_bench(specs, repetitions=1, csv_path=None):
    """ Run each spec `repetitions` times and tabulate median wall times.

    A spec that fails is logged and left out of the table.
    """

    if repetitions < 1:
        raise ArgumentError('repetitions must be positive')

    rows = []
    matrices = {}
    for spec in specs:
        try:

            # Load each matrix once.
            if spec.matrix_path not in matrices:
                matrices[spec.matrix_path] = load_matrix_market(
                  spec.matrix_path)
            A = matrices[spec.matrix_path]

            # Repeat.
            results = [execute(spec, A) for _ in range(repetitions)]

        except (BlockJacobiError, OSError) as error:
            logger.warning('skipping %s with %s: %s', spec.name, spec.precond,
                           error)
            continue

        last = results[-1]
        rows.append(BenchRow(
          matrix_name=last.info.name, n=last.info.n, nnz=last.info.nnz,
          nnz_per_row=last.info.nnz_per_row,
          pattern_symmetry=last.info.pattern_symmetry,
          numeric_symmetry=last.info.numeric_symmetry, precond=spec.precond,
          precond_setup_time=milliseconds(statistics.median(
            result.setup_seconds for result in results)),
          solve_time=milliseconds(statistics.median(
            result.solve_seconds for result in results)),
          iterations=last.solve_report.total_iterations,
          converged=last.solve_report.converged,
          final_residual=last.solve_report.final_residual))

    if csv_path:
        write_bench_csv(rows, csv_path)
    print(format_bench_table(rows))
    return rows


def cmd_partition(matrix_path, s, out_path,
                  imbalance_tol=DEFAULT_IMBALANCE_TOL):
    """ Partition a matrix and write the partition file. """
    A = load_matrix_market(matrix_path)
    graph = graph_from_matrix(A)
    partition = partition_graph(graph, s, imbalance_tol, matrix=A)
    export_partition(partition, out_path)
    print(f'cut_weight={cut_weight(graph, partition):.6g} '
          f'imbalance={partition.imbalance:.3f}')
    return EXIT_CONVERGED


def cmd_generate(name, size, out_path, **options):
    """ Write a shipped test matrix in Matrix Market format. """
    if name not in FIXTURES:
        raise ArgumentError(f'unknown matrix {name!r}')
    A = FIXTURES[name](size, **options)
    write_matrix_market(A, out_path)
    print(f'{out_path}: n={A.nrows} nnz={A.nnz}')
    return EXIT_CONVERGED


class _Parser(argparse.ArgumentParser):
    """ Argument parser reporting errors as `ArgumentError`. """

    def error(self, message):
        raise ArgumentError(message)


def _add_solver_options(parser):
    """ Options shared by `solve` and `bench`. """
    parser.add_argument('--rhs', default='axones',
                        help='ones, axones, random:SEED or file:PATH')
    parser.add_argument('--blocks', type=int, default=None)
    parser.add_argument('--restart', dest='restart_m', type=int,
                        default=DEFAULT_RESTART)
    parser.add_argument('--tol', type=float, default=DEFAULT_TOLERANCE)
    parser.add_argument('--max-restarts', type=int,
                        default=DEFAULT_MAX_RESTARTS)
    parser.add_argument('--precision', choices=PRECISIONS, default='double')
    parser.add_argument('--eps-pivot', type=float, default=DEFAULT_EPS_PIVOT)
    parser.add_argument('--neumann-order', type=int,
                        default=DEFAULT_NEUMANN_ORDER)
    parser.add_argument('--imbalance-tol', type=float,
                        default=DEFAULT_IMBALANCE_TOL)
    parser.add_argument('--absolute', action='store_true',
                        help='test the absolute residual')
    parser.add_argument('--workers', type=int, default=None,
                        help='threads used to factor blocks')


def build_parser():
    """ The argument parser of the console script. """

    parser = _Parser(prog=PROGRAM, description='Hybrid-precision '
                     'block-Jacobi preconditioned restarted GMRES.')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')
    commands = parser.add_subparsers(dest='command', required=True)

    # solve
    solve = commands.add_parser('solve', help='solve one system')
    solve.add_argument('--matrix', dest='matrix_path', required=True)
    solve.add_argument('--precond', choices=PRECONDITIONERS,
                       default='block-jacobi')
    solve.add_argument('--partition-file', default=None)
    solve.add_argument('--report', dest='report_path', default=None)
    solve.add_argument('--history', dest='history_path', default=None)
    solve.add_argument('--ritz', action='store_true')
    _add_solver_options(solve)

    # bench
    bench = commands.add_parser('bench', help='benchmark preconditioners')
    bench.add_argument('--matrix', dest='matrix_paths', action='append',
                       required=True)
    bench.add_argument('--precond', dest='preconds', action='append',
                       choices=PRECONDITIONERS)
    bench.add_argument('--repetitions', type=int, default=1)
    bench.add_argument('--csv', dest='csv_path', default=None)
    _add_solver_options(bench)

    # partition
    partition = commands.add_parser('partition', help='partition a matrix')
    partition.add_argument('--matrix', dest='matrix_path', required=True)
    partition.add_argument('--blocks', type=int, required=True)
    partition.add_argument('--out', dest='out_path', required=True)
    partition.add_argument('--imbalance-tol', type=float,
                           default=DEFAULT_IMBALANCE_TOL)

    # generate
    generate = commands.add_parser('generate', help='write a test matrix')
    generate.add_argument('name', choices=sorted(FIXTURES))
    generate.add_argument('--size', type=int, required=True)
    generate.add_argument('--out', dest='out_path', required=True)
    generate.add_argument('--convection', type=float, default=1.0)
    generate.add_argument('--seed', type=int, default=0)
    generate.add_argument('--density', type=float, default=0.1)

    return parser


def _solver_options(arguments):
    """ RunSpec options common to `solve` and `bench`. """
    names = ('rhs', 'blocks', 'restart_m', 'tol', 'max_restarts', 'precision',
             'eps_pivot', 'neumann_order', 'imbalance_tol', 'absolute',
             'workers')
    return {name: getattr(arguments, name) for name in names}


def _bench_specs(arguments):
    """ One spec per (matrix, preconditioner) pair. """
    options = _solver_options(arguments)
    specs = []
    for path in arguments.matrix_paths:
        for precond in arguments.preconds or ['ilu0', 'block-jacobi']:
            block_jacobi = precond == 'block-jacobi'
            specs.append(RunSpec.from_options(
              **{**options,
                 'blocks': options['blocks'] if block_jacobi else None,
                 'neumann_order':
                   options['neumann_order'] if block_jacobi else 0},
              matrix_path=path, precond=precond))
    return specs


def run(arguments):
    """ Dispatch parsed arguments to a sub-command. """
    if arguments.command == 'solve':
        spec = RunSpec.from_options(
          **_solver_options(arguments), matrix_path=arguments.matrix_path,
          precond=arguments.precond, partition_file=arguments.partition_file,
          report_path=arguments.report_path,
          history_path=arguments.history_path, ritz=arguments.ritz)
        return cmd_solve(spec)
    if arguments.command == 'bench':
        cmd_bench(_bench_specs(arguments), arguments.repetitions,
                  arguments.csv_path)
        return EXIT_CONVERGED
    if arguments.command == 'partition':
        return cmd_partition(arguments.matrix_path, arguments.blocks,
                             arguments.out_path, arguments.imbalance_tol)
    return cmd_generate(arguments.name, arguments.size, arguments.out_path,
                        convection=arguments.convection, seed=arguments.seed,
                        density=arguments.density)


def main(argv=None):
    """ Entry point of the console script; returns the exit status. """
    try:
        arguments = build_parser().parse_args(argv)
        level = (logging.DEBUG if arguments.verbose
                 else logging.WARNING if arguments.quiet else logging.INFO)
        logging.basicConfig(level=level,
                            format='%(levelname)s %(name)s: %(message)s')
        return run(arguments)
    except (BlockJacobiError, OSError) as error:
        print(f'{PROGRAM}: error: {error}', file=sys.stderr)
        return EXIT_INPUT_ERROR


# Main.
if __name__ == '__main__':
    sys.exit(main())
