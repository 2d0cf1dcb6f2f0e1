""" Machine-readable artifacts of solver runs: the JSON run report, the
    convergence history CSV and the benchmark table.

Examples
--------

>>> document = {
...   'matrix': {'name': 'demo', 'n': 4, 'nnz': 10},
...   'config': {'precond': 'none'},
...   'result': {'converged': True, 'iterations': 3, 'restarts': 1,
...              'final_residual': 1e-12, 'setup_ms': 0.0, 'solve_ms': 0.25},
...   'preconditioner': {'blocks': []}}
>>> validate_report(document)
>>> del document['result']['restarts']
>>> validate_report(document)
Traceback (most recent call last):
...
block_jacobi_gmres.exceptions.ArgumentError: report: missing key result.restarts

>>> milliseconds(0.0123456)
12.35

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Standard library imports.
import csv
import dataclasses
import json
import logging
import numbers
from pathlib import Path

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError


# Module logger.
logger = logging.getLogger(__name__)


HISTORY_HEADER = ('restart_cycle', 'global_iteration', 'relative_residual')
""" Columns of the convergence history CSV. """

REPORT_SCHEMA = {
    'matrix': {'name': str, 'n': numbers.Integral, 'nnz': numbers.Integral},
    'config': dict,
    'result': {'converged': bool, 'iterations': numbers.Integral,
               'restarts': numbers.Integral, 'final_residual': numbers.Real,
               'setup_ms': numbers.Real, 'solve_ms': numbers.Real},
    'preconditioner': {'blocks': list},
}
""" Required keys of a run report and the type of each value. """

BLOCK_KEYS = ('dim', 'nnz', 'perturbations', 'cond_estimate', 'error_bound')
""" Keys of each per-block entry of a run report. """


def milliseconds(seconds):
    """ Seconds rendered as milliseconds with two decimals. """
    return round(seconds * 1e3, 2)


def _validate(value, schema, path):
    """ Check `value` against a nested schema of types and dictionaries. """
    if isinstance(schema, dict):
        if not isinstance(value, dict):
            raise ArgumentError(f'report: {path} must be an object')
        for (key, expected) in schema.items():
            location = f'{path}.{key}' if path else key
            if key not in value:
                raise ArgumentError(f'report: missing key {location}')
            _validate(value[key], expected, location)
    elif not isinstance(value, schema):
        raise ArgumentError(f'report: {path} must be of type '
                            f'{schema.__name__}')


def validate_report(document):
    """ Raise `ArgumentError` unless `document` follows the report schema. """

    _validate(document, REPORT_SCHEMA, '')

    # Per-block entries.
    for (index, block) in enumerate(document['preconditioner']['blocks']):
        missing = [key for key in BLOCK_KEYS if key not in block]
        if missing:
            raise ArgumentError(f'report: block {index} lacks {missing[0]}')

    # Optional Ritz values.
    for pair in document.get('ritz') or []:
        if len(pair) != 2:
            raise ArgumentError('report: Ritz values must be [re, im] pairs')


def build_report(info, config, solve_report, setup_seconds, solve_seconds,
                 stats=(), ritz=None):
    """ Assemble the run report of a solve.

    Arguments
    ---------
    info : MatrixInfo
        Metadata of the system matrix.
    config : dict
        Every option of the run.
    solve_report : SolveReport
        Outcome of the solver.
    setup_seconds, solve_seconds : float
        Wall times of the preconditioner setup and of the iteration.
    stats : sequence of PreconditionerStats
        Per-block statistics.
    ritz : sequence of complex
        Ritz values, when computed.
    """
    document = {
        'matrix': {'name': info.name, 'n': info.n, 'nnz': info.nnz},
        'config': dict(config),
        'result': {'converged': bool(solve_report.converged),
                   'iterations': int(solve_report.total_iterations),
                   'restarts': int(solve_report.restarts),
                   'final_residual': float(solve_report.final_residual),
                   'setup_ms': milliseconds(setup_seconds),
                   'solve_ms': milliseconds(solve_seconds),
                   'breakdown': bool(solve_report.breakdown),
                   'cycle_residuals': [float(value) for value
                                       in solve_report.cycle_residuals],
                   'operations': solve_report.operations.to_dict()},
        'preconditioner': {'blocks': [entry.to_dict() for entry in stats]},
    }
    if ritz is not None:
        document['ritz'] = [[float(value.real), float(value.imag)]
                            for value in ritz]
    return document


def write_report(document, path):
    """ Validate and write a run report as JSON. """
    validate_report(document)
    with open(path, 'w') as stream:
        json.dump(document, stream, indent=2)
        stream.write('\n')
    logger.info('wrote report %s', path)


def write_history(residual_history, path):
    """ Write the residual history as CSV, one row per iteration. """
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(HISTORY_HEADER)
        writer.writerows((entry.restart_cycle, entry.global_iteration,
                          repr(float(entry.relative_residual)))
                         for entry in residual_history)
    logger.info('wrote history %s', path)


@dataclasses.dataclass(frozen=True)
class BenchRow:
    """ One row of the benchmark table. """

    matrix_name: str
    n: int
    nnz: int
    nnz_per_row: float
    pattern_symmetry: float
    numeric_symmetry: float
    precond: str
    precond_setup_time: float
    solve_time: float
    iterations: int
    converged: bool
    final_residual: float


BENCH_COLUMNS = tuple(field.name for field in dataclasses.fields(BenchRow))
""" Column order of the benchmark CSV and text table. """


def _bench_cells(row):
    """ Text of each cell of a benchmark row. """
    cells = []
    for name in BENCH_COLUMNS:
        value = getattr(row, name)
        if name in ('precond_setup_time', 'solve_time', 'nnz_per_row'):
            cells.append(f'{value:.2f}')
        elif name in ('pattern_symmetry', 'numeric_symmetry'):
            cells.append(f'{value:.3f}')
        elif name == 'final_residual':
            cells.append(f'{value:.3e}')
        else:
            cells.append(str(value))
    return cells


def write_bench_csv(rows, target):
    """ Write benchmark rows as CSV to a path or text stream. """
    if isinstance(target, (str, Path)):
        with open(target, 'w', newline='') as stream:
            return write_bench_csv(rows, stream)
    writer = csv.writer(target)
    writer.writerow(BENCH_COLUMNS)
    writer.writerows(_bench_cells(row) for row in rows)


def format_bench_table(rows):
    """ Render benchmark rows as an aligned text table.

    Times are in milliseconds.
    """
    table = [list(BENCH_COLUMNS)] + [_bench_cells(row) for row in rows]
    widths = [max(len(line[column]) for line in table)
              for column in range(len(BENCH_COLUMNS))]
    lines = ['  '.join(cell.rjust(width) if index else cell.ljust(width)
                       for (index, (cell, width))
                       in enumerate(zip(line, widths)))
             for line in table]
    return '\n'.join(line.rstrip() for line in lines)


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
