""" Tests for the command-line interface and the artifacts it writes.
"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Import standard Python packages.
import csv
import json

# Import numerical packages.
import numpy as np
import numpy.testing
import pytest

# Import the package under test.
from block_jacobi_gmres import cli
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.fixtures import laplacian_2d
from block_jacobi_gmres.fixtures import worked_example
from block_jacobi_gmres.report import BENCH_COLUMNS
from block_jacobi_gmres.report import HISTORY_HEADER
from block_jacobi_gmres.report import validate_report
from block_jacobi_gmres.sparse import load_matrix_market
from block_jacobi_gmres.sparse import write_matrix_market


@pytest.fixture
def laplacian_path(tmp_path):
    """ The 32 by 32 grid Laplacian written as Matrix Market. """
    path = tmp_path / 'laplacian.mtx'
    write_matrix_market(laplacian_2d(32), path)
    return str(path)


@pytest.fixture
def worked_path(tmp_path):
    path = tmp_path / 'worked.mtx'
    write_matrix_market(worked_example(), path)
    return str(path)


def read_csv(path):
    with open(path, newline='') as stream:
        return list(csv.reader(stream))


def test_solve_hybrid_block_jacobi(laplacian_path, tmp_path, capsys):
    """ Manufactured-solution run: exit 0 and a converged report. """
    (report_path, history_path) = (tmp_path / 'run.json',
                                   tmp_path / 'history.csv')
    status = cli.main(['-q', 'solve', '--matrix', laplacian_path,
                       '--precond', 'block-jacobi', '--blocks', '16',
                       '--precision', 'hybrid',
                       '--report', str(report_path),
                       '--history', str(history_path)])
    assert status == cli.EXIT_CONVERGED
    assert 'converged=True' in capsys.readouterr().out

    # Report.
    with open(report_path) as stream:
        document = json.load(stream)
    validate_report(document)
    assert document['matrix'] == {'name': 'laplacian', 'n': 1024,
                                  'nnz': 4992}
    assert document['result']['converged'] is True
    assert document['config']['precision'] == 'hybrid'
    assert document['config']['blocks'] == 16
    assert len(document['preconditioner']['blocks']) == 16
    assert document['result']['operations']['spmv_low'] > 0

    # History: header plus the initial residual and one row per iteration.
    rows = read_csv(history_path)
    assert tuple(rows[0]) == HISTORY_HEADER
    assert len(rows) == document['result']['iterations'] + 2
    assert float(rows[1][2]) == pytest.approx(1.0)


def test_solve_not_converged(laplacian_path):
    status = cli.main(['-q', 'solve', '--matrix', laplacian_path,
                       '--precond', 'none', '--restart', '2',
                       '--max-restarts', '1', '--tol', '1e-12'])
    assert status == cli.EXIT_NOT_CONVERGED


@pytest.mark.parametrize('arguments', [
    ['solve', '--matrix', 'MISSING.mtx'],
    ['solve', '--matrix', '{worked}', '--precond', 'ilu0', '--blocks', '2'],
    ['solve', '--matrix', '{worked}', '--blocks', '0'],
    ['solve', '--matrix', '{worked}', '--blocks', '5'],
    ['solve', '--matrix', '{worked}', '--rhs', 'random:x'],
    ['solve', '--matrix', '{worked}', '--tol', '-1'],
    ['solve', '--matrix', '{worked}', '--unknown-flag'],
    ['partition', '--matrix', '{worked}', '--blocks', '0', '--out', 'p.txt'],
    ['generate', 'no-such-matrix', '--size', '3', '--out', 'x.mtx'],
    [],
])
def test_input_errors_exit_one(arguments, worked_path, tmp_path, capsys,
                               monkeypatch):
    """ Input problems exit with status 1 and a one-line message. """
    monkeypatch.chdir(tmp_path)
    arguments = [argument.format(worked=worked_path)
                 for argument in arguments]
    assert cli.main(['-q'] + arguments) == cli.EXIT_INPUT_ERROR
    assert capsys.readouterr().err.startswith('block-jacobi-gmres: error:')


def test_malformed_matrix_names_line(tmp_path, capsys):
    path = tmp_path / 'broken.mtx'
    path.write_text('%%MatrixMarket matrix coordinate real general\n'
                    '2 2 1\n1 1 1 1\n')
    assert cli.main(['solve', '--matrix', str(path)]) == 1
    assert 'line 3:' in capsys.readouterr().err


def test_impossible_entry_count_exits_one(tmp_path, capsys):
    path = tmp_path / 'huge.mtx'
    path.write_text('%%MatrixMarket matrix coordinate real general\n'
                    '2 2 100000000000000\n1 1 1\n')
    assert cli.main(['-q', 'solve', '--matrix', str(path)]) == 1
    assert 'line 2:' in capsys.readouterr().err


def test_partition_worked_example(worked_path, tmp_path, capsys):
    """ Two blocks of the worked example: file "0,0,1,1", one per line. """
    out = tmp_path / 'blocks.txt'
    status = cli.main(['partition', '--matrix', worked_path, '--blocks', '2',
                       '--out', str(out)])
    assert status == 0
    assert out.read_text() == '0\n0\n1\n1\n'
    assert 'cut_weight=1.5' in capsys.readouterr().out


def test_solve_with_partition_file(worked_path, tmp_path):
    blocks = tmp_path / 'blocks.txt'
    blocks.write_text('1\n0\n1\n0\n')
    report_path = tmp_path / 'run.json'
    status = cli.main(['-q', 'solve', '--matrix', worked_path, '--blocks', '2',
                       '--partition-file', str(blocks), '--tol', '1e-12',
                       '--report', str(report_path)])
    assert status == 0
    with open(report_path) as stream:
        document = json.load(stream)
    assert [block['dim'] for block in document['preconditioner']['blocks']] \
        == [2, 2]


def test_partition_file_sets_block_count(worked_path, tmp_path, capsys):
    blocks = tmp_path / 'blocks.txt'
    blocks.write_text('0\n1\n2\n2\n')
    report_path = tmp_path / 'run.json'
    status = cli.main(['-q', 'solve', '--matrix', worked_path,
                       '--partition-file', str(blocks), '--tol', '1e-12',
                       '--report', str(report_path)])
    assert status == 0
    with open(report_path) as stream:
        document = json.load(stream)
    assert [block['dim'] for block in document['preconditioner']['blocks']] \
        == [1, 1, 2]

    # A conflicting block count is an input error.
    assert cli.main(['-q', 'solve', '--matrix', worked_path, '--blocks', '2',
                     '--partition-file', str(blocks)]) == 1
    assert 'block' in capsys.readouterr().err


def test_solve_with_ritz_values(worked_path, tmp_path):
    report_path = tmp_path / 'run.json'
    cli.main(['-q', 'solve', '--matrix', worked_path, '--precond', 'none',
              '--ritz', '--report', str(report_path)])
    with open(report_path) as stream:
        document = json.load(stream)
    assert all(len(pair) == 2 for pair in document['ritz'])
    assert len(document['ritz']) >= 1


def test_bench_table(laplacian_path, tmp_path, capsys):
    """ One row per preconditioner, with median timings. """
    csv_path = tmp_path / 'bench.csv'
    status = cli.main(['-q', 'bench', '--matrix', laplacian_path,
                       '--precond', 'ilu0', '--precond', 'block-jacobi',
                       '--repetitions', '3', '--csv', str(csv_path)])
    assert status == 0
    rows = read_csv(csv_path)
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert [row[BENCH_COLUMNS.index('precond')] for row in rows[1:]] == \
        ['ilu0', 'block-jacobi']
    assert all(row[BENCH_COLUMNS.index('converged')] == 'True'
               for row in rows[1:])
    output = capsys.readouterr().out
    assert output.splitlines()[0].startswith('matrix_name')


def test_bench_skips_failing_rows(laplacian_path, tmp_path, capsys):
    rows = cli.cmd_bench([
      cli.RunSpec.from_options(matrix_path=str(tmp_path / 'missing.mtx')),
      cli.RunSpec.from_options(matrix_path=laplacian_path, precond='ilu0'),
    ])
    assert [row.precond for row in rows] == ['ilu0']
    with pytest.raises(ArgumentError):
        cli.cmd_bench([], repetitions=0)


def test_generate(tmp_path, capsys):
    out = tmp_path / 'cd.mtx'
    status = cli.main(['generate', 'convection-diffusion', '--size', '5',
                       '--convection', '2.0', '--out', str(out)])
    assert status == 0
    A = load_matrix_market(out)
    assert A.shape == (25, 25)
    assert A.toarray()[1, 0] == -3.0


def test_random_rhs_is_deterministic():
    A = laplacian_2d(4)
    spec = cli.RunSpec.from_options(matrix_path='A.mtx', rhs='random:42')
    numpy.testing.assert_array_equal(cli.load_rhs(spec, A),
                                     cli.load_rhs(spec, A))
    other = cli.RunSpec.from_options(matrix_path='A.mtx', rhs='random:43')
    assert not np.array_equal(cli.load_rhs(spec, A), cli.load_rhs(other, A))


def test_rhs_selectors(tmp_path):
    A = laplacian_2d(2)
    ones = cli.RunSpec.from_options(matrix_path='A.mtx', rhs='ones')
    numpy.testing.assert_array_equal(cli.load_rhs(ones, A), 1.0)
    axones = cli.RunSpec.from_options(matrix_path='A.mtx')
    numpy.testing.assert_array_equal(cli.load_rhs(axones, A), 2.0)
    path = tmp_path / 'b.txt'
    path.write_text('1\n2\n3\n4\n')
    from_file = cli.RunSpec.from_options(matrix_path='A.mtx',
                                         rhs=f'file:{path}')
    numpy.testing.assert_array_equal(cli.load_rhs(from_file, A),
                                     [1.0, 2.0, 3.0, 4.0])
    path.write_text('1\n2\n')
    with pytest.raises(DimensionError):
        cli.load_rhs(from_file, A)


@pytest.mark.parametrize('text', ['', 'random', 'file:', 'twos', 'ones:1'])
def test_bad_rhs_selector(text):
    with pytest.raises(ArgumentError):
        cli.parse_rhs(text)


def test_run_spec_config_round_trip():
    """ The JSON config block holds every option. """
    spec = cli.RunSpec.from_options(matrix_path='dir/A.mtx', blocks=8,
                                    precision='hybrid')
    config = json.loads(json.dumps(spec.to_config()))
    assert config['blocks'] == 8
    assert config['precond'] == 'block-jacobi'
    assert config['rhs'] == 'axones'
    assert spec.name == 'A'
    assert spec.gmres_config().policy.is_hybrid


def test_neumann_requires_block_jacobi():
    with pytest.raises(ArgumentError):
        cli.RunSpec.from_options(matrix_path='A.mtx', precond='none',
                                 neumann_order=1)


# Main.
if __name__ == '__main__':
    pytest.main([__file__])
