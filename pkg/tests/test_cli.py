"""End-to-end runs of the command line through app.main."""
import io
import json
import math

import pandas as pd
import pytest

from app import main
from conftest import MU2_01
from database.models import ReportArchive
from services.geodesics import read_loop


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def payload(out):
    return json.loads(out)['payload']


@pytest.fixture
def zigzag_file(tmp_path):
    lines = ['surface flat-torus 1,0,0,1']
    for i in range(16):
        lines.append(f'{i / 16!r} {0.05 * (-1) ** i!r}')
    path = tmp_path / 'zigzag.txt'
    path.write_text('\n'.join(lines) + '\n')
    return path


class TestCirculantScan:
    def test_minimal_n(self, capsys):
        code, out, _ = run(capsys, 'circulant-scan', '--lambda', '0.1', '--n-max', '64')
        data = payload(out)
        assert code == 0
        assert data['N'] == 4
        assert data['lambda_min'] == pytest.approx(MU2_01, abs=1e-12)

    def test_negative_rate(self, capsys):
        code, _, _ = run(capsys, 'circulant-scan', '--lambda', '-1')
        assert code == 1

    def test_not_found(self, capsys):
        code, out, _ = run(capsys, 'circulant-scan', '--lambda', '12', '--n-max', '8')
        assert code == 3
        assert all(row['lambda_min'] > 0 for row in payload(out)['trace'])

    def test_csv_trace(self, capsys):
        code, out, _ = run(capsys, 'circulant-scan', '--lambda', '0.25', '--n-max', '16', '--format', 'csv')
        frame = pd.read_csv(io.StringIO(out))
        assert list(frame.columns) == ['N', 'lambda_min']
        assert frame['N'].iloc[0] == 4
        assert code in (0, 3)


class TestWitnessCommand:
    def test_sphere(self, capsys):
        code, out, _ = run(capsys, 'witness', '--space', 'sphere:2', '--lambda', '0.1')
        data = payload(out)
        assert code == 0
        assert data['found'] and data['N'] == 4
        assert data['loop'] == {'kind': 'sphere', 'length': pytest.approx(6.283185307179586), 'class': None}
        assert set(data['certificate']) == {'lambda_min_ref', 'delta', 'bound', 'fires'}

    def test_flat_torus(self, capsys):
        code, out, _ = run(capsys, 'witness', '--space', 'flat-torus:1,0,0,5', '--lambda', '3.948')
        assert code == 0
        assert payload(out)['N'] == 4

    def test_no_canonical_loop(self, capsys):
        code, _, err = run(capsys, 'witness', '--space', 'spd-stein:3', '--lambda', '0.5')
        assert code == 3
        assert 'no canonical loop; use lambda-scan' in err

    def test_bad_space(self, capsys):
        code, _, _ = run(capsys, 'witness', '--space', 'klein:2', '--lambda', '0.5')
        assert code == 1

    def test_deterministic_payload(self, tmp_path, capsys):
        paths = [tmp_path / 'a.json', tmp_path / 'b.json']
        for path in paths:
            run(capsys, 'witness', '--space', 'projective:2', '--lambda', '0.1', '--n-max', '8', '--out', str(path))
        first, second = (json.loads(p.read_text()) for p in paths)
        first.pop('timestamp')
        second.pop('timestamp')
        assert first == second
        assert first['config']['seed'] == 0

    def test_archive(self, tmp_path, capsys):
        db = tmp_path / 'runs.db'
        run(capsys, 'witness', '--space', 'sphere:2', '--lambda', '0.1', '--n-max', '8', '--archive', str(db))
        run(capsys, 'witness', '--space', 'sphere:2', '--lambda', '10', '--n-max', '8', '--archive', str(db))
        table = ReportArchive(db).min_n_table('sphere:2')
        assert list(table['lambda']) == [0.1, 10.0]
        assert table['n'].iloc[0] == 4
        assert pd.isna(table['n'].iloc[1])


class TestLambdaScanCommand:
    def test_stein_csv(self, capsys):
        code, out, _ = run(capsys, 'lambda-scan', '--space', 'spd-stein:2', '--grid', '0.25,0.5,1.5',
                           '--budget', '1000', '--format', 'csv')
        frame = pd.read_csv(io.StringIO(out))
        assert code == 0
        assert list(frame.columns[:5]) == ['lambda', 'psd_observed', 'lambda_min', 'witness_n', 'seed']
        assert list(frame['psd_observed']) == [False, True, True]

    def test_istas_log_grid(self, capsys):
        code, out, _ = run(capsys, 'lambda-scan', '--space', 'circle:1', '--q', '3', '--log-grid', '0.05,1,20',
                           '--budget', '0')
        records = payload(out)['records']
        assert code == 0
        assert len(records) == 20
        assert any(r['lambda_min'] < -1e-6 for r in records)

    def test_empty_grid(self, capsys):
        code, _, _ = run(capsys, 'lambda-scan', '--space', 'sphere:2', '--grid', '')
        assert code == 1

    def test_negative_dimension(self, capsys):
        code, _, err = run(capsys, 'lambda-scan', '--space', 'hyperboloid:-1', '--grid', '1')
        assert code == 1
        assert 'Traceback' not in err

    def test_no_witness_exits_3(self, capsys):
        code, _, _ = run(capsys, 'lambda-scan', '--space', 'euclidean:2', '--grid', '1', '--n-schedule', '4',
                         '--budget', '16')
        assert code == 3


class TestShortenCommand:
    def test_zigzag(self, tmp_path, zigzag_file, capsys):
        out_loop = tmp_path / 'short.txt'
        code, out, _ = run(capsys, 'shorten', '--loop', str(zigzag_file), '--loop-out', str(out_loop))
        data = payload(out)
        assert code == 0
        assert data['final_length'] == pytest.approx(1.0, abs=1e-9)
        assert data['class_after'] == [1, 0]
        assert read_loop(out_loop).m == 16

    def test_malformed(self, tmp_path, capsys):
        path = tmp_path / 'bad.txt'
        path.write_text('surface flat-torus 1,0,0,1\n0 0\n')
        code, _, _ = run(capsys, 'shorten', '--loop', str(path))
        assert code == 1

    def test_perturbed_torus_loop(self, tmp_path, capsys):
        phi = [2.0 * math.pi * k / 128 for k in range(128)]
        lines = ['surface rev-torus 3.0,1.0']
        lines += [f'{0.1 * math.sin(v)!r} {v!r}' for v in phi]
        path = tmp_path / 'wavy.txt'
        path.write_text('\n'.join(lines) + '\n')
        code, out, _ = run(capsys, 'shorten', '--loop', str(path), '--perturb')
        data = payload(out)
        assert code == 0
        assert data['final_length'] == pytest.approx(4.0 * math.pi, rel=0.01)
        assert data['class_after'] == [1, 0]

    def test_iteration_cap(self, zigzag_file, capsys):
        code, out, _ = run(capsys, 'shorten', '--loop', str(zigzag_file), '--max-iter', '1', '--single-level')
        assert code == 3
        assert payload(out)['converged'] is False


class TestGramCommand:
    def test_loop_points(self, capsys):
        code, out, _ = run(capsys, 'gram', '--space', 'sphere:2', '--lambda', '0.1', '--n', '4', '--on-loop')
        data = payload(out)
        assert code == 0
        assert data['psd'] is False
        assert data['lambda_min'] == pytest.approx(MU2_01, abs=1e-10)
        assert len(data['gram']) == 4

    def test_sampled_points(self, capsys):
        code, out, _ = run(capsys, 'gram', '--space', 'euclidean:3', '--lambda', '1', '--n', '8', '--seed', '4')
        data = payload(out)
        assert code == 0
        assert data['psd'] is True
        assert data['provenance'] == 'seed:4'


class TestValidateMetricCommand:
    def test_valid_file(self, tmp_path, generator, capsys):
        path = generator.circle(tmp_path / 'circle.txt', n=8)
        code, out, _ = run(capsys, 'validate-metric', '--metric', str(path))
        assert code == 0
        assert payload(out)['valid'] is True

    def test_violation(self, tmp_path, capsys):
        path = tmp_path / 'bad.txt'
        path.write_text('3\n0\n1 0\n5 1 0\n')
        code, out, _ = run(capsys, 'validate-metric', '--metric', str(path))
        assert code == 1
        assert payload(out)['violations'] == [[0, 2, 1]]


class TestUsage:
    def test_unknown_command(self, capsys):
        code, _, err = run(capsys, 'plot')
        assert code == 1
        assert 'error' in err

    def test_help(self, capsys):
        code, out, _ = run(capsys, '--help')
        assert code == 0
        assert 'witness' in out

    def test_missing_required(self, capsys):
        code, _, _ = run(capsys, 'witness', '--lambda', '0.1')
        assert code == 1
