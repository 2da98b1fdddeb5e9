import pandas as pd
import pytest

from database.models import ReportArchive
from services.kernels import lambda_scan
from services.spaces import SpdStein
from services.witness import witness_on_circle


@pytest.fixture
def archive(tmp_path):
    return ReportArchive(tmp_path / 'archive.db')


class TestReportArchive:
    def test_witness_runs_newest_first(self, archive):
        archive.save_witness('circle:1.0', 0.1, 2.0, witness_on_circle(1.0, 0.1, 16))
        archive.save_witness('circle:1.0', 0.25, 2.0, witness_on_circle(1.0, 0.25, 16))
        runs = archive.get_witness_runs('circle:1.0')
        assert list(runs['lambda']) == [0.25, 0.1]
        assert runs['route'].iloc[1] == 'circulant'
        assert runs['n'].iloc[1] == 4

    def test_other_spaces_are_separate(self, archive):
        archive.save_witness('circle:1.0', 0.1, 2.0, witness_on_circle(1.0, 0.1, 16))
        assert archive.get_witness_runs('sphere:2').empty

    def test_limit(self, archive):
        for _ in range(3):
            archive.save_witness('circle:1.0', 0.1, 2.0, witness_on_circle(1.0, 0.1, 4))
        assert len(archive.get_witness_runs('circle:1.0', limit=2)) == 2

    def test_dict_reports(self, archive):
        archive.save_witness('sphere:2', 5.0, 2.0, {'found': False, 'N': None, 'lambda_min': None})
        runs = archive.get_witness_runs('sphere:2')
        assert not bool(runs['found'].iloc[0])

    def test_min_n_table_merges_scans(self, archive):
        report = lambda_scan(SpdStein(2), [0.25, 1.5], budget=50)
        archive.save_scan(report)
        archive.save_witness('spd-stein:2', 0.25, 2.0, {'found': True, 'N': 9, 'lambda_min': -1.0})
        table = archive.min_n_table('spd-stein:2')
        assert list(table.columns) == ['lambda', 'n']
        assert list(table['lambda']) == [0.25, 1.5]
        assert table['n'].iloc[0] == 7
        assert pd.isna(table['n'].iloc[1])
