import json
import logging
import sqlite3
from datetime import datetime, timezone

import pandas as pd

logger = logging.getLogger(__name__)


class ReportArchive:
    """SQLite archive of witness reports and lambda-scan rows."""

    def __init__(self, db_path):
        self.db_path = str(db_path)
        self.init_database()

    def _connect(self):
        return sqlite3.connect(self.db_path)

    def init_database(self):
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS witness_runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                space TEXT NOT NULL,
                lambda REAL NOT NULL,
                q REAL NOT NULL,
                found BOOLEAN NOT NULL,
                n INTEGER,
                lambda_min REAL,
                route TEXT,
                report_json TEXT NOT NULL,
                created_at TEXT NOT NULL
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS scan_rows (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                space TEXT NOT NULL,
                q REAL NOT NULL,
                seed INTEGER NOT NULL,
                lambda REAL NOT NULL,
                psd_observed BOOLEAN NOT NULL,
                lambda_min REAL,
                witness_n INTEGER,
                created_at TEXT NOT NULL
            )
        ''')

        cursor.execute('CREATE INDEX IF NOT EXISTS idx_witness_space_lambda ON witness_runs(space, lambda)')
        cursor.execute('CREATE INDEX IF NOT EXISTS idx_scan_space_lambda ON scan_rows(space, lambda)')

        conn.commit()
        conn.close()

    @staticmethod
    def _now():
        return datetime.now(timezone.utc).isoformat(timespec='seconds')

    def save_witness(self, space, lam, q, report):
        """Store one witness report (a WitnessReport or its dict form)."""
        data = report.to_dict() if hasattr(report, 'to_dict') else dict(report)
        conn = self._connect()
        cursor = conn.cursor()
        cursor.execute(
            'INSERT INTO witness_runs (space, lambda, q, found, n, lambda_min, route, report_json, created_at) '
            'VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)',
            (space, float(lam), float(q), bool(data['found']), data.get('N'), data.get('lambda_min'),
             data.get('route'), json.dumps(data, sort_keys=True, default=str), self._now()),
        )
        conn.commit()
        conn.close()

    def save_scan(self, report):
        now = self._now()
        rows = [
            (report.space, float(report.q), int(report.seed), r.lam, bool(r.psd_observed),
             r.lambda_min, r.witness_n, now)
            for r in report.records
        ]
        conn = self._connect()
        cursor = conn.cursor()
        cursor.executemany(
            'INSERT INTO scan_rows (space, q, seed, lambda, psd_observed, lambda_min, witness_n, created_at) '
            'VALUES (?, ?, ?, ?, ?, ?, ?, ?)',
            rows,
        )
        conn.commit()
        conn.close()
        logger.info('archived %d scan rows for %s', len(rows), report.space)

    def get_witness_runs(self, space, limit=1000):
        conn = self._connect()
        query = '''
            SELECT lambda, q, found, n, lambda_min, route, created_at
            FROM witness_runs
            WHERE space = ?
            ORDER BY id DESC
            LIMIT ?
        '''
        df = pd.read_sql_query(query, conn, params=[space, limit])
        conn.close()
        return df

    def min_n_table(self, space):
        """Empirical N(lambda): smallest witnessing N recorded per lambda.

        Witness runs and scan rows both contribute; lambdas that never
        produced a witness are listed with N missing.
        """
        conn = self._connect()
        query = '''
            SELECT lambda, MIN(n) AS n FROM (
                SELECT lambda, CASE WHEN found THEN n END AS n FROM witness_runs WHERE space = ?
                UNION ALL
                SELECT lambda, witness_n AS n FROM scan_rows WHERE space = ?
            )
            GROUP BY lambda
            ORDER BY lambda
        '''
        df = pd.read_sql_query(query, conn, params=[space, space])
        conn.close()
        df['n'] = df['n'].astype('Int64')
        return df
