import json
import sqlite3
import hashlib
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import List, Optional


@dataclass
class ExperimentRecord:
    """Data class representing one stored experiment report."""
    record_key: str
    command: str
    config_json: str
    report_json: str
    status: str = "new"
    runs: int = 1
    last_updated: Optional[str] = None


def record_key(command: str, config: dict) -> str:
    """Digest of the command and its fully resolved configuration."""
    payload = json.dumps({"command": command, "config": config}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


class ReportStore:
    """Manages SQLite storage of experiment reports and checks reproducibility."""

    def __init__(self, db_path: str):
        self.db_path = db_path
        logging.debug(f"Initializing report store at {db_path}")
        self._init_db()

    @contextmanager
    def get_connection(self):
        """Context manager for database connections with automatic cleanup."""
        logging.debug("Opening database connection")
        conn = sqlite3.connect(self.db_path)
        try:
            yield conn
        finally:
            conn.close()
            logging.debug("Closed database connection")

    def _init_db(self) -> None:
        """Initialize the database schema."""
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS experiment_reports (
                    record_key TEXT PRIMARY KEY,
                    command TEXT NOT NULL,
                    config_json TEXT NOT NULL,
                    report_json TEXT NOT NULL,
                    status TEXT DEFAULT 'new' CHECK(status IN ('new', 'reproduced', 'mismatch')),
                    runs INTEGER DEFAULT 1,
                    added_to_db TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    last_updated TIMESTAMP
                )
            ''')
            conn.commit()
            logging.debug("Report store initialization complete")

    def save_report(self, command: str, config: dict, report: dict) -> str:
        """Store a report and compare it with an earlier run of the same configuration.

        Returns 'new', 'reproduced' or 'mismatch'. A mismatching report keeps
        the first stored result so the discrepancy stays visible.
        """
        key = record_key(command, config)
        report_json = json.dumps(report, sort_keys=True)
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('SELECT report_json FROM experiment_reports WHERE record_key = ?', (key,))
            row = cursor.fetchone()

            if row is None:
                logging.debug(f"Inserting new report {key[:12]} for '{command}'")
                cursor.execute('''
                    INSERT INTO experiment_reports
                    (record_key, command, config_json, report_json, status, runs, added_to_db, last_updated)
                    VALUES (?, ?, ?, ?, 'new', 1, CURRENT_TIMESTAMP, CURRENT_TIMESTAMP)
                ''', (key, command, json.dumps(config, sort_keys=True), report_json))
                status = "new"
            elif row[0] == report_json:
                logging.info(f"Report {key[:12]} for '{command}' unchanged, run reproduced")
                cursor.execute('''
                    UPDATE experiment_reports SET status = 'reproduced', runs = runs + 1, last_updated = CURRENT_TIMESTAMP
                    WHERE record_key = ?
                ''', (key,))
                status = "reproduced"
            else:
                logging.warning(f"Report {key[:12]} for '{command}' differs from the stored run")
                cursor.execute('''
                    UPDATE experiment_reports SET status = 'mismatch', runs = runs + 1, last_updated = CURRENT_TIMESTAMP
                    WHERE record_key = ?
                ''', (key,))
                status = "mismatch"
            conn.commit()
        return status

    def get_all_records(self) -> List[ExperimentRecord]:
        """Retrieve all stored reports."""
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('SELECT record_key, command, config_json, report_json, status, runs, last_updated '
                           'FROM experiment_reports')
            return [ExperimentRecord(*row) for row in cursor.fetchall()]

    def get_record(self, key: str) -> Optional[ExperimentRecord]:
        """Retrieve a report by its key. Returns None if not found."""
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('SELECT record_key, command, config_json, report_json, status, runs, last_updated '
                           'FROM experiment_reports WHERE record_key = ?', (key,))
            row = cursor.fetchone()
            if row:
                return ExperimentRecord(*row)
            return None

    def get_mismatches(self) -> List[ExperimentRecord]:
        """Reports whose latest run disagreed with the stored result."""
        return [record for record in self.get_all_records() if record.status == "mismatch"]
