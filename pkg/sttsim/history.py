# Run history
# Every `run` can record its per-policy results in a SQLite database. The first
# result recorded for a (workload, policy) pair becomes that pair's baseline.

import logging
import os
import sqlite3

from datetime import datetime

logger = logging.getLogger("sttsim.history")

DB_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'sim_results.db')


def init_db(db_path = DB_PATH):
    conn = sqlite3.connect(db_path)
    c = conn.cursor()
    c.execute('''
        CREATE TABLE IF NOT EXISTS baselines (
            workload TEXT NOT NULL,
            policy TEXT NOT NULL,
            energy_nj REAL NOT NULL,
            latency_cycles INTEGER NOT NULL,
            recorded_at TEXT NOT NULL,
            PRIMARY KEY (workload, policy)
        )
    ''')
    c.execute('''
        CREATE TABLE IF NOT EXISTS history (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            workload TEXT NOT NULL,
            policy TEXT NOT NULL,
            retention TEXT NOT NULL,
            distance INTEGER NOT NULL,
            energy_nj REAL NOT NULL,
            latency_cycles INTEGER NOT NULL,
            run_at TEXT NOT NULL
        )
    ''')
    conn.commit()
    conn.close()


def save_run_result(row : dict, db_path = DB_PATH):
    """Stores one results.csv row; the first row of a (workload, policy) pair is its baseline."""
    conn = sqlite3.connect(db_path)
    c = conn.cursor()
    now = datetime.now().isoformat()
    energy = float(row["energy_nj"])
    latency = int(row["latency_cycles"])

    # keeps the first recorded result
    c.execute(
        'INSERT OR IGNORE INTO baselines (workload, policy, energy_nj, latency_cycles, recorded_at) VALUES (?, ?, ?, ?, ?)',
        (row["workload"], row["policy"], energy, latency, now)
    )

    c.execute(
        'INSERT INTO history (workload, policy, retention, distance, energy_nj, latency_cycles, run_at) VALUES (?, ?, ?, ?, ?, ?, ?)',
        (row["workload"], row["policy"], row["retention"], int(row["distance"]), energy, latency, now)
    )
    conn.commit()
    conn.close()


def get_baseline(workload : str, policy : str, db_path = DB_PATH):
    try:
        conn = sqlite3.connect(db_path)
        c = conn.cursor()
        c.execute('SELECT energy_nj, latency_cycles FROM baselines WHERE workload = ? AND policy = ?', (workload, policy))
        row = c.fetchone()
        conn.close()
    except sqlite3.Error as e:
        logger.warning(f"Could not get baseline for {workload}/{policy}: {e}")
        row = None

    return row


def get_policy_history(workload : str, policy : str, limit : int = 20, db_path = DB_PATH) -> list:
    try:
        conn = sqlite3.connect(db_path)
        c = conn.cursor()
        c.execute(
            'SELECT energy_nj FROM history WHERE workload = ? AND policy = ? ORDER BY id DESC LIMIT ?',
            (workload, policy, limit)
        )
        rows = c.fetchall()
        conn.close()
        return [row[0] for row in reversed(rows)]
    except sqlite3.Error as e:
        logger.warning(f"Could not get history for {workload}/{policy}: {e}")
        return []


def baseline_change(row : dict, db_path = DB_PATH) -> str:
    """One line comparing a stored row with its pair's baseline and recorded runs."""
    workload, policy = row["workload"], row["policy"]
    energy = float(row["energy_nj"])
    baseline = get_baseline(workload, policy, db_path)
    runs = get_policy_history(workload, policy, db_path=db_path)

    if not baseline or not baseline[0]:
        return f"{workload}/{policy}: {energy:.3f} nJ, no baseline"
    change = (energy - baseline[0]) / baseline[0] * 100.0
    return f"{workload}/{policy}: {energy:.3f} nJ, {change:+.2f}% against baseline over {len(runs)} recorded runs"
