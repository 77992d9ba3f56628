# cache_manager.py

import sqlite3
import logging
import json
import hashlib
import time
from typing import Dict, Optional, Sequence

import numpy as np

import config


class QuadratureCache:
    """SQLite cache of Hilb log-weights so that repeated CLI runs skip the quadrature."""

    def __init__(self, db_path: str = None):
        if db_path is None:
            db_path = config.CACHE_DB_PATH
        self.db_path = db_path
        self._init_database()
        self._migrate_database()

    def _init_database(self):
        """Initialize the SQLite database with the cache table."""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute('''
                    CREATE TABLE IF NOT EXISTS hilb_cache (
                        key TEXT PRIMARY KEY,
                        k INTEGER NOT NULL,
                        mode TEXT NOT NULL,
                        polytope TEXT,
                        log_weights_json TEXT NOT NULL,
                        created REAL NOT NULL
                    )
                ''')
                cursor.execute('''
                    CREATE INDEX IF NOT EXISTS idx_created
                    ON hilb_cache(created)
                ''')
                conn.commit()
                logging.info(f"Quadrature cache initialized at {self.db_path}")
        except sqlite3.Error as e:
            logging.error(f"Error initializing quadrature cache: {e}")
            raise

    def _migrate_database(self):
        """Add the polytope column to caches written before it existed."""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute("PRAGMA table_info(hilb_cache)")
                columns = [column[1] for column in cursor.fetchall()]
                if 'polytope' not in columns:
                    logging.info("Migrating quadrature cache: adding polytope column...")
                    cursor.execute('ALTER TABLE hilb_cache ADD COLUMN polytope TEXT')
                    conn.commit()
        except sqlite3.Error as e:
            logging.warning(f"Migration check/update: {e}")

    @staticmethod
    def make_key(polytope, potential, k: int, mode: str, g_fingerprint: str) -> str:
        """md5 of everything the Hilb entries depend on; g enters through GWeight.fingerprint()."""
        hasher = hashlib.md5()
        payload = {
            "halfspaces": [[list(map(int, normal)), int(offset)] for normal, offset in polytope.halfspaces],
            "slopes": np.round(potential.slopes, 15).tolist(),
            "intercepts": np.round(potential.intercepts, 15).tolist(),
            "sharpness": "inf" if potential.is_max_affine else potential.sharpness,
            "k": int(k),
            "mode": mode,
            "g": g_fingerprint,
        }
        hasher.update(json.dumps(payload, sort_keys=True).encode())
        return hasher.hexdigest()

    def get(self, key: str) -> Optional[np.ndarray]:
        """Cached log-weights for a key, or None on a miss."""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute('SELECT log_weights_json FROM hilb_cache WHERE key = ?', (key,))
                row = cursor.fetchone()
                if row:
                    return np.array(json.loads(row[0]), dtype=float)
                return None
        except (sqlite3.Error, ValueError) as e:
            logging.error(f"Error reading quadrature cache entry {key}: {e}")
            return None

    def put(self, key: str, k: int, mode: str, log_weights: Sequence[float], polytope_name: str = ""):
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute('''
                    INSERT OR REPLACE INTO hilb_cache
                    (key, k, mode, log_weights_json, created, polytope)
                    VALUES (?, ?, ?, ?, ?, ?)
                ''', (key, int(k), mode, json.dumps([float(x) for x in log_weights]), time.time(), polytope_name))
                conn.commit()
        except sqlite3.Error as e:
            logging.error(f"Error updating quadrature cache for {key}: {e}")

    def remove(self, key: str):
        try:
            with sqlite3.connect(self.db_path) as conn:
                conn.execute('DELETE FROM hilb_cache WHERE key = ?', (key,))
                conn.commit()
        except sqlite3.Error as e:
            logging.error(f"Error removing quadrature cache entry {key}: {e}")

    def clear_cache(self):
        """Clear all cached entries."""
        try:
            with sqlite3.connect(self.db_path) as conn:
                conn.execute('DELETE FROM hilb_cache')
                conn.commit()
                logging.info("Quadrature cache cleared")
        except sqlite3.Error as e:
            logging.error(f"Error clearing quadrature cache: {e}")

    def stats(self) -> Dict:
        """Entry count per (mode, k)."""
        try:
            with sqlite3.connect(self.db_path) as conn:
                cursor = conn.cursor()
                cursor.execute('SELECT mode, k, COUNT(*) FROM hilb_cache GROUP BY mode, k')
                per_level = {f"{mode}:{k}": count for mode, k, count in cursor.fetchall()}
                return {"entries": sum(per_level.values()), "per_level": per_level}
        except sqlite3.Error as e:
            logging.error(f"Error reading quadrature cache stats: {e}")
            return {"entries": 0, "per_level": {}}
