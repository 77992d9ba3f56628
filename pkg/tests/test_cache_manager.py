import sqlite3

import numpy as np
import pytest

from cache_manager import QuadratureCache
from measures import GWeight
from polytope import interval
from potential import reference_potential


@pytest.fixture
def cache(tmp_path):
    return QuadratureCache(str(tmp_path / "cache.db"))


def test_put_get_round_trip(cache):
    cache.put("abc", 3, "volume", [0.5, -1.25, float("-inf")], polytope_name="p1")
    stored = cache.get("abc")
    assert stored[0] == 0.5
    assert stored[1] == -1.25
    assert stored[2] == -np.inf


def test_miss_returns_none(cache):
    assert cache.get("missing") is None


def test_make_key_depends_on_level_and_mode():
    p1 = interval(-1, 1)
    phi = reference_potential(p1)
    key = QuadratureCache.make_key(p1, phi, 2, "volume", "const")
    assert key == QuadratureCache.make_key(p1, phi, 2, "volume", "const")
    assert key != QuadratureCache.make_key(p1, phi, 3, "volume", "const")
    assert key != QuadratureCache.make_key(p1, phi, 2, "canonical", "const")
    assert key != QuadratureCache.make_key(interval(-1, 2), phi, 2, "volume", "const")


def test_replace_keeps_one_entry(cache):
    cache.put("abc", 2, "volume", [1.0])
    cache.put("abc", 2, "volume", [2.0])
    assert cache.get("abc").tolist() == [2.0]
    assert cache.stats() == {"entries": 1, "per_level": {"volume:2": 1}}


def test_stats_remove_and_clear(cache):
    cache.put("a", 2, "volume", [1.0])
    cache.put("b", 2, "volume", [1.0])
    cache.put("c", 4, "canonical", [1.0])
    assert cache.stats()["per_level"] == {"volume:2": 2, "canonical:4": 1}

    cache.remove("a")
    assert cache.get("a") is None
    assert cache.stats()["entries"] == 2

    cache.clear_cache()
    assert cache.stats() == {"entries": 0, "per_level": {}}


def test_migrates_table_without_polytope_column(tmp_path):
    path = str(tmp_path / "old.db")
    with sqlite3.connect(path) as conn:
        conn.execute('''
            CREATE TABLE hilb_cache (
                key TEXT PRIMARY KEY,
                k INTEGER NOT NULL,
                mode TEXT NOT NULL,
                log_weights_json TEXT NOT NULL,
                created REAL NOT NULL
            )
        ''')
        conn.execute("INSERT INTO hilb_cache VALUES ('old', 1, 'volume', '[0.0]', 0.0)")
        conn.commit()

    cache = QuadratureCache(path)
    with sqlite3.connect(path) as conn:
        columns = [row[1] for row in conn.execute("PRAGMA table_info(hilb_cache)")]
    assert "polytope" in columns
    assert cache.get("old").tolist() == [0.0]
    cache.put("new", 1, "volume", [1.0], polytope_name="p1")
    assert cache.stats()["entries"] == 2


def test_fresh_database_has_polytope_column(cache):
    with sqlite3.connect(cache.db_path) as conn:
        columns = [row[1] for row in conn.execute("PRAGMA table_info(hilb_cache)")]
    assert columns == ["key", "k", "mode", "polytope", "log_weights_json", "created"]


def test_make_key_depends_on_tabulated_weight_values():
    p1 = interval(-1, 1)
    phi = reference_potential(p1)
    axes = [np.linspace(-1.0, 1.0, 5)]
    flat = GWeight.table(axes, np.ones(5))
    tilted = GWeight.table(axes, np.linspace(0.5, 1.5, 5))
    same = GWeight.table(axes, np.ones(5))
    assert flat.fingerprint() != tilted.fingerprint()
    assert flat.fingerprint() == same.fingerprint()
    key = QuadratureCache.make_key(p1, phi, 2, "volume", flat.fingerprint())
    assert key != QuadratureCache.make_key(p1, phi, 2, "volume", tilted.fingerprint())
    assert key == QuadratureCache.make_key(p1, phi, 2, "volume", same.fingerprint())
