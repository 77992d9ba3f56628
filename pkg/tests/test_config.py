import json

import pytest

import config


@pytest.fixture
def settings_file(tmp_path, monkeypatch):
    path = tmp_path / "settings.json"
    monkeypatch.setattr(config, "SETTINGS_FILE", str(path))
    monkeypatch.setattr(config, "_settings_cache", {"mtime": None, "settings": None})
    return path


def test_missing_file_is_created_with_defaults(settings_file):
    settings = config.load_settings()
    assert settings == config.DEFAULT_SETTINGS
    assert settings_file.exists()
    assert json.loads(settings_file.read_text())["gauss_nodes"] == 32


def test_file_values_merge_over_defaults(settings_file):
    settings_file.write_text(json.dumps({"gauss_nodes": 16, "extra": "kept"}))
    settings = config.load_settings()
    assert settings["gauss_nodes"] == 16
    assert settings["extra"] == "kept"
    assert settings["transport_tol"] == config.DEFAULT_SETTINGS["transport_tol"]
    assert config.get_setting("gauss_nodes") == 16


def test_invalid_json_falls_back_to_defaults(settings_file):
    settings_file.write_text("{\"gauss_nodes\": ")
    assert config.load_settings() == config.DEFAULT_SETTINGS


def test_loaded_settings_are_copies(settings_file):
    settings_file.write_text(json.dumps({"picard_damping": 0.25}))
    first = config.load_settings()
    first["picard_damping"] = 0.9
    assert config.load_settings()["picard_damping"] == 0.25


def test_save_settings_invalidates_cache(settings_file):
    config.save_settings({"picard_damping": 0.25})
    assert config.get_setting("picard_damping") == 0.25
    config.save_settings({"picard_damping": 0.75})
    assert config.get_setting("picard_damping") == 0.75


def test_unknown_setting_is_none(settings_file):
    assert config.get_setting("no_such_setting") is None


def test_max_workers_falls_back_to_cpu_count(settings_file, monkeypatch):
    settings_file.write_text(json.dumps({"max_workers": None}))
    monkeypatch.setattr(config.os, "cpu_count", lambda: 3)
    assert config.get_max_workers() == 3
    monkeypatch.setattr(config.os, "cpu_count", lambda: None)
    assert config.get_max_workers() == 4


def test_max_workers_from_settings(settings_file):
    settings_file.write_text(json.dumps({"max_workers": 2}))
    assert config.get_max_workers() == 2
