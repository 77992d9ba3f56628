# config.py

import os
import json
import logging
from dotenv import load_dotenv

# Find the .env file in the same directory as the script
dotenv_path = os.path.join(os.path.dirname(__file__), '.env')
load_dotenv(dotenv_path=dotenv_path)

# --- Load configuration from environment variables ---
LOG_FILE = os.getenv("LOG_FILE_PATH", os.path.join(os.path.dirname(__file__), 'toric_ma.log'))
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "output")
CACHE_DB_PATH = os.getenv("CACHE_DB_PATH", os.path.join(os.path.dirname(__file__), 'quadrature_cache.db'))

# Path to the JSON file holding the numeric defaults
SETTINGS_FILE = os.getenv("TORIC_SETTINGS_FILE", os.path.join(os.path.dirname(__file__), 'settings.json'))

DEFAULT_SETTINGS = {
    "version": "1.0",
    # quadrature on R^n
    "quadrature_rtol": 1e-10,
    "quadrature_window": 40.0,
    "quadrature_min_level": 2,
    "quadrature_max_level": 6,
    "quadrature_order": 8,
    "quadrature_strict": False,
    # energy path integral
    "gauss_nodes": 32,
    # lattice enumeration
    "lattice_capacity": 2000000,
    # exp-linear integration
    "series_gap": 1e-8,
    # transport
    "transport_tol": 1e-10,
    "transport_max_iter": 100,
    "transport_max_halvings": 3,
    # Picard soliton solver
    "picard_damping": 0.5,
    "picard_tol": 1e-6,
    "picard_max_iter": 200,
    "picard_atoms": 200,
    "picard_window": 14.0,
    # Donaldson iteration
    "donaldson_tol": 1e-10,
    "donaldson_max_steps": 2000,
    "donaldson_strict_ding": False,
    "hilb_window_pad": 10.0,
    # soliton field Newton
    "newton_tol": 1e-12,
    "newton_max_iter": 60,
    # soliton residual window and level ladder
    "soliton_window": 2.0,
    "soliton_k_ladder": [4, 8, 16],
    # execution
    "max_workers": None,
    "use_cache": False,
}


# Parsed settings keyed by file modification time; numeric kernels read
# settings on every call.
_settings_cache = {"mtime": None, "settings": None}


# --- Settings Management ---
def load_settings():
    """Loads settings from the JSON file with default fallbacks."""
    if not os.path.exists(SETTINGS_FILE):
        save_settings(DEFAULT_SETTINGS)
        return dict(DEFAULT_SETTINGS)

    mtime = os.path.getmtime(SETTINGS_FILE)
    if _settings_cache["mtime"] == mtime:
        return dict(_settings_cache["settings"])

    try:
        with open(SETTINGS_FILE, 'r') as f:
            settings = json.load(f)
            # Merge with defaults to ensure all required settings exist
            merged_settings = {**DEFAULT_SETTINGS, **settings}
    except (IOError, json.JSONDecodeError) as e:
        logging.error(f"Error loading settings file: {e}")
        return dict(DEFAULT_SETTINGS)

    _settings_cache["mtime"] = mtime
    _settings_cache["settings"] = merged_settings
    return dict(merged_settings)


def save_settings(settings):
    """Saves settings to the JSON file."""
    try:
        with open(SETTINGS_FILE, 'w') as f:
            json.dump(settings, f, indent=4)
        _settings_cache["mtime"] = None
        logging.info("Settings saved successfully")
    except IOError as e:
        logging.error(f"Error saving settings file: {e}")
        raise


def get_setting(name):
    """Convenience function returning a single setting."""
    settings = load_settings()
    return settings.get(name, DEFAULT_SETTINGS.get(name))


def get_max_workers():
    """Worker count for thread pools; falls back to the CPU count."""
    workers = get_setting("max_workers")
    return workers or os.cpu_count() or 4
