"""
Configuration loading. Values come from config.ini (path overridable with
POLAR_CONFIG) with built-in defaults for every key, plus a few environment
variables loaded through python-dotenv.
"""

import os
import configparser
from functools import lru_cache

from dotenv import load_dotenv

DEFAULTS = {
    "MAIN": {
        "version": "0.1.0",
        "seed": "0",
        "workers": "1",
        "output_format": "json",
    },
    "SEARCH": {
        "grid_points": "10000",
        "refine_tol": "1e-10",
        "endpoint": "1e-12",
        "max_recursion_cost": "4096",
        "cache_grid_points": "100000",
    },
    "PROFILE": {
        "materialize_cap": "10000000",
        "stream_cap": "100000000",
        "chunk_size": "1048576",
    },
    "KERNEL": {
        "subset_cap": "20",
    },
    "ENSEMBLE": {
        "cache_dir": ".cache/rho",
        "gbar_grid_points": "10000",
        "concavity_tol": "1e-9",
        "depth_cap": "8",
    },
    "MONTECARLO": {
        "block_size": "10000",
    },
    "INEQUALITIES": {
        "points": "10000",
        "slack_tol": "1e-12",
    },
}

@lru_cache(maxsize=1)
def get_config() -> configparser.ConfigParser:
    """Load config.ini once; missing sections or keys fall back to DEFAULTS."""
    load_dotenv()
    config = configparser.ConfigParser()
    config.read_dict(DEFAULTS)
    path = os.getenv("POLAR_CONFIG", "config.ini")
    if os.path.exists(path):
        config.read(path)
    return config

def get_int(section: str, key: str) -> int:
    return get_config().getint(section, key)

def get_float(section: str, key: str) -> float:
    return get_config().getfloat(section, key)

def get_str(section: str, key: str) -> str:
    return get_config().get(section, key)

def default_workers() -> int:
    """Worker count from POLAR_WORKERS, else config.ini [MAIN] workers."""
    load_dotenv()
    env = os.getenv("POLAR_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, get_int("MAIN", "workers"))

def version() -> str:
    return get_str("MAIN", "version")
