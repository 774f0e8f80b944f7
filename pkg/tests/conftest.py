"""Shared fixtures: small, fast scenarios built through the real config path."""
from __future__ import annotations

import copy

import pytest
import yaml

from shieldsim.core.config import load_config

SMALL = {
    "victim": {"n_bits": 16},
    "experiment": {"seed": 7, "trials": 3, "n_max": 40, "traces": 4},
    "dse": {"trials": 8, "effort_trials": 1, "effort_n_max": 8},
}


def deep_update(base: dict, changes: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_update(out[key], value)
        else:
            out[key] = value
    return out


@pytest.fixture
def small_raw():
    """Raw mapping for a 16-bit key scenario; tests tweak copies of it."""
    return copy.deepcopy(SMALL)


@pytest.fixture
def make_config():
    def _make(**sections):
        return load_config(deep_update(SMALL, sections))
    return _make


@pytest.fixture
def small_cfg(make_config):
    return make_config()


@pytest.fixture
def write_config(tmp_path):
    """Write SMALL (plus overrides) to a YAML file and return its path."""
    def _write(name: str = "scenario.yaml", **sections):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(deep_update(SMALL, sections)), encoding="utf-8")
        return path
    return _write


@pytest.fixture
def quiet_cfg(make_config):
    """No jitter: every count is the closed form plus the phase dither."""
    return make_config(monitor={"cycle_jitter": 0.0})
