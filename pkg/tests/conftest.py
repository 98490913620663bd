import pytest

from dcplatoon.scenario import load_preset
from dcplatoon.sim import run_scenario, single_pid_baseline

LANE_CHANGE = [f"scenario{i}" for i in range(1, 6)]


@pytest.fixture(scope="session")
def preset_runs():
    """Lazily computed DCPID runs of shipped presets, shared across test modules."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_scenario(load_preset(name))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def baseline_runs():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = single_pid_baseline(load_preset(name))
        return cache[name]

    return get
