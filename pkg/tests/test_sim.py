import dataclasses
import math

import numpy as np
import pytest

from conftest import LANE_CHANGE
from dcplatoon.scenario import load_preset, parse_scenario, two_vehicle_spec
from dcplatoon.sim import (
    COOPERATE,
    EXECUTING,
    MERGED,
    NONE,
    CollisionError,
    PlatoonTopology,
    chain_topology,
    grid_values,
    run_scenario,
    run_sweep,
)
from dcplatoon.tracker import MpcConfig


def _platoon_yaml(n, v=20.0, gap=20.0, extra=""):
    rows = [f"  - {{id: 1, x: 0, y: 0, v: {v}, tau: 0.5}}"]
    rows += [f"  - {{id: {i}, gap: {gap}, y: 0, v: {v}, tau: 0.7}}" for i in range(2, n + 1)]
    return "duration: 10\nvehicles:\n" + "\n".join(rows) + "\n" + extra


def test_single_vehicle_cruises():
    res = run_scenario(parse_scenario(_platoon_yaml(1)))
    assert np.allclose(res.v, 20.0)
    assert np.allclose(res.x[:, 0], 20.0 * res.t)
    assert np.isnan(res.ex).all()
    assert res.metrics.t_steady == 0.0


def test_equilibrium_platoon_stays_put():
    res = run_scenario(parse_scenario(_platoon_yaml(8)))
    followers = res.ex[:, 1:]
    assert np.abs(followers).max() < 1e-9
    assert np.abs(res.ev[:, 1:]).max() < 1e-9
    assert np.allclose(res.v, 20.0)
    assert res.metrics.t_steady == 0.0
    assert res.metrics.eta == 0.0
    assert set(res.phase) == {NONE}


def test_chain_topology_orders_by_position():
    topo = chain_topology({1: 0.0, 2: 0.0, 3: 3.75, 4: 0.0}, {1: 50.0, 2: 10.0, 3: 0.0, 4: 30.0})
    assert topo.subsystems == ((1, 4), (4, 2))
    assert topo.leader_of() == {4: 1, 2: 4}


def test_topology_rejects_two_leaders():
    with pytest.raises(ValueError):
        PlatoonTopology(((1, 3), (2, 3)))


def test_collision_raises_with_partial_log():
    text = (
        "duration: 10\nvehicles:\n"
        "  - {id: 1, x: 0, y: 0, v: 10, tau: 0.5}\n"
        "  - {id: 2, x: -6, y: 0, v: 30, tau: 0.7}\n"
    )
    with pytest.raises(CollisionError) as info:
        run_scenario(parse_scenario(text))
    res = info.value.result
    assert res.collided
    assert len(res.t) < res.spec.n_steps
    assert res.x.shape[0] == len(res.t)
    assert res.min_gap <= 0


def test_runs_are_deterministic():
    spec = load_preset("fig12")
    a, b = run_scenario(spec), run_scenario(spec)
    for name in ("x", "v", "a", "u"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_disturbance_is_rejected_afterwards(preset_runs):
    res = preset_runs("fig12")
    assert res.metrics.t_steady is not None
    assert np.abs(res.ex[-1, 1:]).max() < 0.1


def test_scripted_leader_follows_its_profile(preset_runs):
    res = preset_runs("scenario4")
    tfv = res.column("v", 2)
    assert tfv[int(2.5 / res.Ts)] < tfv[0] - 4.0


def test_gate_timeout_is_reported():
    spec = dataclasses.replace(load_preset("scenario1"), duration=1.0)
    res = run_scenario(spec)
    assert res.t0 is None and res.te is None
    assert any("gate never satisfied" in d for d in res.diagnostics)
    assert set(res.phase) == {COOPERATE}


@pytest.mark.parametrize("name", LANE_CHANGE)
def test_lane_change_phase_sequence(preset_runs, name):
    res = preset_runs(name)
    seen = [p for i, p in enumerate(res.phase) if i == 0 or p != res.phase[i - 1]]
    assert seen[-2:] == [EXECUTING, MERGED]
    assert res.te is not None and res.te > res.t0
    sv = res.column("y", 5)
    assert sv[-1] == pytest.approx(-1.875)


@pytest.mark.parametrize("name", LANE_CHANGE)
def test_every_follower_has_one_leader_each_tick(preset_runs, name):
    res = preset_runs(name)
    # four followers of the single head vehicle, before and after the merge
    counts = np.isfinite(res.ex).sum(axis=1)
    assert (counts == len(res.ids) - 1).all()


@pytest.mark.parametrize("name", LANE_CHANGE)
def test_mpc_respects_bounds(preset_runs, name):
    cfg = MpcConfig()
    res = preset_runs(name)
    assert res.mpc_commands
    tol = 1e-7
    for _, v0, d0, v1, d1 in res.mpc_commands:
        assert cfg.U_min[0] - tol <= v1 <= cfg.U_max[0] + tol
        assert cfg.U_min[1] - tol <= d1 <= cfg.U_max[1] + tol
        assert cfg.dU_min[0] - tol <= v1 - v0 <= cfg.dU_max[0] + tol
        assert cfg.dU_min[1] - tol <= d1 - d0 <= cfg.dU_max[1] + tol


@pytest.mark.parametrize("name", LANE_CHANGE)
def test_no_collision_and_positive_gaps(preset_runs, name):
    res = preset_runs(name)
    assert not res.collided and res.min_gap > 0


def test_grid_values():
    assert grid_values(-10, 10, 1) == [float(i) for i in range(-10, 11)]
    assert grid_values(0, 0.3, 0.1) == [0.0, 0.1, 0.2, 0.3]
    assert grid_values(1, 1, 0.5) == [1.0]
    for bad in ((0, 1, 0), (1, 0, 1), (0, math.inf, 1)):
        with pytest.raises(ValueError):
            grid_values(*bad)


def test_sweep_rows_keep_grid_order():
    rows = run_sweep([-2.0, 2.0], [-1.0, 0.0, 1.0], base={"duration": 20})
    assert [(r.ex, r.ev) for r in rows] == [(ex, ev) for ex in (-2.0, 2.0) for ev in (-1.0, 0.0, 1.0)]
    assert all(r.converged for r in rows)
    parallel = run_sweep([-2.0, 2.0], [-1.0, 0.0, 1.0], base={"duration": 20}, workers=2)
    assert parallel == rows


def test_sweep_point_matches_direct_run():
    row = run_sweep([3.0], [-2.0])[0]
    res = run_scenario(two_vehicle_spec(3.0, -2.0))
    assert row.t_steady == res.metrics.t_steady
    assert row.eta == res.metrics.eta
