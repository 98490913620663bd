import pytest

from dcplatoon.baseline import FROZEN_GAINS, SinglePidGains, combined_error, single_pid_step, tune_single_pid
from dcplatoon.controller import SpacingPolicy, SubsystemMeasurement
from dcplatoon.dynamics import Limits


def _m(gap, v_l, v_f):
    return SubsystemMeasurement(d=gap, v_leader=v_l, v_follower=v_f)


def test_combined_error_hand_value():
    policy = SpacingPolicy(d0=4.0, ht=0.8)
    # gap 30, desired 4 + 0.8 * 20 = 20, so ex = 10 and speed error 2
    assert combined_error(_m(30.0, 22.0, 20.0), SinglePidGains(1, 0, 0.5), policy) == pytest.approx(11.0)


def test_step_clamps_and_remembers():
    policy = SpacingPolicy()
    u, e = single_pid_step(_m(30.0, 20.0, 20.0), SinglePidGains(1, 1, 0), policy, 0.0, Limits(), 0.02)
    assert u == 3.0
    assert e == pytest.approx(10.0)


def test_negative_gains_rejected():
    with pytest.raises(ValueError):
        SinglePidGains(-1, 0, 0)


def test_frozen_gains_reproduce_the_tuning():
    gains, score = tune_single_pid()
    assert gains == FROZEN_GAINS
    assert score == pytest.approx(3.863, abs=1e-3)


def test_both_arms_converge_on_the_ramp_scenario(preset_runs, baseline_runs):
    assert preset_runs("fig11").metrics.t_steady is not None
    assert baseline_runs("fig11").metrics.t_steady is not None
