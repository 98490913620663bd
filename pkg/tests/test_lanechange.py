import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcplatoon.controller import GROUP_2, SpacingPolicy, SubsystemMeasurement, primed_state
from dcplatoon.dynamics import Limits, LongitudinalState, VehicleParams
from dcplatoon.lanechange import (
    LaneChangeGate,
    comfort_feasible,
    eval_reference,
    feasible_ap_domain,
    gate_check,
    maneuver_length,
    omega_upper_bound,
    order_platoon,
    plan_trajectory,
    replan_step,
)

L = 2.7


def test_order_platoon():
    assert order_platoon([100]) == [1]
    assert order_platoon([50, 200, 120]) == [2, 3, 1]
    assert order_platoon([300, 200, 100]) == [1, 2, 3]
    assert order_platoon([10, 10, 5, 10], ids=[9, 4, 1, 7]) == [4, 7, 9, 1]
    with pytest.raises(ValueError):
        order_platoon([1, 2], ids=[1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=12))
def test_order_platoon_is_a_stable_permutation(distances):
    order = order_platoon(distances)
    assert sorted(order) == list(range(1, len(distances) + 1))
    keys = [(-distances[i - 1], i) for i in order]
    assert keys == sorted(keys)


def test_gate():
    assert gate_check(LaneChangeGate(d_sv=20, s_sv=20, d_trv=5, d0=4))
    assert not gate_check(LaneChangeGate(d_sv=20, s_sv=20, d_trv=3.9, d0=4))
    assert not gate_check(LaneChangeGate(d_sv=19.5, s_sv=20, d_trv=10, d0=4, epsilon_gate=0.1))
    assert gate_check(LaneChangeGate(d_sv=19.95, s_sv=20, d_trv=4, d0=4, epsilon_gate=0.1))


def test_maneuver_length_hand_values():
    assert maneuver_length(20, 3.75, 0.1) == pytest.approx(20 * math.sqrt(75), abs=1e-9)
    assert maneuver_length(20, -3.75, 0.1) == pytest.approx(173.205, abs=1e-3)
    assert maneuver_length(20, 3.75, 0.122) == pytest.approx(20 * math.sqrt(7.5 / 0.122), rel=1e-12)
    assert maneuver_length(20, 3.75, 0.122) == pytest.approx(156.80, abs=0.05)


def test_plan_validation():
    with pytest.raises(ValueError):
        plan_trajectory(0, 1.875, -1.875, 20, 0.0)
    with pytest.raises(ValueError):
        plan_trajectory(0, 1.875, 1.875, 20, 0.1)
    plan = plan_trajectory(0, 1.875, -1.875, 20, 0.1)
    with pytest.raises(ValueError):
        eval_reference(plan, -1.0, L)
    with pytest.raises(ValueError):
        eval_reference(plan, plan.x_end + 1.0, L)


plans = st.builds(
    plan_trajectory,
    x0=st.floats(-500, 500),
    y0=st.floats(-5, 5),
    y_tfv0=st.sampled_from([-1.875, 1.875, 5.625, -5.625]),
    v=st.floats(1, 40),
    a_p=st.floats(0.01, 1.0),
).filter(lambda p: p.yd != 0)


@settings(max_examples=200, deadline=None)
@given(plans)
def test_boundary_conditions(plan):
    start = eval_reference(plan, plan.x0, L)
    end = eval_reference(plan, plan.x_end, L)
    assert abs(start.y_r - plan.y0) <= 1e-12
    assert start.slope == 0.0 and start.curvature2 == 0.0 and start.phi_r == 0.0 and start.delta_fr == 0.0
    assert abs(end.y_r - (plan.y0 + plan.yd)) <= 1e-12 * max(1.0, abs(plan.y0 + plan.yd))
    assert abs(end.slope) <= 1e-12
    assert abs(end.curvature2) <= 1e-12


def _slope(plan, x):
    # independent form: derivative of yd/(2 pi) * (theta - sin theta) with theta = 2 pi (x - x0) / M
    return plan.yd / plan.M * (1 - math.cos(2 * math.pi * (x - plan.x0) / plan.M))


@settings(max_examples=50, deadline=None)
@given(plans)
def test_curvature_is_the_derivative_of_the_slope(plan):
    xs = np.linspace(plan.x0, plan.x_end, 1000)[1:-1]
    h = plan.M * 1e-5
    worst = 0.0
    scale = max(abs(eval_reference(plan, plan.x0 + plan.M / 4, L).curvature2), 1e-300)
    for x in xs:
        fd = (_slope(plan, x + h) - _slope(plan, x - h)) / (2 * h)
        c2 = eval_reference(plan, float(x), L).curvature2
        worst = max(worst, abs(fd - c2) / scale)
    assert worst < 1e-6


def test_slope_is_derivative_of_position():
    plan = plan_trajectory(12.0, 1.875, -1.875, 20, 0.1)
    h = 1e-4
    for x in np.linspace(plan.x0 + 1, plan.x_end - 1, 100):
        fd = (eval_reference(plan, x + h, L).y_r - eval_reference(plan, x - h, L).y_r) / (2 * h)
        assert fd == pytest.approx(eval_reference(plan, x, L).slope, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 40), st.floats(0.01, 1.0), st.sampled_from([-3.75, 3.75, 7.5]))
def test_midpoint_slope(v, a_p, yd):
    plan = plan_trajectory(0.0, 0.0, yd, v, a_p)
    mid = eval_reference(plan, plan.M / 2, L)
    assert mid.slope == 2 * plan.yd / plan.M


def test_midpoint_hand_values():
    plan = plan_trajectory(0.0, 1.875, -1.875, 20, 0.1)
    mid = eval_reference(plan, plan.M / 2, L)
    assert mid.slope == pytest.approx(-0.043301, abs=1e-6)
    assert mid.phi_r == pytest.approx(-0.043274, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(plans, st.floats(0, 1))
def test_kappa_bounded_by_curvature2(plan, s):
    r = eval_reference(plan, plan.x0 + s * plan.M, L)
    assert abs(r.kappa) <= abs(r.curvature2) + 1e-18


@pytest.mark.parametrize("v,table", [(20, 0.0212), (25, 0.0170), (30, 0.0142)])
def test_yaw_rate_bound(v, table):
    assert omega_upper_bound(v) == pytest.approx(0.425 / v, rel=1e-12)
    assert abs(omega_upper_bound(v) - table) <= 5e-4


def test_comfort_check_brackets_the_bound():
    ap = feasible_ap_domain(20)
    assert ap > 0
    assert comfort_feasible(plan_trajectory(0, 0, 3.75, 20, ap)).feasible
    assert not comfort_feasible(plan_trajectory(0, 0, 3.75, 20, ap + 2e-4)).feasible


def test_feasible_ap_non_increasing_in_speed():
    bounds = [feasible_ap_domain(v) for v in (20, 25, 30)]
    assert bounds[0] >= bounds[1] >= bounds[2]


def test_feasible_ap_rejects_bad_speed():
    with pytest.raises(ValueError):
        feasible_ap_domain(0)


def test_rescaled_plan_keeps_the_anchor_point():
    plan = plan_trajectory(10.0, 1.875, -1.875, 20, 0.1)
    x = plan.x0 + 0.3 * plan.M
    new = plan.rescaled(18.0, x)
    assert new.progress(x) == pytest.approx(0.3)
    assert eval_reference(new, x, L).y_r == pytest.approx(eval_reference(plan, x, L).y_r, abs=1e-12)
    assert new.M == pytest.approx(maneuver_length(18.0, -3.75, 0.1))


def _sv_tfv(v_sv, v_tfv, gap):
    sv = LongitudinalState(x=0.0, v=v_sv)
    tfv = LongitudinalState(x=gap + 5.0, v=v_tfv)
    return sv, tfv


def test_replan_at_equilibrium_only_advances_the_anchor():
    pol = SpacingPolicy()
    lim = Limits()
    params = VehicleParams(tau=0.7)
    sv, tfv = _sv_tfv(20.0, 20.0, pol.d0 + pol.ht * 20.0)
    m = SubsystemMeasurement(d=tfv.x - sv.x - 5.0, v_leader=tfv.v, v_follower=sv.v)
    cs = primed_state(m, GROUP_2, pol, dt=0.02)
    plan = plan_trajectory(sv.x, 1.875, -1.875, sv.v, 0.1)
    for _ in range(50):
        r = replan_step(plan, sv, params, tfv, 5.0, GROUP_2, pol, cs, lim, 0.02)
        assert r.u == pytest.approx(0.0, abs=1e-9)
        assert r.plan.M == pytest.approx(plan.M, rel=1e-12)
        assert r.plan.yd == plan.yd
        assert r.plan.x0 == pytest.approx(plan.x0, abs=1e-9)
        sv, plan, cs = r.state, r.plan, r.ctrl_state
        tfv = LongitudinalState(x=tfv.x + tfv.v * 0.02, v=tfv.v)


def test_replan_shrinks_when_the_tfv_brakes():
    pol = SpacingPolicy()
    lim = Limits()
    params = VehicleParams(tau=0.7)
    sv, tfv = _sv_tfv(25.0, 25.0, pol.d0 + pol.ht * 25.0)
    m = SubsystemMeasurement(d=tfv.x - sv.x - 5.0, v_leader=tfv.v, v_follower=sv.v)
    cs = primed_state(m, GROUP_2, pol, dt=0.02)
    plan = plan_trajectory(sv.x, 1.875, -1.875, sv.v, 0.1)
    lengths = []
    for _ in range(100):
        r = replan_step(plan, sv, params, tfv, 5.0, GROUP_2, pol, cs, lim, 0.02)
        sv, plan, cs = r.state, r.plan, r.ctrl_state
        lengths.append(plan.M)
        tfv = LongitudinalState(x=tfv.x + (tfv.v - 0.04) * 0.02, v=tfv.v - 0.04)
    assert all(b <= a for a, b in zip(lengths, lengths[1:]))
    assert lengths[-1] < lengths[0]
