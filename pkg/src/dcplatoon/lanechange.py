"""Cooperative lane change: ordering, trigger gate and sine-curve planning.

The lateral path of the changing vehicle (SV) is

    y_r(x) = y0 + yd / (2 pi) * (theta - sin theta),  theta = 2 pi (x - x0) / M

with ``M = v * sqrt(2 |yd| / a_p)``.  The SV's speed comes from the cascade
controller acting on the SV / front-target-vehicle (TFV) pair, and the plan is
refreshed with that speed every tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import (
    CascadeGains,
    ControllerState,
    SpacingPolicy,
    SubsystemMeasurement,
    control_step,
)
from .dynamics import Limits, LongitudinalState, VehicleParams, clamp, step_longitudinal

#: Lateral acceleration ceiling for ride comfort (m/s^2).
A_Y_MAX = 0.5
#: Fraction of the ceiling used for the yaw-rate bound.
COMFORT_FACTOR = 0.85
#: Reference yaw-rate bounds and a_p upper limits, keyed by speed (m/s).
REFERENCE_COMFORT_BOUNDS = {20.0: (0.0212, 0.122), 25.0: (0.0170, 0.114), 30.0: (0.0142, 0.106)}
#: Lane width used by the shipped scenarios (lane centres at +-1.875 m).
LANE_OFFSET = 3.75


def order_platoon(departure_distances, ids=None) -> list:
    """Platoon order, head first, from each vehicle's distance to its exit.

    The vehicle leaving last drives at the head; ties go to the lower id.
    ``ids`` defaults to 1-based positions in the input.
    """
    distances = list(departure_distances)
    if ids is None:
        ids = list(range(1, len(distances) + 1))
    if len(ids) != len(distances):
        raise ValueError("ids and departure_distances differ in length")
    if any(d < 0 for d in distances):
        raise ValueError("departure distances must be non-negative")
    return [i for _, i in sorted(zip(distances, ids), key=lambda p: (-p[0], p[1]))]


@dataclass(frozen=True)
class LaneChangeGate:
    d_sv: float
    s_sv: float
    d_trv: float
    d0: float
    epsilon_gate: float = 0.1

    def __post_init__(self):
        if not self.epsilon_gate > 0:
            raise ValueError("epsilon_gate must be positive")


def gate_check(g: LaneChangeGate) -> bool:
    """True when the SV sits at its desired spacing and the rear gap is safe."""
    return abs(g.d_sv - g.s_sv) <= g.epsilon_gate and g.d_trv >= g.d0


@dataclass(frozen=True)
class ReferencePoint:
    x_r: float
    y_r: float
    slope: float
    curvature2: float
    kappa: float
    phi_r: float
    delta_fr: float


@dataclass(frozen=True)
class TrajectoryPlan:
    x0: float
    y0: float
    yd: float
    v_plan: float
    a_p: float
    M: float

    def __post_init__(self):
        if self.yd == 0:
            raise ValueError("lateral offset must be non-zero")
        if not self.a_p > 0:
            raise ValueError(f"a_p must be positive, got {self.a_p!r}")
        if not self.v_plan > 0:
            raise ValueError(f"planning speed must be positive, got {self.v_plan!r}")

    @property
    def x_end(self) -> float:
        return self.x0 + self.M

    @property
    def y_end(self) -> float:
        return self.y0 + self.yd

    def progress(self, x: float) -> float:
        """Completed fraction of the manoeuvre at longitudinal position ``x``."""
        return min(max((x - self.x0) / self.M, 0.0), 1.0)

    def rescaled(self, v: float, x_anchor: float) -> "TrajectoryPlan":
        """Same manoeuvre re-planned for speed ``v``.

        The new plan is anchored at ``x_anchor`` with the completed fraction
        unchanged, so the reference point at the anchor does not move.
        """
        s = self.progress(x_anchor)
        M = maneuver_length(v, self.yd, self.a_p)
        return TrajectoryPlan(
            x0=x_anchor - s * M, y0=self.y0, yd=self.yd, v_plan=v, a_p=self.a_p, M=M
        )


def maneuver_length(v: float, yd: float, a_p: float) -> float:
    return v * math.sqrt(2.0 * abs(yd) / a_p)


def plan_trajectory(x0: float, y0: float, y_tfv0: float, v: float, a_p: float) -> TrajectoryPlan:
    if not a_p > 0:
        raise ValueError(f"a_p must be positive, got {a_p!r}")
    if not v > 0:
        raise ValueError(f"speed must be positive, got {v!r}")
    yd = y_tfv0 - y0
    if yd == 0:
        raise ValueError("SV and TFV are on the same lateral position")
    return TrajectoryPlan(x0=x0, y0=y0, yd=yd, v_plan=v, a_p=a_p, M=maneuver_length(v, yd, a_p))


def _shape(plan: TrajectoryPlan, x):
    theta = 2.0 * np.pi * (np.asarray(x, dtype=float) - plan.x0) / plan.M
    y = plan.y0 + plan.yd / (2.0 * np.pi) * (theta - np.sin(theta))
    slope = plan.yd / plan.M * (1.0 - np.cos(theta))
    curv2 = math.copysign(1.0, plan.yd) * np.pi * plan.a_p / plan.v_plan**2 * np.sin(theta)
    kappa = curv2 / (1.0 + slope**2) ** 1.5
    return y, slope, curv2, kappa


def eval_reference(plan: TrajectoryPlan, x_r: float, wheelbase: float) -> ReferencePoint:
    """Desired pose and steering at ``x_r`` on the plan."""
    if not plan.x0 <= x_r <= plan.x_end:
        raise ValueError(f"x_r={x_r} outside the plan domain [{plan.x0}, {plan.x_end}]")
    y, slope, curv2, kappa = (float(v) for v in _shape(plan, x_r))
    return ReferencePoint(
        x_r=x_r,
        y_r=y,
        slope=slope,
        curvature2=curv2,
        kappa=kappa,
        phi_r=math.atan(slope),
        delta_fr=math.atan(wheelbase * kappa),
    )


@dataclass(frozen=True)
class ComfortCheck:
    omega_max: float
    omega_upper: float
    feasible: bool


def omega_upper_bound(v: float) -> float:
    return COMFORT_FACTOR * A_Y_MAX / v


def comfort_feasible(plan: TrajectoryPlan, n_samples: int = 2000) -> ComfortCheck:
    """Yaw-rate comfort test for a constant-speed traversal of the plan.

    Lateral acceleration is ``v^2 * kappa`` and the yaw rate ``a_y / v``,
    sampled at ``n_samples`` uniform points over the manoeuvre.
    """
    x = np.linspace(plan.x0, plan.x_end, n_samples)
    _, _, _, kappa = _shape(plan, x)
    omega_max = float(np.max(np.abs(plan.v_plan * kappa)))
    upper = omega_upper_bound(plan.v_plan)
    return ComfortCheck(omega_max=omega_max, omega_upper=upper, feasible=omega_max <= upper)


def feasible_ap_domain(
    v: float, yd: float = LANE_OFFSET, ap_grid=None, n_samples: int = 2000
) -> float:
    """Largest a_p on the grid whose plan at speed ``v`` passes the comfort test.

    Returns 0.0 when no grid value is feasible.  The default grid runs from
    1e-4 to 0.3 m/s^2 in steps of 1e-4.
    """
    if not v > 0:
        raise ValueError(f"speed must be positive, got {v!r}")
    if ap_grid is None:
        ap_grid = np.arange(1, 3001) * 1e-4
    best = 0.0
    for a_p in np.asarray(ap_grid, dtype=float):
        plan = TrajectoryPlan(0.0, 0.0, yd, v, float(a_p), maneuver_length(v, yd, float(a_p)))
        if comfort_feasible(plan, n_samples).feasible:
            best = max(best, float(a_p))
    return best


@dataclass(frozen=True)
class ReplanResult:
    state: LongitudinalState
    u: float
    plan: TrajectoryPlan
    ctrl_state: ControllerState


def replan_step(
    plan: TrajectoryPlan,
    sv: LongitudinalState,
    sv_params: VehicleParams,
    tfv: LongitudinalState,
    tfv_length: float,
    gains: CascadeGains,
    policy: SpacingPolicy,
    ctrl_state: ControllerState,
    limits: Limits,
    Ts: float,
    disturbance: float = 0.0,
) -> ReplanResult:
    """One tick of the dynamic re-planning loop.

    The SV/TFV cascade controller sets the SV acceleration, the longitudinal
    model yields the new speed, and the plan is refreshed for that speed,
    anchored at the SV's current position.  ``disturbance`` is added to the
    command before the final clamp.
    """
    m = SubsystemMeasurement(d=tfv.x - sv.x - tfv_length, v_leader=tfv.v, v_follower=sv.v)
    u, ctrl_state = control_step(m, gains, policy, ctrl_state, limits, dt=Ts)
    if disturbance:
        u = clamp(u + disturbance, limits.u_min, limits.u_max)
    nxt = step_longitudinal(sv, u, sv_params, limits, Ts)
    return ReplanResult(state=nxt, u=u, plan=plan.rescaled(nxt.v, sv.x), ctrl_state=ctrl_state)
