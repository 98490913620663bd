"""Distributed cascade PID (DCPID) longitudinal controller.

Every leader/follower pair on a lane is a subsystem.  The follower runs a
two-loop controller: the outer loop turns the spacing error into a
velocity-domain setpoint, the inner loop compares that setpoint with the
relative speed and produces the desired acceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .dynamics import Limits, clamp


@dataclass(frozen=True)
class CascadeGains:
    """Outer-loop (spacing) and inner-loop (speed) PID gains."""

    kpx: float
    kix: float
    kdx: float
    kpv: float
    kiv: float
    kdv: float

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not math.isfinite(value):
                raise ValueError(f"gain {name} must be finite")
        if self.kpx < 0 or self.kpv < 0:
            raise ValueError("proportional gains must be non-negative")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.kpx, self.kix, self.kdx, self.kpv, self.kiv, self.kdv)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(("kpx", "kix", "kdx", "kpv", "kiv", "kdv"), self.as_tuple()))

    @classmethod
    def from_sequence(cls, values) -> "CascadeGains":
        values = [float(v) for v in values]
        if len(values) != 6:
            raise ValueError(f"expected 6 gains (kpx,kix,kdx,kpv,kiv,kdv), got {len(values)}")
        return cls(*values)


#: Gains for the small-disturbance case.
GROUP_1 = CascadeGains(300.0, 0.0, 0.0, 8.0, 0.0, 2.0)
#: Gains for large speed and/or spacing errors; also the platoon default.
GROUP_2 = CascadeGains(8.0, 0.0, 10.0, 5.0, 0.0, 0.0)

GAIN_GROUPS = {"group1": GROUP_1, "group2": GROUP_2}


@dataclass(frozen=True)
class SpacingPolicy:
    """Constant time-headway spacing: ``d0 + ht * v``."""

    d0: float = 4.0
    ht: float = 0.8

    def __post_init__(self):
        if not (self.d0 > 0 and self.ht > 0):
            raise ValueError("d0 and ht must be positive")


@dataclass(frozen=True)
class ControllerState:
    """Accumulators of one subsystem controller."""

    sum_ex: float = 0.0
    prev_ex: float = 0.0
    sum_ev: float = 0.0
    prev_ev: float = 0.0


@dataclass(frozen=True)
class SubsystemMeasurement:
    """Gap (leader rear bumper to follower front bumper) and both speeds."""

    d: float
    v_leader: float
    v_follower: float


def desired_spacing(policy: SpacingPolicy, v_follower: float) -> float:
    return policy.d0 + v_follower * policy.ht


def spacing_error(m: SubsystemMeasurement, policy: SpacingPolicy) -> float:
    return m.d - desired_spacing(policy, m.v_follower)


def speed_error(m: SubsystemMeasurement) -> float:
    """Leader speed minus follower speed; positive means the follower should speed up."""
    return m.v_leader - m.v_follower


def _outer(ex, gains, st, dt):
    sum_ex = st.sum_ex + ex
    if dt is None:
        integral, derivative = sum_ex, ex - st.prev_ex
    else:
        integral, derivative = sum_ex * dt, (ex - st.prev_ex) / dt
    return gains.kpx * ex + gains.kix * integral + gains.kdx * derivative, sum_ex


def control_step(
    m: SubsystemMeasurement,
    gains: CascadeGains,
    policy: SpacingPolicy,
    st: ControllerState,
    limits: Limits,
    dt: float | None = None,
) -> tuple[float, ControllerState]:
    """One tick of the cascade controller.

    With ``dt=None`` the integral and derivative channels use raw sums and
    per-sample differences.  Passing the sample time turns them into the
    continuous-time approximations ``sum * dt`` and ``diff / dt``; the
    simulator always does this.

    Returns:
        The clamped desired acceleration and the updated controller state.
    """
    ex = spacing_error(m, policy)
    setpoint, sum_ex = _outer(ex, gains, st, dt)
    ev = setpoint - speed_error(m)
    sum_ev = st.sum_ev + ev
    if dt is None:
        integral, derivative = sum_ev, ev - st.prev_ev
    else:
        integral, derivative = sum_ev * dt, (ev - st.prev_ev) / dt
    u_raw = gains.kpv * ev + gains.kiv * integral + gains.kdv * derivative
    u = clamp(u_raw, limits.u_min, limits.u_max)
    return u, ControllerState(sum_ex=sum_ex, prev_ex=ex, sum_ev=sum_ev, prev_ev=ev)


def primed_state(
    m: SubsystemMeasurement, gains: CascadeGains, policy: SpacingPolicy, dt: float | None = None
) -> ControllerState:
    """State for a freshly formed subsystem.

    Previous errors equal the current ones so that the first derivative term
    is zero; the sums start empty.
    """
    ex = spacing_error(m, policy)
    st = ControllerState(prev_ex=ex)
    setpoint, _ = _outer(ex, gains, st, dt)
    return replace(st, prev_ev=setpoint - speed_error(m))


def select_gains(
    ex: float, ev: float, ex_threshold: float = 0.5, ev_threshold: float = 0.5
) -> CascadeGains:
    """Pick Group 1 for a subtle disturbance, Group 2 otherwise."""
    if abs(ex) <= ex_threshold and abs(ev) <= ev_threshold:
        return GROUP_1
    return GROUP_2
