"""Discrete-time vehicle motion models.

Two models are used by the simulator:

* a third-order longitudinal model (position, velocity, acceleration) with a
  first-order inertial lag between commanded and realised acceleration, and
* a kinematic bicycle model (rear-axle reference point) for the planar motion
  of a vehicle while it changes lanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


@dataclass(frozen=True)
class LongitudinalState:
    """Position (m), velocity (m/s) and acceleration (m/s^2) of one vehicle.

    ``x`` is the front-bumper position along the road.
    """

    x: float
    v: float
    a: float = 0.0


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of a vehicle.

    Args:
        tau: inertial lag of the longitudinal dynamics (s).
        length: bumper-to-bumper length (m).
        wheelbase: distance between front and rear axles (m).
    """

    tau: float
    length: float = 5.0
    wheelbase: float = 2.7

    def __post_init__(self):
        for name in ("tau", "length", "wheelbase"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    def check_sample_time(self, Ts: float) -> None:
        """Reject sample times for which the lag discretisation is not contractive."""
        if not Ts > 0:
            raise ValueError(f"sample time must be positive, got {Ts!r}")
        if not self.tau > Ts:
            raise ValueError(f"inertial lag tau={self.tau} must exceed the sample time Ts={Ts}")


@dataclass(frozen=True)
class Limits:
    """Bounds on desired acceleration, acceleration and velocity."""

    u_min: float = -3.0
    u_max: float = 3.0
    a_min: float = -3.0
    a_max: float = 3.0
    v_min: float = 0.0
    v_max: float = 40.0

    def __post_init__(self):
        for lo, hi in (("u_min", "u_max"), ("a_min", "a_max"), ("v_min", "v_max")):
            if not getattr(self, lo) < getattr(self, hi):
                raise ValueError(f"{lo} must be smaller than {hi}")


@dataclass(frozen=True)
class KinematicState:
    """Planar pose of the rear-axle centre plus the last applied inputs."""

    x: float
    y: float
    phi: float = 0.0
    v: float = 0.0
    delta_f: float = 0.0

    def __post_init__(self):
        if not abs(self.delta_f) < math.pi / 2:
            raise ValueError(f"front wheel angle must lie in (-pi/2, pi/2), got {self.delta_f!r}")


def step_longitudinal(
    s: LongitudinalState, u: float, params: VehicleParams, limits: Limits, Ts: float
) -> LongitudinalState:
    """Advance the longitudinal model by one sample.

    The command is clamped first, the lagged acceleration is updated and
    clamped, then velocity and position are integrated semi-implicitly (each
    with the freshly updated quantity).
    """
    params.check_sample_time(Ts)
    u = clamp(u, limits.u_min, limits.u_max)
    ratio = Ts / params.tau
    a = clamp((1.0 - ratio) * s.a + ratio * u, limits.a_min, limits.a_max)
    v = clamp(s.v + a * Ts, limits.v_min, limits.v_max)
    return LongitudinalState(x=s.x + v * Ts, v=v, a=a)


def step_kinematic(
    s: KinematicState, v: float, delta_f: float, wheelbase: float, Ts: float
) -> KinematicState:
    """Forward-Euler step of the kinematic bicycle model."""
    if not abs(delta_f) < math.pi / 2:
        raise ValueError(f"front wheel angle must lie in (-pi/2, pi/2), got {delta_f!r}")
    if not Ts > 0:
        raise ValueError(f"sample time must be positive, got {Ts!r}")
    return KinematicState(
        x=s.x + v * math.cos(s.phi) * Ts,
        y=s.y + v * math.sin(s.phi) * Ts,
        phi=s.phi + v * math.tan(delta_f) / wheelbase * Ts,
        v=v,
        delta_f=delta_f,
    )
