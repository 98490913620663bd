"""Single-loop PID comparison arm.

One PID acts on a combined error ``E = ex + cv * (v_leader - v_follower)``
with a rate-form derivative.  The frozen gains below came out of
``tune_single_pid`` and are checked against it by the test suite.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .controller import SpacingPolicy, SubsystemMeasurement, spacing_error, speed_error
from .dynamics import Limits, clamp


@dataclass(frozen=True)
class SinglePidGains:
    kp: float
    kd: float
    cv: float

    def __post_init__(self):
        if not all(math.isfinite(g) and g >= 0 for g in (self.kp, self.kd, self.cv)):
            raise ValueError("single-PID gains must be finite and non-negative")


FROZEN_GAINS = SinglePidGains(kp=3.0, kd=2.0, cv=0.0)

TUNING_GRID = {
    "kp": (0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0),
    "kd": (0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0),
    "cv": (0.0, 0.25, 0.5, 1.0, 2.0, 4.0),
}
# two-vehicle tuning state: spacing error (m), speed error (m/s)
TUNING_STATE = (5.0, -2.0)


def combined_error(m: SubsystemMeasurement, gains: SinglePidGains, policy: SpacingPolicy) -> float:
    return spacing_error(m, policy) + gains.cv * speed_error(m)


def single_pid_step(
    m: SubsystemMeasurement,
    gains: SinglePidGains,
    policy: SpacingPolicy,
    prev_error: float,
    limits: Limits,
    Ts: float,
) -> tuple[float, float]:
    """Return the clamped command and the error to remember."""
    e = combined_error(m, gains, policy)
    u = gains.kp * e + gains.kd * (e - prev_error) / Ts
    return clamp(u, limits.u_min, limits.u_max), e


def tune_single_pid(grid=None, state=TUNING_STATE, v_leader: float = 30.0, tau: float = 0.7):
    """Grid search minimising ``t_steady + eta`` on a two-vehicle run.

    Runs that never settle or collide are discarded.  Ties go to the first
    grid point in lexicographic order.  Returns ``(gains, score)``.
    """
    from .scenario import two_vehicle_spec
    from .sim import CollisionError, run_scenario

    grid = grid or TUNING_GRID
    base = two_vehicle_spec(state[0], state[1], v_leader=v_leader, tau=tau)
    best, best_score = None, math.inf
    for kp, kd, cv in itertools.product(grid["kp"], grid["kd"], grid["cv"]):
        gains = SinglePidGains(kp, kd, cv)
        try:
            res = run_scenario(base, controller="single_pid", baseline_gains=gains)
        except CollisionError:
            continue
        m = res.metrics
        if m.t_steady is None:
            continue
        score = m.t_steady + m.eta
        if score < best_score:
            best, best_score = gains, score
    return best, best_score
