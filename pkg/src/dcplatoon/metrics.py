"""Steady-state time, overshoot rate and lane-change summaries of a run."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EX_BAND = 0.1
EV_BAND = 0.05
DWELL = 1.0


@dataclass(frozen=True)
class MetricsReport:
    t_steady: float | None
    eta: float
    max_lateral_error: float | None
    t0: float | None
    te: float | None
    min_gap: float
    collided: bool = False

    @property
    def lane_change_duration(self) -> float | None:
        if self.t0 is None or self.te is None:
            return None
        return self.te - self.t0

    def as_dict(self) -> dict:
        return {
            "t_steady": self.t_steady,
            "eta_percent": self.eta,
            "max_lateral_error": self.max_lateral_error,
            "t0": self.t0,
            "te": self.te,
            "lane_change_duration": self.lane_change_duration,
            "min_gap": self.min_gap,
            "collided": self.collided,
        }


def steady_mask(ex: np.ndarray, ev: np.ndarray, ex_band: float = EX_BAND, ev_band: float = EV_BAND) -> np.ndarray:
    """Per-tick flag: every active subsystem (finite ``ex``) is inside the band."""
    active = np.isfinite(ex)
    inside = (np.abs(np.where(active, ex, 0.0)) <= ex_band) & (np.abs(np.where(active, ev, 0.0)) <= ev_band)
    return np.all(inside | ~active, axis=1)


def steady_time(t: np.ndarray, ex: np.ndarray, ev: np.ndarray, Ts: float, dwell: float = DWELL) -> float | None:
    """First time after which every subsystem stays in the band to the end of the run.

    ``None`` if the final in-band stretch is shorter than ``dwell``.
    """
    ok = steady_mask(ex, ev)
    if ok.size == 0:
        return None
    bad = np.flatnonzero(~ok)
    start = 0 if bad.size == 0 else int(bad[-1]) + 1
    if ok.size - start < int(round(dwell / Ts)):
        return None
    return float(t[start])


def overshoot_rate(v: np.ndarray, followers, head: int, mode: str = "approach") -> float:
    """Largest follower excursion past the head vehicle's final speed, in percent of it.

    In ``approach`` mode the excursion is measured in the direction each
    follower had to move initially, so a decelerating follower counts the
    undershoot; a follower that starts at the target speed contributes
    nothing.  ``above`` counts only speeds above the target.
    """
    v_ss = float(v[-1, head])
    if not v_ss > 0:
        return 0.0
    worst = 0.0
    for i in followers:
        col = v[:, i]
        if mode == "above":
            excess = float(np.max(col - v_ss))
        else:
            direction = math.copysign(1.0, v_ss - col[0]) if v_ss != col[0] else 0.0
            if direction == 0.0:
                continue
            excess = float(np.max(direction * (col - v_ss)))
        worst = max(worst, excess)
    return 100.0 * worst / v_ss


def compute_metrics(series) -> MetricsReport:
    """Summarise a simulation result (see ``sim.SimulationResult``)."""
    if series.t.size == 0:
        raise ValueError("empty series")
    followers = [i for i in range(series.ex.shape[1]) if np.any(np.isfinite(series.ex[:, i]))]
    lat = series.lat_err[np.isfinite(series.lat_err)]
    return MetricsReport(
        t_steady=steady_time(series.t, series.ex, series.ev, series.Ts),
        eta=overshoot_rate(series.v, followers, series.head_index, series.overshoot_mode),
        max_lateral_error=float(np.max(np.abs(lat))) if lat.size else None,
        t0=series.t0,
        te=series.te,
        min_gap=series.min_gap,
        collided=series.collided,
    )
