"""Fixed-step platoon simulation with cooperative lane changes.

Each tick measures every subsystem, computes the follower commands, advances
the lane-change phase machine, steps the vehicle models and logs one row per
vehicle.  Identical scenarios give bit-identical results.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import FROZEN_GAINS, SinglePidGains, single_pid_step
from .controller import (
    CascadeGains,
    ControllerState,
    SubsystemMeasurement,
    control_step,
    primed_state,
    select_gains,
    spacing_error,
    speed_error,
)
from .dynamics import KinematicState, LongitudinalState, clamp, step_kinematic, step_longitudinal
from .lanechange import (
    LaneChangeGate,
    TrajectoryPlan,
    eval_reference,
    gate_check,
    plan_trajectory,
    replan_step,
)
from .metrics import MetricsReport, compute_metrics
from .scenario import ScenarioSpec, validate
from .tracker import MpcConfig, MpcTracker, reference_horizon

log = logging.getLogger(__name__)

VIRTUAL = "slot"
MERGE_TOLERANCE = 1e-3

NONE, COOPERATE, TRIGGERED, EXECUTING, MERGED = "", "cooperate", "triggered", "executing", "merged"


class CollisionError(RuntimeError):
    """Two same-lane vehicles touched; ``result`` holds the log up to that tick."""

    def __init__(self, message: str, result: "SimulationResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class PlatoonTopology:
    """Follower/leader pairs; the leader may be the virtual merge slot."""

    subsystems: tuple[tuple[int | str, int], ...]

    def __post_init__(self):
        followers = [f for _, f in self.subsystems]
        if len(set(followers)) != len(followers):
            raise ValueError("a follower appears in more than one subsystem")

    def leader_of(self) -> dict:
        return {f: lead for lead, f in self.subsystems}


def chain_topology(lanes: dict[int, float], positions: dict[int, float]) -> PlatoonTopology:
    """Adjacent same-lane vehicles, ordered front to back, form subsystems."""
    by_lane: dict[float, list[int]] = {}
    for vid, y in lanes.items():
        by_lane.setdefault(y, []).append(vid)
    pairs = []
    for y in sorted(by_lane):
        order = sorted(by_lane[y], key=lambda v: (-positions[v], v))
        pairs.extend(zip(order, order[1:]))
    return PlatoonTopology(tuple(pairs))


@dataclass
class SimulationResult:
    spec: ScenarioSpec
    ids: list[int]
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u: np.ndarray
    ex: np.ndarray
    ev: np.ndarray
    lane: np.ndarray
    ref_x: np.ndarray
    ref_y: np.ndarray
    lat_err: np.ndarray
    phase: list[str]
    head_index: int
    t0: float | None = None
    te: float | None = None
    min_gap: float = math.inf
    collided: bool = False
    plan_lengths: list[tuple[float, float]] = field(default_factory=list)
    # (t, previous v, previous delta_f, commanded v, commanded delta_f) per tracked tick
    mpc_commands: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    metrics: MetricsReport | None = None

    @property
    def Ts(self) -> float:
        return self.spec.Ts

    @property
    def overshoot_mode(self) -> str:
        return self.spec.overshoot

    def column(self, name: str, vid: int) -> np.ndarray:
        return getattr(self, name)[:, self.ids.index(vid)]


class _Arm:
    """Per-follower controller state for one of the two control laws."""

    def __init__(self, spec: ScenarioSpec, kind: str, baseline_gains: SinglePidGains):
        self.spec = spec
        self.kind = kind
        self.baseline_gains = baseline_gains
        self.state: dict[int, ControllerState | float] = {}
        self.gains: dict[int, CascadeGains] = {}

    def prime(self, fid: int, m: SubsystemMeasurement) -> None:
        spec = self.spec
        if self.kind == "single_pid":
            self.state[fid] = spacing_error(m, spec.policy) + self.baseline_gains.cv * speed_error(m)
            return
        if spec.gains_mode == "auto":
            g = select_gains(spacing_error(m, spec.policy), speed_error(m))
        else:
            g = spec.gains
        self.gains[fid] = g
        self.state[fid] = primed_state(m, g, spec.policy, dt=spec.Ts)

    def step(self, fid: int, m: SubsystemMeasurement) -> float:
        spec = self.spec
        if self.kind == "single_pid":
            u, self.state[fid] = single_pid_step(
                m, self.baseline_gains, spec.policy, self.state[fid], spec.limits, spec.Ts
            )
            return u
        u, self.state[fid] = control_step(m, self.gains[fid], spec.policy, self.state[fid], spec.limits, dt=spec.Ts)
        return u


def _scripted(segments, t: float):
    for s in segments:
        if s.t_start <= t < s.t_end:
            return s.accel
    return None


def run_scenario(
    spec: ScenarioSpec,
    controller: str | None = None,
    baseline_gains: SinglePidGains = FROZEN_GAINS,
    mpc: MpcConfig | None = None,
) -> SimulationResult:
    """Simulate ``spec`` for its full duration.

    Args:
        controller: overrides ``spec.controller`` (``dcpid`` or ``single_pid``).
        baseline_gains: gains of the single-PID arm.
        mpc: tracker settings for the lane-change manoeuvre.

    Raises:
        ScenarioError: the scenario violates an invariant.
        CollisionError: a gap closed; the partial result is attached.
    """
    if controller is not None:
        spec = replace(spec, controller=controller)
    validate(spec)
    Ts, lim, pol = spec.Ts, spec.limits, spec.policy
    n = spec.n_steps
    vehicles = list(spec.vehicles)
    ids = [v.id for v in vehicles]
    col = {vid: i for i, vid in enumerate(ids)}
    nv = len(ids)
    params = {v.id: v.params for v in vehicles}
    lon = {v.id: LongitudinalState(v.x, v.v, v.a) for v in vehicles}
    lane = {v.id: v.y for v in vehicles}
    scripts = {v.id: v.script for v in vehicles}
    ydisp = {v.id: v.y for v in vehicles}
    phidisp = {v.id: 0.0 for v in vehicles}

    lc = spec.lane_change
    phase = NONE
    sv = tfv = trv = None
    plan: TrajectoryPlan | None = None
    kin: KinematicState | None = None
    tracker = None
    if lc is not None:
        phase = COOPERATE
        sv = lc.sv_id
        if lc.tfv_override is not None:
            tfv = lc.tfv_override
        else:
            ahead = [v for v in vehicles if v.y == lc.target_y and v.x > lon[sv].x]
            tfv = min(ahead, key=lambda v: (v.x, v.id)).id
        if lc.tfv_profile:
            scripts[tfv] = tuple(scripts[tfv]) + tuple(lc.tfv_profile)
        tracker = MpcTracker(cfg=mpc or MpcConfig(U_max=(lim.v_max, 0.3)), wheelbase=params[sv].wheelbase, Ts=Ts)

    def topology() -> PlatoonTopology:
        nonlocal trv
        base = chain_topology(lane, {k: s.x for k, s in lon.items()})
        if phase != COOPERATE:
            return base
        leader = base.leader_of()
        trv = next((f for f, lead in leader.items() if lead == tfv), None)
        leader[sv] = tfv
        if trv is not None:
            leader[trv] = VIRTUAL
        return PlatoonTopology(tuple((lead, f) for f, lead in sorted(leader.items())))

    def measure(fid, lead) -> SubsystemMeasurement:
        me = lon[fid]
        if lead == VIRTUAL:
            t_state = lon[tfv]
            s_sv = pol.d0 + pol.ht * lon[sv].v
            x_slot = t_state.x - params[tfv].length - s_sv
            return SubsystemMeasurement(d=x_slot - me.x - params[sv].length, v_leader=t_state.v, v_follower=me.v)
        ld = lon[lead]
        return SubsystemMeasurement(d=ld.x - me.x - params[lead].length, v_leader=ld.v, v_follower=me.v)

    arm = _Arm(spec, spec.controller, baseline_gains)
    topo = topology()
    leader_of = topo.leader_of()
    for lead, fid in topo.subsystems:
        arm.prime(fid, measure(fid, lead))
    was_scripted = {vid: False for vid in ids}
    head = max((v for v in vehicles if v.id not in leader_of), key=lambda v: (v.x, -v.id)).id

    shape = (n, nv)
    logs = {k: np.full(shape, np.nan) for k in ("x", "y", "phi", "v", "a", "u", "ex", "ev", "lane", "ref_x", "ref_y", "lat_err")}
    phases: list[str] = []
    result = SimulationResult(
        spec=spec, ids=ids, t=np.round(np.arange(n) * Ts, 12), phase=phases, head_index=col[head], **logs
    )

    def occupancy():
        lanes_occ: dict[float, list[int]] = {}
        for vid, y in lane.items():
            lanes_occ.setdefault(y, []).append(vid)
        if phase == EXECUTING:
            for y in (lc.target_y, spec.vehicle(sv).y):
                if sv not in lanes_occ.setdefault(y, []):
                    lanes_occ[y].append(sv)
        return lanes_occ

    def check_gaps(k):
        for y, members in occupancy().items():
            order = sorted(members, key=lambda v: (-lon[v].x, v))
            for front, back in zip(order, order[1:]):
                gap = lon[front].x - lon[back].x - params[front].length
                result.min_gap = min(result.min_gap, gap)
                if gap <= 0:
                    return front, back, gap
        return None

    hit = check_gaps(0)
    if hit is not None:
        raise CollisionError(f"vehicles {hit[0]} and {hit[1]} overlap at start", result)

    dist = spec.disturbance
    for k in range(n):
        t = round(k * Ts, 12)
        # 1. measure
        meas = {fid: measure(fid, lead) for lead, fid in topo.subsystems}
        # 2. control
        u = {}
        for vid in ids:
            seg = _scripted(scripts[vid], t)
            if seg is not None:
                u[vid] = seg
                was_scripted[vid] = True
            elif vid in meas:
                if was_scripted[vid]:
                    arm.prime(vid, meas[vid])
                    was_scripted[vid] = False
                if not (phase == EXECUTING and vid == sv):
                    u[vid] = arm.step(vid, meas[vid])
            else:
                u[vid] = 0.0
        if dist is not None and dist.t_start <= t < dist.t_end and dist.vehicle_id in u:
            u[dist.vehicle_id] = u[dist.vehicle_id] + dist.eps_u
        for vid in u:
            u[vid] = clamp(u[vid], lim.u_min, lim.u_max)

        # 3. lane-change phase machine
        tick_phase = phase
        if phase == COOPERATE:
            gate = LaneChangeGate(
                d_sv=meas[sv].d,
                s_sv=pol.d0 + pol.ht * lon[sv].v,
                d_trv=lon[sv].x - lon[trv].x - params[sv].length if trv is not None else math.inf,
                d0=pol.d0,
                epsilon_gate=lc.epsilon_gate,
            )
            if gate_check(gate) and lon[sv].v > 0:
                result.t0 = t
                tick_phase = TRIGGERED
                phase = EXECUTING
                lane[sv] = lc.target_y
                old = leader_of
                topo = topology()
                leader_of = topo.leader_of()
                for lead, fid in topo.subsystems:
                    if old.get(fid) != lead:
                        meas[fid] = measure(fid, lead)
                        arm.prime(fid, meas[fid])
                        if fid != sv and _scripted(scripts[fid], t) is None:
                            u[fid] = clamp(arm.step(fid, meas[fid]), lim.u_min, lim.u_max)
                s = lon[sv]
                plan = plan_trajectory(s.x, ydisp[sv], lc.target_y, s.v, lc.a_p)
                kin = KinematicState(x=s.x, y=ydisp[sv], phi=0.0, v=s.v, delta_f=0.0)
                tracker.reset((s.v, 0.0))
                log.info("lane change triggered at t=%.2f s", t)
                result.diagnostics.append(f"lane change triggered at t={t:.2f} s")

        ref = None
        if phase == EXECUTING:
            s_sv = lon[sv]
            eps = dist.eps_u if dist is not None and dist.vehicle_id == sv and dist.t_start <= t < dist.t_end else 0.0
            if _scripted(scripts[sv], t) is not None:
                nxt = step_longitudinal(s_sv, u[sv], params[sv], lim, Ts)
                plan = plan.rescaled(max(nxt.v, 1e-6), s_sv.x)
            elif arm.kind == "dcpid":
                r = replan_step(
                    plan, s_sv, params[sv], lon[tfv], params[tfv].length,
                    arm.gains[sv], pol, arm.state[sv], lim, Ts, disturbance=eps,
                )
                nxt, plan, arm.state[sv] = r.state, r.plan, r.ctrl_state
                u[sv] = r.u
            else:
                u[sv] = clamp(arm.step(sv, meas[sv]) + eps, lim.u_min, lim.u_max)
                nxt = step_longitudinal(s_sv, u[sv], params[sv], lim, Ts)
                plan = plan.rescaled(max(nxt.v, 1e-6), s_sv.x)
            result.plan_lengths.append((t, plan.M))
            v_ref = max(nxt.v, 1e-6)
            refs = reference_horizon(plan, kin.x, v_ref, tracker.cfg.Np, params[sv].wheelbase, Ts)
            ref = refs[0]
            prev = tracker.u_prev
            tr = tracker.step(kin, refs, v_ref)
            result.mpc_commands.append((t, prev[0], prev[1], tr.v_cmd, tr.delta_cmd))
            if not tr.ok:
                result.diagnostics.append(f"t={t:.2f} s: tracker failed, command held")

        # 5. log the state at t together with the command applied over [t, t + Ts)
        phases.append(tick_phase)
        for vid in ids:
            c = col[vid]
            s = lon[vid]
            logs["x"][k, c] = s.x
            logs["v"][k, c] = s.v
            logs["a"][k, c] = s.a
            logs["u"][k, c] = u[vid]
            logs["lane"][k, c] = lane[vid]
            if vid == sv and kin is not None and phase == EXECUTING:
                logs["y"][k, c] = kin.y
                logs["phi"][k, c] = kin.phi
            else:
                logs["y"][k, c] = ydisp[vid]
                logs["phi"][k, c] = phidisp[vid]
            if vid in meas:
                logs["ex"][k, c] = spacing_error(meas[vid], pol)
                logs["ev"][k, c] = speed_error(meas[vid])
        if ref is not None:
            c = col[sv]
            logs["ref_x"][k, c] = ref.x_r
            logs["ref_y"][k, c] = ref.y_r
            logs["lat_err"][k, c] = kin.y - ref.y_r

        # 4. dynamics
        new = {vid: step_longitudinal(lon[vid], u[vid], params[vid], lim, Ts) for vid in ids if vid != sv or phase != EXECUTING}
        if phase == EXECUTING:
            kin = step_kinematic(kin, tr.v_cmd, tr.delta_cmd, params[sv].wheelbase, Ts)
            kin = KinematicState(x=float(kin.x), y=float(kin.y), phi=float(kin.phi), v=float(kin.v), delta_f=float(kin.delta_f))
            new[sv] = LongitudinalState(kin.x, nxt.v, nxt.a)
            ydisp[sv], phidisp[sv] = kin.y, kin.phi
        lon.update(new)

        if phase == EXECUTING and kin.x >= plan.x_end and abs(kin.y - lc.target_y) <= MERGE_TOLERANCE:
            result.te = round((k + 1) * Ts, 12)
            phase = MERGED
            ydisp[sv], phidisp[sv] = lc.target_y, 0.0
            kin = None
            result.diagnostics.append(f"lane change completed at t={result.te:.2f} s")

        hit = check_gaps(k + 1)
        if hit is not None:
            result.collided = True
            _truncate(result, k + 1)
            result.metrics = compute_metrics(result)
            raise CollisionError(
                f"collision between vehicles {hit[0]} and {hit[1]} at t={(k + 1) * Ts:.2f} s (gap {hit[2]:.3f} m)",
                result,
            )

    if lc is not None and result.t0 is None:
        msg = "lane-change gate never satisfied within the run; no lane change performed"
        log.warning(msg)
        result.diagnostics.append(msg)
    result.metrics = compute_metrics(result)
    return result


def _truncate(res: SimulationResult, n: int) -> None:
    res.t = res.t[:n]
    for name in ("x", "y", "phi", "v", "a", "u", "ex", "ev", "lane", "ref_x", "ref_y", "lat_err"):
        setattr(res, name, getattr(res, name)[:n])


def single_pid_baseline(spec: ScenarioSpec, gains: SinglePidGains = FROZEN_GAINS) -> SimulationResult:
    """Same run with every follower under the single-loop PID."""
    return run_scenario(spec, controller="single_pid", baseline_gains=gains)


# --- sweep ------------------------------------------------------------------


def grid_values(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive grid ``lo, lo + step, ..., hi`` without float drift."""
    if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
        raise ValueError("grid bounds must be finite")
    if not step > 0:
        raise ValueError(f"grid step must be positive, got {step!r}")
    if hi < lo:
        raise ValueError(f"grid maximum {hi!r} is below minimum {lo!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


@dataclass(frozen=True)
class SweepRow:
    ex: float
    ev: float
    converged: bool
    eta: float | None
    t_steady: float | None
    collided: bool = False


def _sweep_point(args) -> SweepRow:
    from .scenario import two_vehicle_spec

    ex, ev, kw = args
    spec = two_vehicle_spec(ex, ev, **kw)
    try:
        res = run_scenario(spec)
    except CollisionError:
        return SweepRow(ex, ev, False, None, None, collided=True)
    m = res.metrics
    return SweepRow(ex, ev, m.t_steady is not None, m.eta, m.t_steady)


def run_sweep(ex_values, ev_values, base: dict | None = None, workers: int = 1) -> list[SweepRow]:
    """One two-vehicle run per ``(ex, ev)`` grid point.

    ``base`` holds keyword arguments for ``scenario.two_vehicle_spec``
    (leader speed, lag, gains, duration).  Rows come back in grid order
    (``ex`` outer, ``ev`` inner) whatever the number of workers.
    """
    kw = dict(base or {})
    jobs = [(float(ex), float(ev), kw) for ex in ex_values for ev in ev_values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_sweep_point(j) for j in jobs]
