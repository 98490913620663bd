"""Receding-horizon MPC that tracks the lane-change reference.

The kinematic bicycle model is linearised about the reference at every step
of the horizon.  The tracking error is augmented with the previous control
error, so the decision variables are control-error increments; the condensed
problem is a dense QP with a single slack that softens the absolute control
bounds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import KinematicState, clamp
from .lanechange import ReferencePoint, TrajectoryPlan, eval_reference
from .qp import QpProblem, QpSolution, QpSolverError, solve_qp

log = logging.getLogger(__name__)

N_STATE = 3
N_INPUT = 2


@dataclass(frozen=True)
class MpcConfig:
    """Horizons, weights and bounds of the tracker.

    Weights are per state ``(x, y, phi)`` and per input ``(v, delta_f)``.
    """

    Np: int = 60
    Nc: int = 30
    Q: tuple[float, float, float] = (10.0, 100.0, 50.0)
    R: tuple[float, float] = (0.1, 1.0)
    rho: float = 1000.0
    dU_min: tuple[float, float] = (-0.5, -0.01)
    dU_max: tuple[float, float] = (0.5, 0.01)
    U_min: tuple[float, float] = (0.0, -0.3)
    U_max: tuple[float, float] = (40.0, 0.3)

    def __post_init__(self):
        if not (self.Np >= self.Nc >= 1):
            raise ValueError("horizons must satisfy Np >= Nc >= 1")
        if len(self.Q) != N_STATE or len(self.R) != N_INPUT:
            raise ValueError("Q needs 3 weights and R needs 2")
        if min(self.Q) < 0 or min(self.R) < 0:
            raise ValueError("weights must be non-negative")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        for lo, hi in ((self.dU_min, self.dU_max), (self.U_min, self.U_max)):
            if len(lo) != N_INPUT or len(hi) != N_INPUT or any(a > b for a, b in zip(lo, hi)):
                raise ValueError("control bounds must be ordered pairs for (v, delta_f)")


@dataclass(frozen=True)
class ErrorModel:
    A: np.ndarray
    B: np.ndarray


def linearize(ref: ReferencePoint, v_r: float, wheelbase: float, Ts: float) -> ErrorModel:
    """Forward-Euler discretised Jacobians of the kinematic model at the reference."""
    if not abs(ref.delta_fr) < math.pi / 2:
        raise ValueError("reference front wheel angle outside (-pi/2, pi/2)")
    s, c = math.sin(ref.phi_r), math.cos(ref.phi_r)
    A = np.eye(3)
    A[0, 2] = -Ts * v_r * s
    A[1, 2] = Ts * v_r * c
    B = Ts * np.array(
        [
            [c, 0.0],
            [s, 0.0],
            [math.tan(ref.delta_fr) / wheelbase, v_r / (wheelbase * math.cos(ref.delta_fr) ** 2)],
        ]
    )
    return ErrorModel(A=A, B=B)


def _augment(model: ErrorModel):
    A = np.zeros((5, 5))
    A[:3, :3] = model.A
    A[:3, 3:] = model.B
    A[3:, 3:] = np.eye(2)
    B = np.vstack([model.B, np.eye(2)])
    return A, B


def build_qp(models, x_err0, cfg: MpcConfig, u_ref=None) -> QpProblem:
    """Condense the horizon into ``z' H z + f' z`` over ``z = [dU; eps]``.

    Args:
        models: ``cfg.Np`` error models, one per prediction step.
        x_err0: augmented initial error ``[x - x_r, y - y_r, phi - phi_r,
            u_prev - u_r(0)]`` (5 values).
        u_ref: optional ``(Np, 2)`` reference controls.  When given, the
            increment bounds are shifted so that they hold for the absolute
            control, and softened absolute bounds are added as rows of ``G``.
    """
    Np, Nc = cfg.Np, cfg.Nc
    if len(models) < Np:
        raise ValueError(f"need {Np} models, got {len(models)}")
    xi0 = np.asarray(x_err0, dtype=float).ravel()
    if xi0.size != 5 or not np.all(np.isfinite(xi0)):
        raise ValueError("x_err0 must hold 5 finite values")

    nu = N_INPUT * Nc
    Psi = np.zeros((N_STATE * Np, 5))
    Theta = np.zeros((N_STATE * Np, nu))
    Phi = np.eye(5)
    Gam = np.zeros((Nc, 5, N_INPUT))
    for j in range(Np):
        Aa, Ba = _augment(models[j])
        Phi = Aa @ Phi
        k = min(j, Nc)
        if k:
            Gam[:k] = np.einsum("ab,ibc->iac", Aa, Gam[:k])
        if j < Nc:
            Gam[j] = Ba
        rows = slice(N_STATE * j, N_STATE * (j + 1))
        Psi[rows] = Phi[:N_STATE]
        kk = min(j + 1, Nc)
        Theta[rows, : N_INPUT * kk] = Gam[:kk, :N_STATE, :].transpose(1, 0, 2).reshape(N_STATE, -1)

    Qbar = np.tile(np.asarray(cfg.Q, dtype=float), Np)
    Rbar = np.tile(np.asarray(cfg.R, dtype=float), Nc)
    H = np.zeros((nu + 1, nu + 1))
    H[:nu, :nu] = Theta.T @ (Qbar[:, None] * Theta) + np.diag(Rbar)
    H[:nu, :nu] = 0.5 * (H[:nu, :nu] + H[:nu, :nu].T)
    H[nu, nu] = cfg.rho
    f = np.zeros(nu + 1)
    f[:nu] = 2.0 * Theta.T @ (Qbar * (Psi @ xi0))

    dU_min = np.asarray(cfg.dU_min, dtype=float)
    dU_max = np.asarray(cfg.dU_max, dtype=float)
    lb = np.empty(nu + 1)
    ub = np.empty(nu + 1)
    lb[nu], ub[nu] = 0.0, np.inf
    G = h = None
    if u_ref is None:
        lb[:nu] = np.tile(dU_min, Nc)
        ub[:nu] = np.tile(dU_max, Nc)
    else:
        u_ref = np.asarray(u_ref, dtype=float).reshape(-1, N_INPUT)[:Nc]
        d_ref = np.vstack([np.zeros(N_INPUT), np.diff(u_ref, axis=0)])
        lb[:nu] = (dU_min - d_ref).ravel()
        ub[:nu] = (dU_max - d_ref).ravel()
        # cumulative sum of increments up to step j, per input
        S = np.kron(np.tril(np.ones((Nc, Nc))), np.eye(N_INPUT))
        base = u_ref + xi0[3:]
        upper = (np.asarray(cfg.U_max) - base).ravel()
        lower = (np.asarray(cfg.U_min) - base).ravel()
        neg = -np.ones((nu, 1))
        G = np.vstack([np.hstack([S, neg]), np.hstack([-S, neg])])
        h = np.concatenate([upper, -lower])
    lb = np.minimum(lb, ub)
    return QpProblem(H=H, f=f, lb=lb, ub=ub, G=G, h=h, slack_index=nu, meta={"Theta": Theta, "Psi": Psi})


def reference_horizon(
    plan: TrajectoryPlan, x_start: float, v_r: float, n: int, wheelbase: float, Ts: float
) -> list[ReferencePoint]:
    """``n`` reference points indexed by progress at ``v_r`` from ``x_start``.

    Past the end of the plan the reference continues straight along the
    target lane.
    """
    refs = []
    x = max(x_start, plan.x0)
    for _ in range(n):
        if x <= plan.x_end:
            ref = eval_reference(plan, x, wheelbase)
        else:
            ref = ReferencePoint(x, plan.y_end, 0.0, 0.0, 0.0, 0.0, 0.0)
        refs.append(ref)
        x = x + v_r * math.cos(ref.phi_r) * Ts
    return refs


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


@dataclass
class TrackResult:
    v_cmd: float
    delta_cmd: float
    solution: QpSolution | None
    ok: bool


def track_step(
    current: KinematicState,
    refs,
    u_prev,
    cfg: MpcConfig,
    v_ref: float,
    wheelbase: float,
    Ts: float,
    warm_start=None,
) -> TrackResult:
    """Solve one receding-horizon problem and apply the first increment.

    ``refs`` must hold at least ``cfg.Np`` points starting at the current
    time.  On solver failure the previous command is held.
    """
    refs = list(refs)
    if len(refs) < cfg.Np:
        refs = refs + [refs[-1]] * (cfg.Np - len(refs))
    r0 = refs[0]
    u_ref = np.array([[v_ref, r.delta_fr] for r in refs[: cfg.Np]])
    xi0 = np.array(
        [
            current.x - r0.x_r,
            current.y - r0.y_r,
            _wrap(current.phi - r0.phi_r),
            u_prev[0] - u_ref[0, 0],
            u_prev[1] - u_ref[0, 1],
        ]
    )
    models = [linearize(r, v_ref, wheelbase, Ts) for r in refs[: cfg.Np]]
    problem = build_qp(models, xi0, cfg, u_ref=u_ref)
    try:
        sol = solve_qp(problem, x0=warm_start)
    except QpSolverError as exc:
        log.warning("MPC solve failed (%s); holding previous command", exc)
        return TrackResult(v_cmd=u_prev[0], delta_cmd=u_prev[1], solution=None, ok=False)
    du = sol.x[:N_INPUT]
    v_cmd = clamp(u_prev[0] + du[0], cfg.U_min[0], cfg.U_max[0])
    d_cmd = clamp(u_prev[1] + du[1], cfg.U_min[1], cfg.U_max[1])
    return TrackResult(v_cmd=v_cmd, delta_cmd=d_cmd, solution=sol, ok=True)


@dataclass
class MpcTracker:
    """Stateful wrapper: keeps the last command and warm-starts the next solve."""

    cfg: MpcConfig = field(default_factory=MpcConfig)
    wheelbase: float = 2.7
    Ts: float = 0.02
    u_prev: tuple[float, float] = (0.0, 0.0)
    _warm: np.ndarray | None = None

    def reset(self, u_prev) -> None:
        self.u_prev = (float(u_prev[0]), float(u_prev[1]))
        self._warm = None

    def step(self, current: KinematicState, refs, v_ref: float) -> TrackResult:
        res = track_step(current, refs, self.u_prev, self.cfg, v_ref, self.wheelbase, self.Ts, self._warm)
        if res.ok:
            nu = N_INPUT * self.cfg.Nc
            shifted = np.zeros(nu + 1)
            shifted[: nu - N_INPUT] = res.solution.x[N_INPUT:nu]
            self._warm = shifted
        self.u_prev = (res.v_cmd, res.delta_cmd)
        return res
