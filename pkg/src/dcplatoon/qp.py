"""Dense convex QP solver (primal active set).

Solves::

    minimize    z' H z + f' z
    subject to  lb <= z <= ub,  G z <= h

``H`` must be symmetric positive definite.  The iteration order and all tie
breaks are fixed, so identical inputs give identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog


class QpSolverError(RuntimeError):
    """Raised when the solver fails; ``best`` holds the last feasible iterate (if any)."""

    def __init__(self, message: str, best: np.ndarray | None = None):
        super().__init__(message)
        self.best = best


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    #: Index of a non-negative slack variable that relaxes every row of ``G``
    #: with a negative coefficient; used to build a feasible starting point.
    slack_index: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float).ravel()
        n = self.f.size
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        if self.G is None:
            self.G = np.zeros((0, n))
            self.h = np.zeros(0)
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float)).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.h.size != self.G.shape[0]:
            raise ValueError("G and h disagree on the number of rows")

    @property
    def n(self) -> int:
        return self.f.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.H @ z + self.f @ z)

    def max_violation(self, z) -> float:
        z = np.asarray(z, dtype=float)
        v = [0.0, float(np.max(self.lb - z, initial=0.0)), float(np.max(z - self.ub, initial=0.0))]
        if self.G.shape[0]:
            v.append(float(np.max(self.G @ z - self.h, initial=0.0)))
        return max(v)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    objective: float
    iterations: int
    active: tuple[int, ...]


def _constraint_rows(p: QpProblem):
    """Stack bounds and general rows into A z <= b (infinite bounds dropped)."""
    n = p.n
    eye = np.eye(n)
    rows, rhs = [], []
    for i in range(n):
        if np.isfinite(p.lb[i]):
            rows.append(-eye[i])
            rhs.append(-p.lb[i])
        if np.isfinite(p.ub[i]):
            rows.append(eye[i])
            rhs.append(p.ub[i])
    A = np.vstack(rows + [p.G]) if rows or p.G.shape[0] else np.zeros((0, n))
    b = np.concatenate([np.asarray(rhs, dtype=float), p.h])
    return A, b, len(rows)


def _feasible_start(p: QpProblem, x0, tol):
    z = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    z = np.clip(z, p.lb, p.ub)
    if p.G.shape[0] == 0 or np.all(p.G @ z - p.h <= tol):
        return z
    if p.slack_index is not None:
        s = p.slack_index
        viol = p.G @ z - p.h
        coef = p.G[:, s]
        need = [viol[i] / -coef[i] for i in range(len(viol)) if viol[i] > 0 and coef[i] < 0]
        if need:
            z[s] = min(z[s] + max(need), p.ub[s])
        if np.all(p.G @ z - p.h <= tol):
            return z
    res = linprog(
        np.zeros(p.n),
        A_ub=p.G,
        b_ub=p.h,
        bounds=list(zip(np.where(np.isfinite(p.lb), p.lb, None), np.where(np.isfinite(p.ub), p.ub, None))),
        method="highs",
    )
    if res.status != 0:
        raise QpSolverError(f"no feasible point: {res.message}")
    return np.clip(res.x, p.lb, p.ub)


def solve_qp(p: QpProblem, x0=None, max_iter: int | None = None, tol: float = 1e-10) -> QpSolution:
    """Solve ``p`` starting from ``x0`` (clipped into the box) or the origin.

    Variables with ``lb == ub`` are eliminated before iterating.
    """
    fixed = p.lb == p.ub
    if np.any(fixed):
        return _solve_reduced(p, fixed, x0, max_iter, tol)
    A, b, n_bound_rows = _constraint_rows(p)
    m, n = A.shape
    P = p.H + p.H.T
    z = _feasible_start(p, x0, tol)
    if max_iter is None:
        max_iter = 10 * (n + m) + 50

    # bound rows active at the start are linearly independent by construction
    slack = b - A @ z
    W = [i for i in range(n_bound_rows) if abs(slack[i]) <= tol]

    for it in range(1, max_iter + 1):
        g = P @ z + p.f
        k = len(W)
        AW = A[W]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = P
        K[:n, n:] = AW.T
        K[n:, :n] = AW
        rhs = np.concatenate([-g, np.zeros(k)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError as exc:
            raise QpSolverError(f"singular KKT system: {exc}", best=z) from exc
        step, lam = sol[:n], sol[n:]
        if np.linalg.norm(step, np.inf) <= tol * (1.0 + np.linalg.norm(z, np.inf)):
            if k == 0 or lam.min() >= -1e-9 * (1.0 + np.abs(g).max()):
                return QpSolution(x=z, objective=p.objective(z), iterations=it, active=tuple(sorted(W)))
            W.pop(int(np.argmin(lam)))
            continue
        alpha, blocking = 1.0, None
        Ap = A @ step
        for i in range(m):
            if i in W or Ap[i] <= tol:
                continue
            a_i = max(b[i] - A[i] @ z, 0.0) / Ap[i]
            if a_i < alpha:
                alpha, blocking = a_i, i
        z = z + alpha * step
        if blocking is not None:
            W.append(blocking)
    raise QpSolverError(f"iteration limit ({max_iter}) reached", best=z)


def _solve_reduced(p: QpProblem, fixed, x0, max_iter, tol) -> QpSolution:
    free = ~fixed
    zf = p.lb[fixed]
    Hs = 0.5 * (p.H + p.H.T)
    slack = None
    if p.slack_index is not None and free[p.slack_index]:
        slack = int(np.count_nonzero(free[: p.slack_index]))
    sub = QpProblem(
        H=Hs[np.ix_(free, free)],
        f=p.f[free] + 2.0 * Hs[np.ix_(free, fixed)] @ zf,
        lb=p.lb[free],
        ub=p.ub[free],
        G=p.G[:, free],
        h=p.h - p.G[:, fixed] @ zf,
        slack_index=slack,
    )
    z = p.lb.copy()
    if sub.n == 0:
        if sub.G.shape[0] and np.any(sub.h < -tol):
            raise QpSolverError("no feasible point: fixed variables violate the general rows")
        return QpSolution(x=z, objective=p.objective(z), iterations=0, active=())
    start = None if x0 is None else np.asarray(x0, dtype=float)[free]
    try:
        sol = solve_qp(sub, start, max_iter, tol)
    except QpSolverError as exc:
        if exc.best is not None:
            best = z.copy()
            best[free] = exc.best
            exc.best = best
        raise
    z[free] = sol.x
    return QpSolution(x=z, objective=p.objective(z), iterations=sol.iterations, active=sol.active)
