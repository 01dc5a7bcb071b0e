"""Smooth trajectory generation by corridor-constrained quadratic programming.

The chaser path is one polynomial per plan segment and axis, parametrized in
local segment time for conditioning. The objective trades squared-jerk
smoothness against soft waypoint attraction; equality constraints pin the
initial state and enforce C2 continuity at interior knots; corridor boxes
become two-sided linear bounds at their subsample times. The dense
active-set solver works directly on the KKT system and certifies solutions
by their KKT residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corridor import CorridorSequence, build_corridors
from .errors import QPError, QPInfeasibleError, QPIterationLimitError
from .fields import DistanceField
from .preplan import WaypointPlan, target_position
from .world import ChaserState, PlannerConfig

TIKHONOV = 1e-10
FEAS_TOL = 1e-9
DUAL_TOL = 1e-9


def polynomial_basis(s: float, order: int, deriv: int = 0) -> np.ndarray:
    """Derivative-of-monomial row [d^n/ds^n s^k for k = 0..order] at s."""
    v = np.zeros(order + 1)
    for k in range(deriv, order + 1):
        c = 1.0
        for j in range(deriv):
            c *= k - j
        v[k] = c * s ** (k - deriv)
    return v


def jerk_cost(knots, order: int) -> list[np.ndarray]:
    """Per-segment Gram matrices G with integral of squared jerk = p^T G p.

    Orders below 3 yield zero matrices: their jerk vanishes identically.
    """
    knots = np.asarray(knots, dtype=float)
    blocks = []
    for n in range(len(knots) - 1):
        T = float(knots[n + 1] - knots[n])
        G = np.zeros((order + 1, order + 1))
        for j in range(3, order + 1):
            cj = j * (j - 1) * (j - 2)
            for k in range(3, order + 1):
                ck = k * (k - 1) * (k - 2)
                p = j + k - 5
                G[j, k] = cj * ck * T ** p / p
        blocks.append(G)
    return blocks


@dataclass(frozen=True)
class QuadraticProgram:
    """min 0.5 x^T H x + g^T x  s.t.  A x = b,  lo <= C x <= up."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    lo: np.ndarray
    up: np.ndarray
    n_axes: int = 1
    vars_per_axis: int = 0

    def __post_init__(self):
        n = self.H.shape[0]
        assert self.H.shape == (n, n) and self.g.shape == (n,)
        assert self.A.shape[1] == n and self.A.shape[0] == self.b.shape[0]
        assert self.C.shape[1] == n and self.C.shape[0] == self.lo.shape[0] == self.up.shape[0]
        assert np.max(np.abs(self.H - self.H.T), initial=0.0) <= 1e-12

    @property
    def dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    eq_multipliers: np.ndarray
    lo_multipliers: np.ndarray
    up_multipliers: np.ndarray
    iterations: int


def kkt_residuals(qp: QuadraticProgram, sol: QpSolution) -> dict:
    """Stationarity / primal / dual / complementary-slackness violations."""
    x = sol.x
    stat = qp.H @ x + qp.g
    if qp.A.shape[0]:
        stat = stat + qp.A.T @ sol.eq_multipliers
    slack_up = np.zeros(0)
    slack_lo = np.zeros(0)
    if qp.C.shape[0]:
        stat = stat + qp.C.T @ (sol.up_multipliers - sol.lo_multipliers)
        cx = qp.C @ x
        slack_up = qp.up - cx
        slack_lo = cx - qp.lo
    return {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "primal_eq": float(np.max(np.abs(qp.A @ x - qp.b), initial=0.0)) if qp.A.shape[0] else 0.0,
        "primal_ineq": float(max(np.max(-slack_up, initial=0.0),
                                 np.max(-slack_lo, initial=0.0), 0.0)),
        "dual": float(max(np.max(-sol.up_multipliers, initial=0.0),
                          np.max(-sol.lo_multipliers, initial=0.0), 0.0)),
        "complementarity": float(max(
            np.max(np.abs(sol.up_multipliers * slack_up), initial=0.0),
            np.max(np.abs(sol.lo_multipliers * slack_lo), initial=0.0), 0.0)),
    }


def _solve_kkt(H, g, A, b):
    """Equality-constrained minimizer and multipliers, with one refinement step."""
    n = H.shape[0]
    me = A.shape[0]
    kkt = np.zeros((n + me, n + me))
    kkt[:n, :n] = H
    if me:
        kkt[n:, :n] = A
        kkt[:n, n:] = A.T
    rhs = np.concatenate([-g, b])
    try:
        sol = np.linalg.solve(kkt, rhs)
        sol = sol + np.linalg.solve(kkt, rhs - kkt @ sol)
    except np.linalg.LinAlgError:
        raise QPInfeasibleError(
            "QP infeasible: equality constraints are inconsistent") from None
    return sol[:n], sol[n:]


def solve_qp(qp: QuadraticProgram, max_iter: int | None = None) -> QpSolution:
    """Dual active-set method (Goldfarb-Idnani scheme) on the dense KKT system.

    Starts at the equality-constrained optimum and repeatedly drives the most
    violated box side to feasibility with primal/dual steps, dropping active
    sides whose multiplier would go negative. Strict convexity of the
    regularized cost guarantees termination; deterministic for a fixed
    problem.
    """
    n = qp.dim
    m = qp.C.shape[0]
    me = qp.A.shape[0]
    if m and np.any(qp.lo > qp.up + FEAS_TOL):
        raise QPInfeasibleError("QP infeasible: a lower bound exceeds its upper bound")
    if max_iter is None:
        max_iter = 200 + 40 * m

    # one-sided constraints normal(j) @ x >= bounds[j]; j < m is the lower
    # side of box row j, j >= m the negated upper side of row j - m
    def normal(j):
        return qp.C[j] if j < m else -qp.C[j - m]

    bounds = np.concatenate([qp.lo, -qp.up]) if m else np.zeros(0)

    x, lam_raw = _solve_kkt(qp.H, qp.g, qp.A, qp.b)
    u_eq = -lam_raw                      # stationarity: Hx + g - N^T u = 0
    active: list[int] = []
    u: list[float] = []

    def direction(j):
        rows = ([qp.A] if me else []) + [normal(k)[None, :] for k in active]
        N = np.vstack(rows) if rows else np.zeros((0, n))
        k = N.shape[0]
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = qp.H
        if k:
            kkt[n:, :n] = N
            kkt[:n, n:] = N.T
        rhs = np.concatenate([normal(j), np.zeros(k)])
        try:
            sol = np.linalg.solve(kkt, rhs)
            sol = sol + np.linalg.solve(kkt, rhs - kkt @ sol)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        return sol[:n], sol[n:n + me], sol[n + me:]

    def package(iterations):
        mu_lo = np.zeros(m)
        mu_up = np.zeros(m)
        for k, uj in zip(active, u):
            if k < m:
                mu_lo[k] = max(uj, 0.0)
            else:
                mu_up[k - m] = max(uj, 0.0)
        return QpSolution(x=x, eq_multipliers=-u_eq, lo_multipliers=mu_lo,
                          up_multipliers=mu_up, iterations=iterations)

    iterations = 0
    while True:
        iterations += 1
        if iterations > max_iter:
            raise QPIterationLimitError(
                f"QP active-set iteration limit {max_iter} reached",
                residuals=kkt_residuals(qp, package(iterations)))
        if m:
            slack = np.concatenate([qp.C @ x - qp.lo, qp.up - qp.C @ x])
            for k in active:
                slack[k] = np.inf
            p = int(np.argmin(slack))
            worst = float(slack[p])
        else:
            worst = np.inf
        if worst >= -FEAS_TOL:
            return package(iterations)

        n_p = normal(p)
        u_p = 0.0
        zero_dir = 1e-11 * (1.0 + float(n_p @ n_p))
        while True:
            iterations += 1
            if iterations > max_iter:
                raise QPIterationLimitError(
                    f"QP active-set iteration limit {max_iter} reached",
                    residuals=kkt_residuals(qp, package(iterations)))
            z, w_eq, r = direction(p)
            denom = float(n_p @ z)
            # dual blocking step: first active side whose multiplier hits zero
            t1, k_block = np.inf, -1
            for k, uj in enumerate(u):
                if r[k] > DUAL_TOL:
                    tk = uj / r[k]
                    if tk < t1 - 1e-15:
                        t1, k_block = tk, k
            if denom <= zero_dir:
                if not np.isfinite(t1):
                    raise QPInfeasibleError(
                        "QP infeasible: a box side cannot be reached from the "
                        "active constraint set")
                step, full = t1, False
            else:
                t2 = -(float(n_p @ x) - float(bounds[p])) / denom
                if t1 < t2:
                    step, full = t1, False
                else:
                    step, full = max(t2, 0.0), True
            if denom > zero_dir:
                x = x + step * z
            if me:
                u_eq = u_eq - step * w_eq
            for k in range(len(u)):
                u[k] -= step * r[k]
            u_p += step
            if full:
                active.append(p)
                u.append(u_p)
                break
            active.pop(k_block)
            u.pop(k_block)


def _segment_index(timestamps: np.ndarray, tau: float) -> int:
    if tau < timestamps[0] - 1e-9 or tau > timestamps[-1] + 1e-9:
        raise ValueError(f"tau={tau} outside trajectory domain "
                         f"[{timestamps[0]}, {timestamps[-1]}]")
    n = int(np.searchsorted(timestamps, tau, side="right")) - 1
    return min(max(n, 0), len(timestamps) - 2)


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """Per-segment, per-axis polynomial coefficients in local segment time."""

    timestamps: np.ndarray       # (N+1,)
    coefficients: np.ndarray     # (N, 3, K+1)

    @property
    def n_segments(self) -> int:
        return self.coefficients.shape[0]

    @property
    def order(self) -> int:
        return self.coefficients.shape[2] - 1

    @property
    def t_start(self) -> float:
        return float(self.timestamps[0])

    @property
    def t_end(self) -> float:
        return float(self.timestamps[-1])


def evaluate(traj: PiecewiseTrajectory, tau: float, order: int = 0) -> np.ndarray:
    """Position (order 0) through jerk (order 3) at time tau."""
    n = _segment_index(traj.timestamps, tau)
    s = float(tau - traj.timestamps[n])
    basis = polynomial_basis(s, traj.order, order)
    return traj.coefficients[n] @ basis


def evaluate_state(traj: PiecewiseTrajectory, tau: float) -> ChaserState:
    return ChaserState(pos=evaluate(traj, tau, 0), vel=evaluate(traj, tau, 1),
                       acc=evaluate(traj, tau, 2), stamp=float(tau))


def yaw_reference(traj: PiecewiseTrajectory, target_path, tau: float,
                  prev_yaw: float = 0.0) -> float:
    """Heading that points the body x-axis at the target; holds on degeneracy."""
    chaser = evaluate(traj, tau, 0)
    target = target_position(target_path, tau)
    dx = float(target[0] - chaser[0])
    dy = float(target[1] - chaser[1])
    if math.hypot(dx, dy) < 1e-6:
        return prev_yaw
    return math.atan2(dy, dx)


def assemble_qp(state: ChaserState, plan: WaypointPlan, corridors: CorridorSequence,
                lam: float, order: int) -> QuadraticProgram:
    """Joint three-axis QP over all segment coefficients.

    Axis blocks are fully decoupled: the cost is block-diagonal and every
    constraint row touches a single axis.
    """
    t = plan.timestamps
    if abs(state.stamp - t[0]) > 1e-9:
        raise ValueError(f"state stamp {state.stamp} does not match plan start {t[0]}")
    if corridors.plan.timestamps.shape != t.shape or \
            not np.allclose(corridors.plan.timestamps, t):
        raise ValueError("corridor sequence does not match the plan timestamps")
    for e in corridors.entries:
        if e.tau < t[0] - 1e-9 or e.tau > t[-1] + 1e-9:
            raise ValueError(f"corridor time {e.tau} outside plan span")

    n_seg = plan.n_segments
    kp1 = order + 1
    nv = n_seg * kp1  # per axis

    grams = jerk_cost(t, order)
    G = np.zeros((nv, nv))
    for n, Gn in enumerate(grams):
        G[n * kp1:(n + 1) * kp1, n * kp1:(n + 1) * kp1] = Gn

    # soft waypoint rows: trajectory value at the end of each segment
    E = np.zeros((n_seg, nv))
    for n in range(1, n_seg + 1):
        s = float(t[n] - t[n - 1])
        E[n - 1, (n - 1) * kp1:n * kp1] = polynomial_basis(s, order, 0)

    H1 = 2.0 * (G + lam * E.T @ E) + TIKHONOV * np.eye(nv)
    H1 = 0.5 * (H1 + H1.T)

    n_eq = 3 + 3 * (n_seg - 1)
    A1 = np.zeros((n_eq, nv))
    row = 0
    for d in range(3):
        A1[row, :kp1] = polynomial_basis(0.0, order, d)
        row += 1
    for n in range(1, n_seg):
        s = float(t[n] - t[n - 1])
        for d in range(3):
            A1[row, (n - 1) * kp1:n * kp1] = polynomial_basis(s, order, d)
            A1[row, n * kp1:(n + 1) * kp1] = -polynomial_basis(0.0, order, d)
            row += 1

    C1 = np.zeros((len(corridors.entries), nv))
    for k, e in enumerate(corridors.entries):
        n = _segment_index(t, e.tau)
        C1[k, n * kp1:(n + 1) * kp1] = polynomial_basis(float(e.tau - t[n]), order, 0)

    # stack the three identical axis blocks
    dim = 3 * nv
    H = np.zeros((dim, dim))
    g = np.zeros(dim)
    A = np.zeros((3 * n_eq, dim))
    b = np.zeros(3 * n_eq)
    C = np.zeros((3 * len(corridors.entries), dim))
    lo = np.zeros(C.shape[0])
    up = np.zeros(C.shape[0])
    init = (state.pos, state.vel, state.acc)
    for a in range(3):
        sl = slice(a * nv, (a + 1) * nv)
        H[sl, sl] = H1
        g[a * nv:(a + 1) * nv] = -2.0 * lam * (E.T @ plan.waypoints[1:, a])
        A[a * n_eq:(a + 1) * n_eq, sl] = A1
        b_axis = np.zeros(n_eq)
        for d in range(3):
            b_axis[d] = init[d][a]
        b[a * n_eq:(a + 1) * n_eq] = b_axis
        rows = slice(a * len(corridors.entries), (a + 1) * len(corridors.entries))
        C[rows, sl] = C1
        lo[rows] = [e.center[a] - e.half_extent[a] for e in corridors.entries]
        up[rows] = [e.center[a] + e.half_extent[a] for e in corridors.entries]

    return QuadraticProgram(H=H, g=g, A=A, b=b, C=C, lo=lo, up=up,
                            n_axes=3, vars_per_axis=nv)


def solution_to_trajectory(plan: WaypointPlan, order: int, x: np.ndarray) -> PiecewiseTrajectory:
    n_seg = plan.n_segments
    kp1 = order + 1
    nv = n_seg * kp1
    coeffs = np.empty((n_seg, 3, kp1))
    for a in range(3):
        block = x[a * nv:(a + 1) * nv]
        for n in range(n_seg):
            coeffs[n, a] = block[n * kp1:(n + 1) * kp1]
    return PiecewiseTrajectory(timestamps=plan.timestamps.copy(), coefficients=coeffs)


def generate_trajectory(state: ChaserState, plan: WaypointPlan,
                        corridors: CorridorSequence, config: PlannerConfig,
                        field: DistanceField | None = None) -> PiecewiseTrajectory:
    """Assemble and solve the chasing QP.

    On infeasibility the corridors are rebuilt once without shrink (when the
    clearance field is available) before the error propagates.
    """
    qp = assemble_qp(state, plan, corridors, config.lam, config.poly_order)
    try:
        sol = solve_qp(qp)
    except QPError:
        if field is None:
            raise
        relaxed = build_corridors(field, plan, config.corridors_per_segment,
                                  shrink=1.0, max_half_extent=config.d_max / 2.0)
        qp = assemble_qp(state, plan, relaxed, config.lam, config.poly_order)
        sol = solve_qp(qp)
    return solution_to_trajectory(plan, config.poly_order, sol.x)
