from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from chaseplan.corridor import CorridorEntry, CorridorSequence, interpolate_plan
from chaseplan.errors import QPInfeasibleError
from chaseplan.preplan import WaypointPlan
from chaseplan.trajopt import (
    QuadraticProgram,
    assemble_qp,
    evaluate,
    generate_trajectory,
    jerk_cost,
    kkt_residuals,
    polynomial_basis,
    solution_to_trajectory,
    solve_qp,
    yaw_reference,
)
from chaseplan.world import ChaserState, PlannerConfig


class TestJerkCost:
    def test_cubic_single_entry(self):
        T = 1.7
        G = jerk_cost([0.0, T], order=3)[0]
        expect = np.zeros((4, 4))
        expect[3, 3] = 36.0 * T
        assert np.allclose(G, expect, atol=1e-12)

    def test_quadratic_is_zero(self):
        G = jerk_cost([0.0, 2.0], order=2)[0]
        assert np.all(G == 0.0)

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(4)
        knots = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 2.0, 3))])
        blocks = jerk_cost(knots, order=6)
        for n, G in enumerate(blocks):
            T = knots[n + 1] - knots[n]
            for j in range(7):
                for k in range(7):
                    val, _ = quad(
                        lambda s: polynomial_basis(s, 6, 3)[j] * polynomial_basis(s, 6, 3)[k],
                        0.0, T)
                    assert G[j, k] == pytest.approx(val, abs=1e-9 * max(1.0, abs(val)))


def make_plan(n_segments, dt=1.25, start=(0.0, 0.0, 2.0), step=(0.8, 0.3, 0.0)):
    t = np.arange(n_segments + 1) * dt
    wp = np.array(start) + np.outer(np.arange(n_segments + 1), np.array(step))
    return WaypointPlan(timestamps=t, waypoints=wp, cost=0.0)


def boxes_around_plan(plan, per_segment=2, half=1.0, shrink=0.9):
    entries = []
    t = plan.timestamps
    for n in range(1, plan.n_segments + 1):
        dt = t[n] - t[n - 1]
        for i in range(1, per_segment + 1):
            tau = float(t[n - 1] + i * dt / (per_segment + 1))
            entries.append(CorridorEntry(tau=tau, center=interpolate_plan(plan, tau),
                                         half_extent=np.full(3, half)))
    return CorridorSequence(entries=tuple(entries), plan=plan, shrink=shrink)


def state_at(plan, vel=(0.0, 0.0, 0.0), acc=(0.0, 0.0, 0.0)):
    return ChaserState(pos=plan.waypoints[0].astype(float), vel=np.asarray(vel, float),
                       acc=np.asarray(acc, float), stamp=float(plan.timestamps[0]))


class TestAssemble:
    def test_counts_single_segment_no_corridors(self):
        plan = make_plan(1)
        corridors = CorridorSequence(entries=(), plan=plan, shrink=0.9)
        qp = assemble_qp(state_at(plan), plan, corridors, lam=2.0, order=6)
        assert qp.dim == 3 * 7
        assert qp.A.shape[0] == 3 * 3  # initial pos/vel/acc per axis
        assert qp.C.shape[0] == 0

    def test_counts_table_sizes(self):
        plan = make_plan(4)
        corridors = boxes_around_plan(plan, per_segment=2)
        qp = assemble_qp(state_at(plan), plan, corridors, lam=2.0, order=6)
        per_axis = qp.vars_per_axis
        assert per_axis == 28
        assert qp.dim == 3 * 28
        assert qp.A.shape[0] == 3 * (3 + 3 * 3)
        stored = qp.C.shape[0]
        assert stored == 3 * 8          # one two-sided row per corridor per axis
        assert 2 * (stored // 3) == 16  # both sides counted, per axis

    def test_axis_blocks_decoupled(self):
        plan = make_plan(3)
        corridors = boxes_around_plan(plan)
        qp = assemble_qp(state_at(plan), plan, corridors, lam=2.0, order=6)
        nv = qp.vars_per_axis
        for a in range(3):
            for b in range(3):
                if a == b:
                    continue
                assert np.all(qp.H[a * nv:(a + 1) * nv, b * nv:(b + 1) * nv] == 0.0)
        for row in range(qp.A.shape[0]):
            touched = {a for a in range(3) if np.any(qp.A[row, a * nv:(a + 1) * nv])}
            assert len(touched) == 1
        for row in range(qp.C.shape[0]):
            touched = {a for a in range(3) if np.any(qp.C[row, a * nv:(a + 1) * nv])}
            assert len(touched) == 1

    def test_cost_matrix_psd(self):
        plan = make_plan(4)
        corridors = boxes_around_plan(plan)
        qp = assemble_qp(state_at(plan), plan, corridors, lam=2.0, order=6)
        assert np.min(np.linalg.eigvalsh(qp.H)) >= -1e-9

    def test_timestamp_mismatch_errors(self):
        plan = make_plan(2)
        corridors = boxes_around_plan(plan)
        bad_state = ChaserState(pos=plan.waypoints[0], vel=np.zeros(3),
                                acc=np.zeros(3), stamp=0.7)
        with pytest.raises(ValueError, match="stamp"):
            assemble_qp(bad_state, plan, corridors, lam=2.0, order=6)


def random_pd_qp(rng, n=8, m_eq=0, m_ineq=0):
    """Random strictly convex QP, feasible by construction around a seed point."""
    A = rng.normal(size=(n, n))
    H = A @ A.T + n * np.eye(n)
    g = rng.normal(size=n)
    x0 = rng.normal(size=n)
    Aeq = rng.normal(size=(m_eq, n))
    beq = Aeq @ x0 if m_eq else np.zeros(0)
    C = rng.normal(size=(m_ineq, n))
    mid = C @ x0 if m_ineq else np.zeros(0)
    lo = mid - rng.uniform(0.05, 1.0, size=m_ineq)
    up = mid + rng.uniform(0.05, 1.0, size=m_ineq)
    return QuadraticProgram(H=H, g=g, A=Aeq, b=beq, C=C, lo=lo, up=up)


class TestSolveQp:
    def test_unconstrained_matches_normal_equations(self):
        rng = np.random.default_rng(8)
        qp = random_pd_qp(rng, n=10)
        sol = solve_qp(qp)
        expect = -np.linalg.solve(qp.H, qp.g)
        assert np.max(np.abs(sol.x - expect)) < 1e-9

    def test_equality_only_matches_kkt_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            qp = random_pd_qp(rng, n=9, m_eq=3)
            sol = solve_qp(qp)
            n, m = 9, 3
            kkt = np.zeros((n + m, n + m))
            kkt[:n, :n] = qp.H
            kkt[n:, :n] = qp.A
            kkt[:n, n:] = qp.A.T
            rhs = np.concatenate([-qp.g, qp.b])
            oracle = np.linalg.solve(kkt, rhs)[:n]
            assert np.max(np.abs(sol.x - oracle)) < 1e-8

    def test_active_box_satisfies_kkt(self):
        rng = np.random.default_rng(10)
        hits = 0
        for _ in range(25):
            qp = random_pd_qp(rng, n=7, m_eq=2, m_ineq=5)
            sol = solve_qp(qp)
            res = kkt_residuals(qp, sol)
            assert all(v <= 1e-6 for v in res.values()), res
            if np.any(sol.up_multipliers > 1e-8) or np.any(sol.lo_multipliers > 1e-8):
                hits += 1
        assert hits > 5  # boxes actually bind in a healthy share of draws

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        qp = random_pd_qp(rng, n=7, m_eq=2, m_ineq=6)
        a = solve_qp(qp)
        b = solve_qp(qp)
        assert np.array_equal(a.x, b.x)
        assert a.iterations == b.iterations

    def test_contradictory_bound_and_equality(self):
        H = np.eye(1)
        qp = QuadraticProgram(H=H, g=np.zeros(1), A=np.eye(1), b=np.zeros(1),
                              C=np.eye(1), lo=np.array([1.0]), up=np.array([2.0]))
        with pytest.raises(QPInfeasibleError):
            solve_qp(qp)

    def test_crossed_bounds(self):
        qp = QuadraticProgram(H=np.eye(2), g=np.zeros(2),
                              A=np.zeros((0, 2)), b=np.zeros(0),
                              C=np.eye(2), lo=np.array([1.0, 0.0]),
                              up=np.array([0.0, 1.0]))
        with pytest.raises(QPInfeasibleError, match="lower bound"):
            solve_qp(qp)


def default_config(**kw):
    cfg = PlannerConfig(**kw)
    cfg.validate()
    return cfg


class TestGenerateTrajectory:
    def test_zero_everything_stays_zero(self):
        plan = make_plan(3, start=(0, 0, 0), step=(0, 0, 0))
        corridors = CorridorSequence(entries=(), plan=plan, shrink=0.9)
        cfg = default_config(lam=0.0)
        traj = generate_trajectory(state_at(plan), plan, corridors, cfg)
        for tau in np.linspace(0, plan.timestamps[-1], 17):
            assert np.max(np.abs(evaluate(traj, tau, 0))) < 1e-9

    def test_straight_constant_velocity_line(self):
        v = np.array([0.8, 0.3, 0.0]) / 1.25
        plan = make_plan(4)
        corridors = boxes_around_plan(plan, half=2.0)
        cfg = default_config(lam=2.0)
        state = state_at(plan, vel=v)
        traj = generate_trajectory(state, plan, corridors, cfg)
        for tau in np.linspace(0, plan.timestamps[-1], 21):
            expect = plan.waypoints[0] + v * tau
            assert np.max(np.abs(evaluate(traj, tau, 0) - expect)) < 1e-6
        # jerk objective vanishes on the straight line
        jerk = sum(float(traj.coefficients[n, a] @ G @ traj.coefficients[n, a])
                   for n, G in enumerate(jerk_cost(plan.timestamps, 6))
                   for a in range(3))
        assert jerk < 1e-6

    def test_waypoint_tracking_tightens_with_lambda(self):
        rng = np.random.default_rng(12)
        plan = make_plan(4, step=(0.9, -0.4, 0.2))
        # wiggle the waypoints so the pull actually matters
        wp = plan.waypoints.copy()
        wp[1:] += rng.uniform(-0.3, 0.3, size=(4, 3))
        plan = WaypointPlan(timestamps=plan.timestamps, waypoints=wp, cost=0.0)
        corridors = boxes_around_plan(plan, half=3.0)
        errs = []
        for lam in (2.0, 20.0, 200.0):
            cfg = default_config(lam=lam)
            traj = generate_trajectory(state_at(plan), plan, corridors, cfg)
            err = [np.linalg.norm(evaluate(traj, float(plan.timestamps[n]), 0)
                                  - plan.waypoints[n])
                   for n in range(1, 5)]
            errs.append(err)
        for n in range(4):
            assert errs[1][n] <= errs[0][n] + 1e-9
            assert errs[2][n] <= errs[1][n] + 1e-9

    def test_c2_continuity_and_corridor_satisfaction(self):
        plan = make_plan(4, step=(0.9, -0.5, 0.25))
        corridors = boxes_around_plan(plan, half=0.35)
        cfg = default_config(lam=2.0)
        traj = generate_trajectory(state_at(plan), plan, corridors, cfg)
        for n in range(1, 4):
            tn = float(plan.timestamps[n])
            for order in range(3):
                left = traj.coefficients[n - 1] @ np.array(
                    polynomial_basis(tn - float(plan.timestamps[n - 1]), 6, order))
                right = traj.coefficients[n] @ np.array(polynomial_basis(0.0, 6, order))
                assert np.max(np.abs(left - right)) <= 1e-6
        for e in corridors.entries:
            x = evaluate(traj, e.tau, 0)
            assert np.all(x >= e.center - e.half_extent - 1e-6)
            assert np.all(x <= e.center + e.half_extent + 1e-6)

    def test_starts_exactly_at_state(self):
        plan = make_plan(3)
        corridors = boxes_around_plan(plan)
        cfg = default_config(lam=2.0)
        vel = np.array([0.4, -0.2, 0.1])
        acc = np.array([-0.1, 0.3, 0.05])
        state = state_at(plan, vel=vel, acc=acc)
        traj = generate_trajectory(state, plan, corridors, cfg)
        assert np.max(np.abs(evaluate(traj, 0.0, 0) - plan.waypoints[0])) < 1e-8
        assert np.max(np.abs(evaluate(traj, 0.0, 1) - vel)) < 1e-8
        assert np.max(np.abs(evaluate(traj, 0.0, 2) - acc)) < 1e-8

    def test_joint_equals_per_axis(self):
        plan = make_plan(3, step=(0.8, 0.2, -0.1))
        corridors = boxes_around_plan(plan, half=0.4)
        qp = assemble_qp(state_at(plan), plan, corridors, lam=2.0, order=6)
        joint = solve_qp(qp).x
        nv = qp.vars_per_axis
        m1 = qp.A.shape[0] // 3
        c1 = qp.C.shape[0] // 3
        for a in range(3):
            sub = QuadraticProgram(
                H=qp.H[a * nv:(a + 1) * nv, a * nv:(a + 1) * nv],
                g=qp.g[a * nv:(a + 1) * nv],
                A=qp.A[a * m1:(a + 1) * m1, a * nv:(a + 1) * nv],
                b=qp.b[a * m1:(a + 1) * m1],
                C=qp.C[a * c1:(a + 1) * c1, a * nv:(a + 1) * nv],
                lo=qp.lo[a * c1:(a + 1) * c1],
                up=qp.up[a * c1:(a + 1) * c1])
            x_axis = solve_qp(sub).x
            assert np.max(np.abs(x_axis - joint[a * nv:(a + 1) * nv])) < 1e-9

    def test_infeasible_retry_with_relaxed_corridors(self, monkeypatch, wall_field):
        plan = make_plan(2, start=(6.0, 9.0, 1.6), step=(0.8, 0.0, 0.0))
        # two disjoint boxes at the same time make the QP infeasible outright
        bad = CorridorSequence(entries=(
            CorridorEntry(tau=0.4, center=plan.waypoints[0],
                          half_extent=np.full(3, 0.1)),
            CorridorEntry(tau=0.4, center=plan.waypoints[0] + 5.0,
                          half_extent=np.full(3, 0.1)),
        ), plan=plan, shrink=0.9)
        cfg = default_config(lam=2.0)
        with pytest.raises(QPInfeasibleError):
            generate_trajectory(state_at(plan), plan, bad, cfg)

        import chaseplan.trajopt as mod
        monkeypatch.setattr(mod, "build_corridors",
                            lambda *a, **k: boxes_around_plan(plan, half=2.0))
        traj = generate_trajectory(state_at(plan), plan, bad, cfg, field=wall_field)
        assert traj.n_segments == 2


class TestEvaluate:
    def _traj(self):
        plan = make_plan(3, step=(0.7, -0.2, 0.15))
        corridors = boxes_around_plan(plan)
        cfg = default_config(lam=2.0)
        return plan, generate_trajectory(state_at(plan, vel=(0.3, 0, 0)),
                                         plan, corridors, cfg)

    def test_initial_position(self):
        plan, traj = self._traj()
        assert np.allclose(evaluate(traj, 0.0, 0), plan.waypoints[0], atol=1e-8)

    def test_central_difference_consistency(self):
        _, traj = self._traj()
        h = 1e-4
        for tau in (0.3, 1.1, 2.6, 3.4):
            num = (evaluate(traj, tau + h, 0) - evaluate(traj, tau - h, 0)) / (2 * h)
            assert np.max(np.abs(num - evaluate(traj, tau, 1))) < 1e-6

    def test_final_time_from_last_segment(self):
        plan, traj = self._traj()
        x = evaluate(traj, float(plan.timestamps[-1]), 0)
        assert np.all(np.isfinite(x))

    def test_out_of_domain(self):
        _, traj = self._traj()
        with pytest.raises(ValueError):
            evaluate(traj, traj.t_end + 0.5, 0)


class TestYaw:
    def _hover_traj(self, pos):
        plan = WaypointPlan(timestamps=np.array([0.0, 1.0]),
                            waypoints=np.array([pos, pos], dtype=float), cost=0.0)
        coeffs = np.zeros((1, 3, 7))
        coeffs[0, :, 0] = pos
        return solution_to_trajectory(plan, 6, coeffs.transpose(1, 0, 2).reshape(-1))

    def test_target_north(self):
        traj = self._hover_traj([5.0, 5.0, 2.0])
        path = ((0.0, np.array([5.0, 9.0, 0.0])), (1.0, np.array([5.0, 9.0, 0.0])))
        assert yaw_reference(traj, path, 0.5) == pytest.approx(np.pi / 2)

    def test_target_east(self):
        traj = self._hover_traj([5.0, 5.0, 2.0])
        path = ((0.0, np.array([9.0, 5.0, 0.0])), (1.0, np.array([9.0, 5.0, 0.0])))
        assert yaw_reference(traj, path, 0.5) == pytest.approx(0.0)

    def test_directly_above_holds_previous(self):
        traj = self._hover_traj([5.0, 5.0, 2.0])
        path = ((0.0, np.array([5.0, 5.0, 0.0])), (1.0, np.array([5.0, 5.0, 0.0])))
        assert yaw_reference(traj, path, 0.5, prev_yaw=1.234) == 1.234
