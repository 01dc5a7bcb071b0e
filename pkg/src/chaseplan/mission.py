"""Receding-horizon chasing missions over scripted target paths.

Each mission repeatedly forecasts the target, preplans waypoints, builds
corridors, solves the trajectory QP, and advances the chaser by evaluating
the planned trajectory exactly. The log samples the executed motion at a
fixed rate; metrics summarize travel, visibility, occlusion and safety.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .corridor import DEFAULT_SHRINK, CorridorSequence, build_corridors
from .errors import (
    ChasePlanError,
    CorridorCollapseError,
    MissionStageError,
    PlanningInfeasibleError,
    QPError,
    ScenarioError,
)
from .fields import DistanceField, clearance_many, compute_distance_field
from .preplan import WaypointPlan, forecast_window, preplan, target_position
from .trajopt import PiecewiseTrajectory, evaluate, evaluate_state, generate_trajectory
from .world import ChaserState, Scenario, VoxelGrid, voxelize, with_config

DEFAULT_LOG_RATE = 50.0

LOG_COLUMNS = (
    "t", "px", "py", "pz", "vx", "vy", "vz", "tx", "ty", "tz",
    "visibility", "chaser_clearance", "target_clearance", "below_r_safe",
)


@dataclass(frozen=True)
class ReplanRecord:
    index: int
    trigger: float
    ok: bool
    stage_timings: dict
    plan: WaypointPlan | None = None
    corridors: CorridorSequence | None = None
    trajectory: PiecewiseTrajectory | None = None
    layer_sizes: tuple[int, ...] = ()
    failed_stage: str | None = None
    reason: str | None = None


@dataclass(frozen=True)
class MissionLog:
    times: np.ndarray
    chaser_pos: np.ndarray
    chaser_vel: np.ndarray
    target_pos: np.ndarray
    visibility: np.ndarray
    chaser_clearance: np.ndarray
    target_clearance: np.ndarray
    below_r_safe: np.ndarray
    r_safe: float
    replans: tuple[ReplanRecord, ...] = ()
    edf_seconds: float = 0.0

    def trigger_times(self) -> list[float]:
        return [r.trigger for r in self.replans]


@dataclass(frozen=True)
class MissionMetrics:
    duration: float
    travel_distance: float
    avg_speed: float
    avg_visibility: float
    occlusion_duration: float
    min_chaser_clearance: float
    avg_target_clearance: float
    frac_below_r_safe: float
    n_replans: int = 0
    n_replan_failures: int = 0
    stage_seconds: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "travel_distance": self.travel_distance,
            "avg_speed": self.avg_speed,
            "avg_visibility": self.avg_visibility,
            "occlusion_duration": self.occlusion_duration,
            "min_chaser_clearance": self.min_chaser_clearance,
            "avg_target_clearance": self.avg_target_clearance,
            "frac_below_r_safe": self.frac_below_r_safe,
            "n_replans": self.n_replans,
            "n_replan_failures": self.n_replan_failures,
        }


def _trapezoid_avg(times: np.ndarray, values: np.ndarray) -> float:
    if len(times) < 2:
        return float(values[0]) if len(values) else 0.0
    dt = np.diff(times)
    mids = 0.5 * (values[:-1] + values[1:])
    total = float(np.sum(dt * mids))
    return total / float(times[-1] - times[0])


def compute_metrics(log: MissionLog) -> MissionMetrics:
    """Time-weighted mission summary from the sampled log."""
    t = log.times
    duration = float(t[-1] - t[0]) if len(t) > 1 else 0.0
    steps = np.linalg.norm(np.diff(log.chaser_pos, axis=0), axis=1) if len(t) > 1 else []
    travel = float(np.sum(steps))
    speed = np.linalg.norm(log.chaser_vel, axis=1)
    occluded = log.visibility <= 0.0
    if len(t) > 1:
        dt = np.diff(t)
        # an interval counts as occluded when both of its endpoint samples are
        occ = float(np.sum(dt * (occluded[:-1] & occluded[1:])))
    else:
        occ = 0.0
    stage_avg = {}
    ok = [r for r in log.replans if r.ok]
    if ok:
        keys = sorted({k for r in ok for k in r.stage_timings})
        for k in keys:
            stage_avg[k] = float(np.mean([r.stage_timings.get(k, 0.0) for r in ok]))
        stage_avg["total"] = float(np.mean(
            [sum(r.stage_timings.values()) for r in ok]))
    stage_avg["edf"] = log.edf_seconds
    return MissionMetrics(
        duration=duration,
        travel_distance=travel,
        avg_speed=_trapezoid_avg(t, speed),
        avg_visibility=_trapezoid_avg(t, log.visibility),
        occlusion_duration=occ,
        min_chaser_clearance=float(np.min(log.chaser_clearance)),
        avg_target_clearance=_trapezoid_avg(t, log.target_clearance),
        frac_below_r_safe=float(np.mean(log.below_r_safe)),
        n_replans=len(log.replans),
        n_replan_failures=sum(1 for r in log.replans if not r.ok),
        stage_seconds=stage_avg,
    )


def _build_log(scenario: Scenario, field: DistanceField, replans: list[ReplanRecord],
               t_start: float, t_end: float, rate: float, edf_seconds: float) -> MissionLog:
    n = int(np.floor((t_end - t_start) * rate + 1e-9)) + 1
    times = t_start + np.arange(n) / rate
    ok = [r for r in replans if r.ok]
    starts = np.array([r.trigger for r in ok])

    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    tgt = np.empty((n, 3))
    for i, ti in enumerate(times):
        k = int(np.searchsorted(starts, ti + 1e-12, side="right")) - 1
        k = max(k, 0)
        traj = ok[k].trajectory
        tau = min(max(ti, traj.t_start), traj.t_end)
        pos[i] = evaluate(traj, tau, 0)
        vel[i] = evaluate(traj, tau, 1)
        tgt[i] = target_position(scenario.target_path, ti)

    vis = _pairwise_visibility(field, pos, tgt)
    phi_c = clearance_many(field, pos)
    phi_p = clearance_many(field, tgt)
    below = phi_c < scenario.config.r_safe
    return MissionLog(
        times=times, chaser_pos=pos, chaser_vel=vel, target_pos=tgt,
        visibility=vis, chaser_clearance=phi_c, target_clearance=phi_p,
        below_r_safe=below, r_safe=scenario.config.r_safe,
        replans=tuple(replans), edf_seconds=edf_seconds,
    )


def _pairwise_visibility(field: DistanceField, pos: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    from . import _kernels
    step = field.default_step()
    return _kernels.segment_min_batch(
        field.values, field.grid.origin, 1.0 / field.resolution,
        np.ascontiguousarray(pos), np.ascontiguousarray(tgt), step)


def run_mission(scenario: Scenario, log_rate: float = DEFAULT_LOG_RATE,
                grid: VoxelGrid | None = None,
                field: DistanceField | None = None) -> tuple[MissionLog, MissionMetrics]:
    """Execute the full receding-horizon loop on a scenario.

    The map is static, so the distance field is computed once. A replan that
    fails while the previous trajectory still covers the next execution
    window is recorded and skipped; the mission aborts only when no valid
    trajectory remains.
    """
    cfg = scenario.config
    times = scenario.target_times
    t_start, t_end = float(times[0]), float(times[-1])
    if t_end - t_start < cfg.horizon:
        raise ScenarioError(
            f"target path spans {t_end - t_start:.2f} s, shorter than one "
            f"horizon H={cfg.horizon:.2f} s")

    t0 = time.perf_counter()
    if grid is None:
        grid = voxelize(scenario)
    if field is None:
        field = compute_distance_field(grid)
    edf_seconds = time.perf_counter() - t0

    exec_dt = cfg.horizon - cfg.replan_slack
    replans: list[ReplanRecord] = []
    current: PiecewiseTrajectory | None = None
    state = ChaserState(pos=scenario.chaser_pos, vel=scenario.chaser_vel,
                        acc=scenario.chaser_acc, stamp=t_start)

    k = 0
    tk = t_start
    while tk < t_end - 1e-9:
        if current is not None:
            state = evaluate_state(current, tk)
        stage = "forecast"
        timings: dict = {}
        try:
            t1 = time.perf_counter()
            forecast = forecast_window(scenario.target_path, tk, cfg.horizon, cfg.n_segments)
            timings["forecast"] = time.perf_counter() - t1
            stage = "preplan"
            details: dict = {}
            plan = preplan(field, state, forecast, cfg, timings=timings, details=details)
            stage = "corridor"
            t1 = time.perf_counter()
            corridors = build_corridors(field, plan, cfg.corridors_per_segment,
                                        DEFAULT_SHRINK, cfg.d_max / 2.0)
            timings["corridor"] = time.perf_counter() - t1
            stage = "qp"
            t1 = time.perf_counter()
            traj = generate_trajectory(state, plan, corridors, cfg, field=field)
            timings["qp"] = time.perf_counter() - t1
            current = traj
            replans.append(ReplanRecord(index=k, trigger=tk, ok=True,
                                        stage_timings=timings, plan=plan,
                                        corridors=corridors, trajectory=traj,
                                        layer_sizes=tuple(details["layer_sizes"])))
        except (PlanningInfeasibleError, CorridorCollapseError, QPError) as e:
            window_end = min(tk + exec_dt, t_end)
            if current is not None and current.t_end >= window_end - 1e-9:
                replans.append(ReplanRecord(index=k, trigger=tk, ok=False,
                                            stage_timings=timings,
                                            failed_stage=stage, reason=str(e)))
            else:
                partial = None
                if any(r.ok for r in replans):
                    partial = _build_log(scenario, field, replans, t_start,
                                         min(tk, t_end), log_rate, edf_seconds)
                raise MissionStageError(stage, tk, e, partial_log=partial) from e
        k += 1
        tk = t_start + k * exec_dt

    log = _build_log(scenario, field, replans, t_start, t_end, log_rate, edf_seconds)
    return log, compute_metrics(log)


def compare_runs(scenario: Scenario, visibility_weights,
                 log_rate: float = DEFAULT_LOG_RATE) -> dict:
    """Run the same mission under several visibility weights and tabulate metrics."""
    weights = list(visibility_weights)
    if not weights:
        raise ValueError("need at least one visibility weight")
    grid = voxelize(scenario)
    field = compute_distance_field(grid)
    rows = []
    for w in weights:
        sc = with_config(scenario, w_v=float(w))
        try:
            _, metrics = run_mission(sc, log_rate=log_rate, grid=grid, field=field)
            rows.append({"w_v": float(w), "metrics": metrics.to_dict()})
        except ChasePlanError as e:
            rows.append({"w_v": float(w), "error": str(e)})
    return {"scenario": scenario.name, "weights": [float(w) for w in weights], "rows": rows}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return repr(float(x))


def write_log_csv(log: MissionLog, path) -> None:
    """Shortest round-trip float formatting keeps reruns byte-identical."""
    lines = [",".join(LOG_COLUMNS)]
    for i in range(len(log.times)):
        row = [
            _fmt(log.times[i]),
            *(_fmt(v) for v in log.chaser_pos[i]),
            *(_fmt(v) for v in log.chaser_vel[i]),
            *(_fmt(v) for v in log.target_pos[i]),
            _fmt(log.visibility[i]),
            _fmt(log.chaser_clearance[i]),
            _fmt(log.target_clearance[i]),
            _fmt(log.below_r_safe[i]),
        ]
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_log_csv(path, r_safe: float = 0.3) -> MissionLog:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return MissionLog(
        times=data[:, 0],
        chaser_pos=data[:, 1:4],
        chaser_vel=data[:, 4:7],
        target_pos=data[:, 7:10],
        visibility=data[:, 10],
        chaser_clearance=data[:, 11],
        target_clearance=data[:, 12],
        below_r_safe=data[:, 13] > 0.5,
        r_safe=r_safe,
    )
