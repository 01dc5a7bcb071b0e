"""Command-line surface: plan, simulate, compare, fields, metrics.

All numeric output uses shortest round-trip float representation so repeated
invocations with identical inputs produce byte-identical files. Errors are
emitted as structured JSON on stderr with a one-line summary on stdout.
Exit codes: 0 success, 2 usage error, 3 infeasible planning, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .corridor import DEFAULT_SHRINK, build_corridors
from .errors import (
    ChasePlanError,
    CorridorCollapseError,
    MissionStageError,
    OutOfBoundsError,
    PlanningInfeasibleError,
    QPError,
    ScenarioError,
)
from .fields import (
    compute_distance_field,
    horizontal_slice,
    visibility_line_integral,
)
from .mission import compare_runs, compute_metrics, read_log_csv, run_mission, write_log_csv
from .preplan import build_graph, forecast_window, shortest_path
from .trajopt import generate_trajectory
from .world import (
    DEFAULT_CONFIG_JSON,
    ChaserState,
    PlannerConfig,
    Scenario,
    load_scenario,
    scenario_from_dict,
    voxelize,
)

KNOWN_CONFIG_KEYS = set(DEFAULT_CONFIG_JSON) | {"replan_slack"}


class UsageError(ChasePlanError):
    pass


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise UsageError(f"override '{item}' is not of the form key=value")
        key, value = item.split("=", 1)
        if key not in KNOWN_CONFIG_KEYS:
            raise UsageError(
                f"unknown config key '{key}'; known keys: {sorted(KNOWN_CONFIG_KEYS)}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            raise UsageError(f"override '{item}': value is not a number") from None
    return out


def _load_with_overrides(path: str, overrides: dict) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(
            f"{p}: parse error at line {e.lineno} column {e.colno}: {e.msg}") from e
    cfg = dict(data.get("config", {}))
    cfg.update(overrides)
    data["config"] = cfg
    return scenario_from_dict(data, name=p.stem)


def config_to_json_dict(cfg: PlannerConfig) -> dict:
    return {
        "w_v": cfg.w_v,
        "w_d": cfg.w_d,
        "lambda": cfg.lam,
        "d_des": cfg.d_des,
        "d_lower": cfg.d_lower,
        "d_upper": cfg.d_upper,
        "d_max": cfg.d_max,
        "r_safe": cfg.r_safe,
        "theta_min_deg": math.degrees(cfg.theta_min),
        "theta_max_deg": math.degrees(cfg.theta_max),
        "H": cfg.horizon,
        "N": cfg.n_segments,
        "K": cfg.poly_order,
        "M": cfg.corridors_per_segment,
        "omega_res": cfg.omega_res,
        "replan_slack": cfg.replan_slack,
    }


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _write_effective_config(out: Path, scenario: Scenario, overrides: dict) -> None:
    _write_json(out / "effective_config.json", {
        "config": config_to_json_dict(scenario.config),
        "overrides": overrides,
    })


def _plan_payload(field, scenario, plan, forecast, layer_sizes, corridors) -> dict:
    cfg = scenario.config
    edges = []
    for n in range(1, plan.n_segments + 1):
        a, b = plan.waypoints[n - 1], plan.waypoints[n]
        tp, tn = forecast.samples[n - 1], forecast.samples[n]
        d2 = float(np.sum((b - a) ** 2))
        i_prev = visibility_line_integral(field, a, b, tp)
        i_next = visibility_line_integral(field, a, b, tn)
        cv = float("inf") if min(i_prev, i_next) <= 0 else 1.0 / math.sqrt(i_prev * i_next)
        resid = float(np.linalg.norm(tn - b)) - cfg.d_des
        edges.append({
            "segment": n,
            "interval_distance_sq": d2,
            "visibility_cost": cfg.w_v * cv,
            "tracking_cost": cfg.w_d * resid * resid,
            "total": d2 + cfg.w_v * cv + cfg.w_d * resid * resid,
        })
    return {
        "timestamps": plan.timestamps.tolist(),
        "waypoints": plan.waypoints.tolist(),
        "cost": plan.cost,
        "candidates_per_layer": list(layer_sizes),
        "edge_costs": edges,
        "corridors": [{
            "tau": e.tau,
            "center": e.center.tolist(),
            "half_extent": e.half_extent.tolist(),
        } for e in corridors.entries],
    }


def _cmd_plan(args, out: Path, overrides: dict) -> int:
    scenario = _load_with_overrides(args.scenario, overrides)
    cfg = scenario.config
    grid = voxelize(scenario)
    field = compute_distance_field(grid)
    state = ChaserState(pos=scenario.chaser_pos, vel=scenario.chaser_vel,
                        acc=scenario.chaser_acc, stamp=args.t)
    forecast = forecast_window(scenario.target_path, args.t, cfg.horizon, cfg.n_segments)
    graph = build_graph(field, state.pos, forecast, cfg)
    plan = shortest_path(graph)
    corridors = build_corridors(field, plan, cfg.corridors_per_segment,
                                DEFAULT_SHRINK, cfg.d_max / 2.0)
    _write_json(out / "plan_0.json",
                _plan_payload(field, scenario, plan, forecast,
                              [len(l) for l in graph.layers[1:]], corridors))
    _write_effective_config(out, scenario, overrides)
    print(f"plan with {plan.n_segments + 1} waypoints, cost {plan.cost:.4f} "
          f"-> {out / 'plan_0.json'}")
    return 0


def _cmd_simulate(args, out: Path, overrides: dict) -> int:
    scenario = _load_with_overrides(args.scenario, overrides)
    log, metrics = run_mission(scenario, log_rate=args.rate)
    write_log_csv(log, out / "log.csv")
    _write_json(out / "metrics.json", metrics.to_dict())
    _write_json(out / "timings.json", {
        "edf_seconds": log.edf_seconds,
        "stage_seconds_avg": metrics.stage_seconds,
        "replans": [{
            "index": r.index,
            "trigger": r.trigger,
            "ok": r.ok,
            "stage_timings": r.stage_timings,
            **({"failed_stage": r.failed_stage, "reason": r.reason} if not r.ok else {}),
        } for r in log.replans],
    })
    grid = voxelize(scenario)
    field = compute_distance_field(grid)
    segments = []
    for r in log.replans:
        if not r.ok:
            continue
        _write_json(out / f"plan_{r.index}.json",
                    _plan_payload(field, scenario, r.plan, _forecast_of(scenario, r),
                                  r.layer_sizes, r.corridors))
        segments.append({
            "trigger": r.trigger,
            "timestamps": r.trajectory.timestamps.tolist(),
            "coefficients": r.trajectory.coefficients.tolist(),
        })
    _write_json(out / "trajectory.json", {
        "convention": "per segment n and axis a, position(tau) = sum_k "
                      "coefficients[n][a][k] * (tau - timestamps[n])**k",
        "replans": segments,
    })
    _write_effective_config(out, scenario, overrides)
    print(f"mission complete: {metrics.duration:.1f} s, travel "
          f"{metrics.travel_distance:.2f} m, occlusion {metrics.occlusion_duration:.2f} s "
          f"-> {out}")
    return 0


def _forecast_of(scenario: Scenario, record):
    cfg = scenario.config
    return forecast_window(scenario.target_path, record.trigger, cfg.horizon, cfg.n_segments)


def _cmd_compare(args, out: Path, overrides: dict) -> int:
    scenario = _load_with_overrides(args.scenario, overrides)
    try:
        weights = [float(w) for w in args.wv.split(",") if w.strip() != ""]
    except ValueError:
        raise UsageError(f"--wv expects comma-separated numbers, got '{args.wv}'") from None
    if not weights:
        raise UsageError("--wv expects at least one weight")
    report = compare_runs(scenario, weights, log_rate=args.rate)
    _write_json(out / "comparison.json", report)
    print(f"compared w_v={weights} -> {out / 'comparison.json'}")
    _write_effective_config(out, scenario, overrides)
    return 0


def _write_slice_csv(path: Path, xs, ys, values, origin, resolution, z) -> None:
    header = (f"# origin_x={origin[0]!r},origin_y={origin[1]!r},"
              f"resolution={resolution!r},z={float(z)!r}")
    lines = [header, "# rows: x index, columns: y index"]
    for i in range(values.shape[0]):
        lines.append(",".join(repr(float(v)) for v in values[i]))
    path.write_text("\n".join(lines) + "\n")


def _cmd_fields(args, out: Path, overrides: dict) -> int:
    scenario = _load_with_overrides(args.scenario, overrides)
    grid = voxelize(scenario)
    field = compute_distance_field(grid)
    xs, ys, phi = horizontal_slice(field, args.slice_z)
    _write_slice_csv(out / "phi_slice.csv", xs, ys, phi, grid.origin, grid.resolution,
                     args.slice_z)
    written = ["phi_slice.csv"]
    if args.target is not None:
        target = [float(v) for v in args.target.split(",")]
        if len(target) != 3:
            raise UsageError(f"--target expects x,y,z, got '{args.target}'")
        xs, ys, psi = horizontal_slice(field, args.slice_z, target=target)
        _write_slice_csv(out / "psi_slice.csv", xs, ys, psi, grid.origin,
                         grid.resolution, args.slice_z)
        written.append("psi_slice.csv")
    _write_effective_config(out, scenario, overrides)
    print(f"wrote {', '.join(written)} to {out}")
    return 0


def _cmd_metrics(args, out: Path, overrides: dict) -> int:
    del overrides
    path = Path(args.log)
    if not path.exists():
        raise ScenarioError(f"log file not found: {path}")
    log = read_log_csv(path, r_safe=args.r_safe)
    metrics = compute_metrics(log)
    _write_json(out / "metrics.json", metrics.to_dict())
    print(f"metrics recomputed from {path} -> {out / 'metrics.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaseplan",
        description="Visibility-aware chasing planner over voxelized worlds")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario config key (repeatable)")

    p = sub.add_parser("plan", help="single preplanning pass at a given time")
    p.add_argument("--scenario", required=True)
    p.add_argument("--t", type=float, default=0.0, help="replanning time (s)")
    common(p)

    p = sub.add_parser("simulate", help="run the full receding-horizon mission")
    p.add_argument("--scenario", required=True)
    p.add_argument("--rate", type=float, default=50.0, help="log sample rate (Hz)")
    common(p)

    p = sub.add_parser("compare", help="run the mission under several visibility weights")
    p.add_argument("--scenario", required=True)
    p.add_argument("--wv", required=True, help="comma-separated visibility weights")
    p.add_argument("--rate", type=float, default=50.0)
    common(p)

    p = sub.add_parser("fields", help="dump a horizontal slice of the fields to CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--slice-z", type=float, required=True, dest="slice_z")
    p.add_argument("--target", default=None, help="x,y,z target for the visibility slice")
    common(p)

    p = sub.add_parser("metrics", help="recompute metrics from an existing log.csv")
    p.add_argument("--log", required=True)
    p.add_argument("--r-safe", type=float, default=0.3, dest="r_safe")
    common(p)

    return parser


_HANDLERS = {
    "plan": _cmd_plan,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "fields": _cmd_fields,
    "metrics": _cmd_metrics,
}


def _exit_code_for(err: Exception) -> int:
    if isinstance(err, UsageError):
        return 2
    if isinstance(err, (PlanningInfeasibleError, CorridorCollapseError, QPError)):
        return 3
    if isinstance(err, MissionStageError):
        return 3
    if isinstance(err, (ScenarioError, OutOfBoundsError, OSError)):
        return 4
    return 1


def dispatch(args: argparse.Namespace) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        overrides = _parse_overrides(args.set)
        return _HANDLERS[args.command](args, out, overrides)
    except Exception as err:  # noqa: BLE001 - single error funnel for the CLI
        code = _exit_code_for(err)
        payload = {
            "error": type(err).__name__,
            "message": str(err),
            "exit_code": code,
        }
        if isinstance(err, MissionStageError):
            payload["stage"] = err.stage
            payload["trigger_time"] = err.trigger_time
        if isinstance(err, PlanningInfeasibleError) and err.layer is not None:
            payload["layer"] = err.layer
        print(json.dumps(payload), file=sys.stderr)
        print(f"error ({type(err).__name__}): {err}")
        return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
