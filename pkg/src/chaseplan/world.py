"""Scenario ingestion, voxelization, and grid index bookkeeping.

The world is a set of axis-aligned obstacle boxes inside an axis-aligned
bounding volume, discretized into a boolean occupancy grid at a fixed cubic
resolution. All downstream fields and planners operate on that grid.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .errors import OutOfBoundsError, ScenarioError

# Default planner parameters (see data/scenario.schema.json for the file keys).
DEFAULT_CONFIG_JSON = {
    "w_v": 1.0,
    "w_d": 3.4,
    "lambda": 2.0,
    "d_des": 2.5,
    "d_lower": 1.0,
    "d_upper": 4.0,
    "d_max": 2.0,
    "r_safe": 0.3,
    "theta_min_deg": 20.0,
    "theta_max_deg": 70.0,
    "H": 5.0,
    "N": 4,
    "K": 6,
    "M": 2,
    "omega_res": 0.8,
}

# JSON key -> PlannerConfig attribute. "replan_slack" is handled separately
# because its default depends on H.
_CONFIG_KEYS = {
    "w_v": "w_v",
    "w_d": "w_d",
    "lambda": "lam",
    "d_des": "d_des",
    "d_lower": "d_lower",
    "d_upper": "d_upper",
    "d_max": "d_max",
    "r_safe": "r_safe",
    "H": "horizon",
    "N": "n_segments",
    "K": "poly_order",
    "M": "corridors_per_segment",
    "omega_res": "omega_res",
    "replan_slack": "replan_slack",
}

DEFAULT_VOXEL_BUDGET = 20_000_000


@dataclass(frozen=True)
class PlannerConfig:
    """Tuning knobs of the chasing pipeline. Angles in radians, SI units."""

    horizon: float = 5.0
    n_segments: int = 4
    w_v: float = 1.0
    w_d: float = 3.4
    lam: float = 2.0
    d_des: float = 2.5
    d_lower: float = 1.0
    d_upper: float = 4.0
    d_max: float = 2.0
    r_safe: float = 0.3
    theta_min: float = math.radians(20.0)
    theta_max: float = math.radians(70.0)
    poly_order: int = 6
    corridors_per_segment: int = 2
    omega_res: float = 0.8
    replan_slack: float = 4.0

    def validate(self) -> None:
        if not (0.0 < self.d_lower <= self.d_des <= self.d_upper):
            raise ScenarioError(
                f"config: require 0 < d_lower <= d_des <= d_upper, got "
                f"{self.d_lower}, {self.d_des}, {self.d_upper}")
        if not (0.0 < self.theta_min < self.theta_max < math.pi / 2):
            raise ScenarioError(
                f"config: require 0 < theta_min < theta_max < pi/2 rad, got "
                f"{self.theta_min:.4f}, {self.theta_max:.4f}")
        if self.poly_order < 5:
            raise ScenarioError(f"config: polynomial order K must be >= 5, got {self.poly_order}")
        if self.corridors_per_segment < 1:
            raise ScenarioError(f"config: M must be >= 1, got {self.corridors_per_segment}")
        if not (0.0 < self.replan_slack < self.horizon):
            raise ScenarioError(
                f"config: require 0 < replan_slack < H, got "
                f"{self.replan_slack} vs H={self.horizon}")
        if self.w_v < 0 or self.w_d < 0:
            raise ScenarioError("config: weights w_v and w_d must be nonnegative")
        if self.d_max <= 0 or self.omega_res <= 0 or self.horizon <= 0:
            raise ScenarioError("config: d_max, omega_res and H must be positive")
        if self.n_segments < 1:
            raise ScenarioError(f"config: N must be >= 1, got {self.n_segments}")
        if self.r_safe < 0:
            raise ScenarioError("config: r_safe must be nonnegative")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_segments


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box given by center and half-extent."""

    center: np.ndarray
    half_extent: np.ndarray

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all(np.abs(pts - self.center) <= self.half_extent, axis=1)


@dataclass(frozen=True)
class Scenario:
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    resolution: float
    obstacles: tuple[Box, ...]
    target_path: tuple[tuple[float, np.ndarray], ...]
    chaser_pos: np.ndarray
    chaser_vel: np.ndarray
    chaser_acc: np.ndarray
    config: PlannerConfig
    name: str = "scenario"

    @property
    def target_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.target_path])


@dataclass(frozen=True)
class ChaserState:
    """Kinematic state of the chaser at a replanning instant."""

    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    stamp: float = 0.0

    def validate(self) -> None:
        for v in (self.pos, self.vel, self.acc):
            if not np.all(np.isfinite(v)):
                raise ScenarioError("chaser state entries must be finite")


@dataclass(frozen=True)
class VoxelGrid:
    """Boolean occupancy over an axis-aligned cubic-voxel grid."""

    origin: np.ndarray
    resolution: float
    dims: tuple[int, int, int]
    occupancy: np.ndarray

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.resolution

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(np.asarray(self.dims) * self.resolution))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.origin) & (pts <= self.upper), axis=1)


def _schema_validator() -> Draft202012Validator:
    text = resources.files("chaseplan").joinpath("data/scenario.schema.json").read_text()
    return Draft202012Validator(json.loads(text))


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def config_from_dict(data: dict, defaults: dict | None = None) -> PlannerConfig:
    """Build a PlannerConfig from scenario-file keys, filling in defaults."""
    merged = dict(DEFAULT_CONFIG_JSON)
    if defaults:
        merged.update(defaults)
    for key in data:
        if key not in _CONFIG_KEYS:
            raise ScenarioError(f"config: unknown key '{key}'")
    merged.update(data)

    kwargs = {}
    for json_key, attr in _CONFIG_KEYS.items():
        if json_key in merged:
            kwargs[attr] = merged[json_key]
    kwargs["theta_min"] = math.radians(merged["theta_min_deg"])
    kwargs["theta_max"] = math.radians(merged["theta_max_deg"])
    if "replan_slack" not in merged:
        kwargs["replan_slack"] = merged["H"] - 1.0
    cfg = PlannerConfig(**kwargs)
    cfg.validate()
    return cfg


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    """Validate a scenario document and construct the immutable Scenario."""
    validator = _schema_validator()
    errors = sorted(validator.iter_errors(data), key=lambda e: e.json_path)
    if errors:
        e = errors[0]
        raise ScenarioError(f"scenario field {e.json_path}: {e.message}")

    bounds_min = _vec(data["bounds"]["min"])
    bounds_max = _vec(data["bounds"]["max"])
    if not np.all(bounds_min < bounds_max):
        raise ScenarioError(f"bounds_min must be < bounds_max componentwise, "
                            f"got {bounds_min.tolist()} vs {bounds_max.tolist()}")
    res = float(data["resolution"])
    if res <= 0:
        raise ScenarioError(f"resolution must be positive, got {res}")

    obstacles = []
    for i, ob in enumerate(data.get("obstacles", [])):
        box = Box(_vec(ob["center"]), _vec(ob["half_extent"]))
        if np.any(box.half_extent <= 0):
            raise ScenarioError(f"obstacles[{i}]: half_extent must be positive")
        intersects = np.all(box.center - box.half_extent <= bounds_max) and \
            np.all(box.center + box.half_extent >= bounds_min)
        if not intersects:
            raise ScenarioError(f"obstacles[{i}] does not intersect the scenario bounds")
        obstacles.append(box)

    knots = [(float(k["t"]), _vec(k["pos"])) for k in data["target_path"]]
    times = [t for t, _ in knots]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ScenarioError("nonmonotonic target times: target_path times must be "
                            "strictly increasing")
    for i, (_, pos) in enumerate(knots):
        if np.any(pos < bounds_min) or np.any(pos > bounds_max):
            raise ScenarioError(f"target_path[{i}] position outside scenario bounds")

    chaser = data["chaser_init"]
    pos = _vec(chaser["pos"])
    vel = _vec(chaser.get("vel", [0.0, 0.0, 0.0]))
    acc = _vec(chaser.get("acc", [0.0, 0.0, 0.0]))
    if np.any(pos < bounds_min) or np.any(pos > bounds_max):
        raise ScenarioError("chaser_init position outside scenario bounds")
    for box in obstacles:
        if box.contains(pos)[0]:
            raise ScenarioError("chaser starts in occupied space")

    cfg = config_from_dict(data.get("config", {}))
    return Scenario(
        bounds_min=bounds_min, bounds_max=bounds_max, resolution=res,
        obstacles=tuple(obstacles), target_path=tuple(knots),
        chaser_pos=pos, chaser_vel=vel, chaser_acc=acc,
        config=cfg, name=name,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(
            f"{path}: parse error at line {e.lineno} column {e.colno}: {e.msg}") from e
    return scenario_from_dict(data, name=path.stem)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (e.g. 'wall_and_courtyard')."""
    p = resources.files("chaseplan").joinpath(f"data/scenarios/{name}.json")
    return Path(str(p))


def voxelize(scenario: Scenario, max_voxels: int = DEFAULT_VOXEL_BUDGET) -> VoxelGrid:
    """Rasterize obstacle boxes: a voxel is occupied iff its center lies in a box."""
    res = scenario.resolution
    span = scenario.bounds_max - scenario.bounds_min
    dims = tuple(int(x) for x in np.maximum(1, np.ceil(span / res - 1e-9)))
    n = dims[0] * dims[1] * dims[2]
    if n > max_voxels:
        raise ScenarioError(
            f"grid of {dims} = {n} voxels exceeds the voxel budget of {max_voxels}")

    occ = np.zeros(dims, dtype=bool)
    origin = scenario.bounds_min
    for box in scenario.obstacles:
        lo = box.center - box.half_extent
        hi = box.center + box.half_extent
        # candidate index slab widened by one voxel, then the exact center test
        i_lo = np.maximum(np.floor((lo - origin) / res - 0.5).astype(int) - 1, 0)
        i_hi = np.minimum(np.ceil((hi - origin) / res - 0.5).astype(int) + 1,
                          np.asarray(dims) - 1)
        if np.any(i_hi < i_lo):
            continue
        masks = []
        for ax in range(3):
            centers = origin[ax] + (np.arange(i_lo[ax], i_hi[ax] + 1) + 0.5) * res
            masks.append(np.abs(centers - box.center[ax]) <= box.half_extent[ax])
        inside = masks[0][:, None, None] & masks[1][None, :, None] & masks[2][None, None, :]
        occ[i_lo[0]:i_hi[0] + 1, i_lo[1]:i_hi[1] + 1, i_lo[2]:i_hi[2] + 1] |= inside
    occ.flags.writeable = False
    return VoxelGrid(origin=origin.copy(), resolution=res, dims=dims, occupancy=occ)


def world_to_index(grid: VoxelGrid, x) -> tuple[int, int, int]:
    x = _vec(x)
    if np.any(x < grid.origin) or np.any(x > grid.upper):
        raise OutOfBoundsError(
            f"point {x.tolist()} outside grid [{grid.origin.tolist()}, {grid.upper.tolist()}]")
    idx = np.floor((x - grid.origin) / grid.resolution).astype(int)
    idx = np.minimum(idx, np.asarray(grid.dims) - 1)  # top faces map into the last voxel
    return tuple(int(i) for i in idx)


def index_to_center(grid: VoxelGrid, idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=int)
    if np.any(idx < 0) or np.any(idx >= np.asarray(grid.dims)):
        raise OutOfBoundsError(f"index {idx.tolist()} outside grid dims {grid.dims}")
    return grid.origin + (idx + 0.5) * grid.resolution


def with_config(scenario: Scenario, **overrides) -> Scenario:
    """Copy of the scenario with PlannerConfig attributes replaced."""
    cfg = replace(scenario.config, **overrides)
    cfg.validate()
    return replace(scenario, config=cfg)
