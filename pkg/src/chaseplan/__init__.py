"""Visibility-aware chasing planner over voxelized worlds."""

from .world import (
    Box,
    PlannerConfig,
    Scenario,
    VoxelGrid,
    bundled_scenario_path,
    index_to_center,
    load_scenario,
    scenario_from_dict,
    voxelize,
    with_config,
    world_to_index,
)
from .fields import (
    DistanceField,
    clearance,
    compute_distance_field,
    is_visible,
    transition_visibility_cost,
    visibility,
    visibility_line_integral,
)

__all__ = [
    "Box",
    "DistanceField",
    "PlannerConfig",
    "Scenario",
    "VoxelGrid",
    "bundled_scenario_path",
    "clearance",
    "compute_distance_field",
    "index_to_center",
    "is_visible",
    "load_scenario",
    "scenario_from_dict",
    "transition_visibility_cost",
    "visibility",
    "visibility_line_integral",
    "voxelize",
    "with_config",
    "world_to_index",
]
