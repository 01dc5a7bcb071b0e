"""Chasing corridors: timestamped axis-aligned boxes around the waypoint plan.

The plan is interpolated linearly between waypoints; at subsampled times a
box is inscribed in the local clearance ball (half-extent at most
clearance / sqrt(3), so every box corner stays within the clearance radius).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorridorCollapseError
from .fields import DistanceField, clearance
from .preplan import WaypointPlan

DEFAULT_SHRINK = 0.9
SQRT3 = float(np.sqrt(3.0))


@dataclass(frozen=True)
class CorridorEntry:
    tau: float
    center: np.ndarray
    half_extent: np.ndarray  # componentwise box half-size


@dataclass(frozen=True)
class CorridorSequence:
    entries: tuple[CorridorEntry, ...]
    plan: WaypointPlan
    shrink: float


def interpolate_plan(plan: WaypointPlan, tau: float) -> np.ndarray:
    """Linear interpolation of the waypoint sequence at time tau."""
    t = plan.timestamps
    if tau < t[0] - 1e-9 or tau > t[-1] + 1e-9:
        raise ValueError(f"tau={tau} outside plan span [{t[0]}, {t[-1]}]")
    tau = min(max(tau, float(t[0])), float(t[-1]))
    n = int(np.searchsorted(t, tau, side="right"))
    n = min(max(n, 1), len(t) - 1)
    a = (tau - t[n - 1]) / (t[n] - t[n - 1])
    return (1.0 - a) * plan.waypoints[n - 1] + a * plan.waypoints[n]


def corridor_at(field: DistanceField, plan: WaypointPlan, tau: float,
                shrink: float = DEFAULT_SHRINK,
                max_half_extent: float | None = None) -> CorridorEntry:
    """Clearance-inscribed box at the interpolated plan point.

    Half-extents are shrink * clearance / sqrt(3) per component, floored at
    half a voxel and capped at max_half_extent (default d_max/2 upstream).
    """
    center = interpolate_plan(plan, tau)
    phi = clearance(field, center)
    min_half = field.resolution / 2.0
    if phi <= min_half * SQRT3:
        raise CorridorCollapseError(
            f"corridor collapsed at tau={tau:.3f}: clearance {phi:.3f} m "
            f"cannot fit the minimum half-extent {min_half:.3f} m", tau=tau)
    half = shrink * phi / SQRT3
    half = max(half, min_half)
    if max_half_extent is not None:
        half = min(half, max_half_extent)
    return CorridorEntry(tau=float(tau), center=center,
                         half_extent=np.full(3, half))


def build_corridors(field: DistanceField, plan: WaypointPlan,
                    per_segment: int, shrink: float = DEFAULT_SHRINK,
                    max_half_extent: float | None = None) -> CorridorSequence:
    """M equispaced interior corridor boxes per plan segment.

    Subsample times exclude the knots themselves; knots are already pulled
    toward the waypoints by the soft objective term.
    """
    entries = []
    t = plan.timestamps
    for n in range(1, plan.n_segments + 1):
        dt = t[n] - t[n - 1]
        for i in range(1, per_segment + 1):
            tau = float(t[n - 1] + i * dt / (per_segment + 1))
            try:
                entries.append(corridor_at(field, plan, tau, shrink, max_half_extent))
            except CorridorCollapseError as e:
                raise CorridorCollapseError(str(e), tau=tau, segment=n) from None
    return CorridorSequence(entries=tuple(entries), plan=plan, shrink=shrink)
