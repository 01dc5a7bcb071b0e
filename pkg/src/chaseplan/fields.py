"""Clearance and visibility fields over the voxel grid.

The clearance field stores, per voxel, the Euclidean distance (between voxel
centers) to the nearest occupied voxel; queries between centers are trilinear.
Visibility of a target from a viewpoint is the minimum clearance along the
straight sight line between them: positive iff the line of sight is clear.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import OutOfBoundsError
from .world import VoxelGrid


@dataclass(frozen=True)
class DistanceField:
    grid: VoxelGrid
    values: np.ndarray  # meters to the nearest occupied voxel center, 0 on occupied
    sentinel: float     # value used when the grid holds no obstacle at all

    @property
    def resolution(self) -> float:
        return self.grid.resolution

    def default_step(self) -> float:
        return self.grid.resolution / 2.0


def compute_distance_field(grid: VoxelGrid) -> DistanceField:
    """Exact Euclidean distance transform of the occupancy grid."""
    sentinel = grid.diagonal
    if not grid.occupancy.any():
        values = np.full(grid.dims, sentinel, dtype=np.float64)
    else:
        values = ndimage.distance_transform_edt(
            ~grid.occupancy, sampling=grid.resolution).astype(np.float64)
    values.flags.writeable = False
    return DistanceField(grid=grid, values=values, sentinel=sentinel)


def _check_bounds(field: DistanceField, pts: np.ndarray, what: str) -> None:
    inside = field.grid.contains(pts)
    if not inside.all():
        bad = np.atleast_2d(pts)[~inside][0]
        raise OutOfBoundsError(
            f"{what} {bad.tolist()} outside grid "
            f"[{field.grid.origin.tolist()}, {field.grid.upper.tolist()}]")


def _as_points(x) -> np.ndarray:
    return np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))


def clearance_many(field: DistanceField, pts) -> np.ndarray:
    pts = _as_points(pts)
    _check_bounds(field, pts, "query point")
    return _kernels.trilinear_batch(
        field.values, field.grid.origin, 1.0 / field.resolution, pts)


def clearance(field: DistanceField, x) -> float:
    """Trilinearly interpolated distance to the nearest obstacle at x."""
    return float(clearance_many(field, x)[0])


def visibility_many(field: DistanceField, pts, target, step: float | None = None) -> np.ndarray:
    """Minimum clearance along the sight line from each point to the target."""
    pts = _as_points(pts)
    target = np.asarray(target, dtype=np.float64)
    _check_bounds(field, pts, "viewpoint")
    _check_bounds(field, target, "target")
    step = field.default_step() if step is None else float(step)
    if step <= 0:
        raise ValueError("step must be positive")
    B = np.ascontiguousarray(np.broadcast_to(target, pts.shape))
    return _kernels.segment_min_batch(
        field.values, field.grid.origin, 1.0 / field.resolution, pts, B, step)


def visibility(field: DistanceField, x, target, step: float | None = None) -> float:
    return float(visibility_many(field, x, target, step)[0])


def is_visible(field: DistanceField, x, target, step: float | None = None) -> bool:
    """True iff the straight sight line from x to the target is clear."""
    return visibility(field, x, target, step) > 0.0


def segment_min_clearance_many(field: DistanceField, A, B, step: float | None = None) -> np.ndarray:
    """Minimum clearance along each segment A[i] -> B[i] (line-safety check)."""
    A = _as_points(A)
    B = _as_points(B)
    _check_bounds(field, A, "segment start")
    _check_bounds(field, B, "segment end")
    step = field.default_step() if step is None else float(step)
    return _kernels.segment_min_batch(
        field.values, field.grid.origin, 1.0 / field.resolution, A, B, step)


def segment_min_clearance(field: DistanceField, a, b, step: float | None = None) -> float:
    return float(segment_min_clearance_many(field, a, b, step)[0])


def visibility_line_integrals(field: DistanceField, A, B, target,
                              step: float | None = None) -> np.ndarray:
    """Integral of the clamped sight-line clearance along each segment A[i]->B[i].

    Each integrand sample is the visibility of `target` from a point of the
    segment, clamped at zero before trapezoidal quadrature. A zero-length
    segment contributes its single clamped value times the grid resolution.
    """
    A = _as_points(A)
    B = _as_points(B)
    target = np.asarray(target, dtype=np.float64)
    _check_bounds(field, A, "segment start")
    _check_bounds(field, B, "segment end")
    _check_bounds(field, target, "target")
    step = field.default_step() if step is None else float(step)
    return _kernels.line_integral_batch(
        field.values, field.grid.origin, 1.0 / field.resolution,
        A, B, target, step, field.resolution)


def visibility_line_integral(field: DistanceField, a, b, target,
                             step: float | None = None) -> float:
    return float(visibility_line_integrals(field, a, b, target, step)[0])


def transition_visibility_cost(field: DistanceField, x_prev, x_next,
                               target_prev, target_next,
                               step: float | None = None) -> float:
    """Inverse geometric mean of the two sight-sweep integrals of a transition.

    Returns +inf when either leg of the transition is fully occluded.
    """
    i_prev = visibility_line_integral(field, x_prev, x_next, target_prev, step)
    i_next = visibility_line_integral(field, x_prev, x_next, target_next, step)
    if i_prev <= 0.0 or i_next <= 0.0:
        return float("inf")
    return 1.0 / float(np.sqrt(i_prev * i_next))


def horizontal_slice(field: DistanceField, z: float, target=None,
                     step: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample the clearance (or visibility-of-target) field on a z plane.

    Returns (xs, ys, grid of values) sampled at the voxel-center columns of
    the plane, row-major with x varying along rows.
    """
    g = field.grid
    if not (g.origin[2] <= z <= g.upper[2]):
        raise OutOfBoundsError(f"slice height {z} outside grid z range")
    xs = g.origin[0] + (np.arange(g.dims[0]) + 0.5) * g.resolution
    ys = g.origin[1] + (np.arange(g.dims[1]) + 0.5) * g.resolution
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])
    if target is None:
        vals = clearance_many(field, pts)
    else:
        vals = visibility_many(field, pts, target, step)
    return xs, ys, vals.reshape(g.dims[0], g.dims[1])
