import numpy as np
import pytest

from chaseplan import compute_distance_field, scenario_from_dict, voxelize


def make_scenario(bounds_max=(20, 20, 8), resolution=0.4, obstacles=(),
                  target_path=None, chaser_pos=None, config=None):
    bx, by, _ = bounds_max
    if chaser_pos is None:
        chaser_pos = (0.2 * bx, 0.5 * by + 2.3, 1.6)
    data = {
        "bounds": {"min": [0, 0, 0], "max": list(bounds_max)},
        "resolution": resolution,
        "obstacles": [
            {"center": list(c), "half_extent": list(h)} for c, h in obstacles
        ],
        "target_path": target_path or [
            {"t": 0.0, "pos": [0.2 * bx, 0.5 * by, 0.4]},
            {"t": 20.0, "pos": [0.8 * bx, 0.5 * by, 0.4]},
        ],
        "chaser_init": {"pos": list(chaser_pos)},
    }
    if config:
        data["config"] = config
    return scenario_from_dict(data)


@pytest.fixture(scope="session")
def open_scenario():
    return make_scenario()


@pytest.fixture(scope="session")
def open_field(open_scenario):
    return compute_distance_field(voxelize(open_scenario))


@pytest.fixture(scope="session")
def wall_scenario():
    # one thin wall north of the target's straight path
    return make_scenario(obstacles=[((10, 11.5, 1.5), (0.4, 1.5, 1.5))])


@pytest.fixture(scope="session")
def wall_field(wall_scenario):
    return compute_distance_field(voxelize(wall_scenario))


def brute_force_edf(grid):
    """Nearest-occupied-voxel distances by scanning every occupied center."""
    from scipy.spatial.distance import cdist

    res = grid.resolution
    dims = grid.dims
    idx = np.argwhere(np.ones(dims, dtype=bool))
    centers = grid.origin + (idx + 0.5) * res
    occ_idx = np.argwhere(grid.occupancy)
    if len(occ_idx) == 0:
        return np.full(dims, grid.diagonal)
    occ_centers = grid.origin + (occ_idx + 0.5) * res
    out = np.empty(len(centers))
    chunk = 4096
    for s in range(0, len(centers), chunk):
        d = cdist(centers[s:s + chunk], occ_centers)
        out[s:s + chunk] = d.min(axis=1)
    return out.reshape(dims)


def raycast_blocked(grid, a, b):
    """Amanatides-Woo voxel traversal: True iff segment a->b crosses an occupied voxel."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    res = grid.resolution
    u = (a - grid.origin) / res
    v = (b - grid.origin) / res
    idx = np.minimum(np.floor(u).astype(int), np.asarray(grid.dims) - 1)
    end = np.minimum(np.floor(v).astype(int), np.asarray(grid.dims) - 1)
    d = v - u
    step = np.sign(d).astype(int)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for ax in range(3):
        if d[ax] != 0:
            nxt = idx[ax] + (1 if step[ax] > 0 else 0)
            t_max[ax] = (nxt - u[ax]) / d[ax]
            t_delta[ax] = abs(1.0 / d[ax])
    for _ in range(int(np.sum(np.abs(end - idx))) + 3):
        if grid.occupancy[tuple(idx)]:
            return True
        if np.all(idx == end):
            return False
        ax = int(np.argmin(t_max))
        idx[ax] += step[ax]
        if idx[ax] < 0 or idx[ax] >= grid.dims[ax]:
            return False
        t_max[ax] += t_delta[ax]
    return bool(grid.occupancy[tuple(end)])
