"""Numba kernels for trilinear field sampling and sight-line sweeps.

All kernels parallelize over independent rows only, so results are
bit-identical regardless of thread count, and a batch of one reproduces the
scalar path exactly.
"""
import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _trilerp(values, ox, oy, oz, inv_res, x, y, z):
    nx, ny, nz = values.shape
    ux = (x - ox) * inv_res - 0.5
    uy = (y - oy) * inv_res - 0.5
    uz = (z - oz) * inv_res - 0.5

    ix = int(np.floor(ux))
    iy = int(np.floor(uy))
    iz = int(np.floor(uz))
    if ix < 0:
        ix = 0
    if iy < 0:
        iy = 0
    if iz < 0:
        iz = 0
    if ix > nx - 2:
        ix = nx - 2 if nx > 1 else 0
    if iy > ny - 2:
        iy = ny - 2 if ny > 1 else 0
    if iz > nz - 2:
        iz = nz - 2 if nz > 1 else 0
    jx = ix + 1 if nx > 1 else ix
    jy = iy + 1 if ny > 1 else iy
    jz = iz + 1 if nz > 1 else iz

    fx = ux - ix
    fy = uy - iy
    fz = uz - iz
    if fx < 0.0 or nx == 1:
        fx = 0.0
    elif fx > 1.0:
        fx = 1.0
    if fy < 0.0 or ny == 1:
        fy = 0.0
    elif fy > 1.0:
        fy = 1.0
    if fz < 0.0 or nz == 1:
        fz = 0.0
    elif fz > 1.0:
        fz = 1.0

    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    c00 = gx * values[ix, iy, iz] + fx * values[jx, iy, iz]
    c10 = gx * values[ix, jy, iz] + fx * values[jx, jy, iz]
    c01 = gx * values[ix, iy, jz] + fx * values[jx, iy, jz]
    c11 = gx * values[ix, jy, jz] + fx * values[jx, jy, jz]
    c0 = gy * c00 + fy * c10
    c1 = gy * c01 + fy * c11
    return gz * c0 + fz * c1


@njit(cache=True, parallel=True)
def trilinear_batch(values, origin, inv_res, pts):
    n = pts.shape[0]
    out = np.empty(n, dtype=np.float64)
    for q in prange(n):
        out[q] = _trilerp(values, origin[0], origin[1], origin[2], inv_res,
                          pts[q, 0], pts[q, 1], pts[q, 2])
    return out


@njit(cache=True, inline="always")
def _segment_min(values, ox, oy, oz, inv_res, ax, ay, az, bx, by, bz, step):
    dx = bx - ax
    dy = by - ay
    dz = bz - az
    length = np.sqrt(dx * dx + dy * dy + dz * dz)
    n = int(np.ceil(length / step))
    if n < 1:
        n = 1
    best = _trilerp(values, ox, oy, oz, inv_res, ax, ay, az)
    for j in range(1, n + 1):
        t = j / n
        v = _trilerp(values, ox, oy, oz, inv_res,
                     ax + t * dx, ay + t * dy, az + t * dz)
        if v < best:
            best = v
    return best


@njit(cache=True, parallel=True)
def segment_min_batch(values, origin, inv_res, A, B, step):
    n = A.shape[0]
    out = np.empty(n, dtype=np.float64)
    for q in prange(n):
        out[q] = _segment_min(values, origin[0], origin[1], origin[2], inv_res,
                              A[q, 0], A[q, 1], A[q, 2],
                              B[q, 0], B[q, 1], B[q, 2], step)
    return out


@njit(cache=True, parallel=True)
def line_integral_batch(values, origin, inv_res, A, B, target, step, degen_len):
    """Trapezoidal integral of max(sight-line clearance, 0) along each segment.

    The integrand at a point is the minimum clearance along the sight line
    from that point to `target`. Zero-length segments contribute their single
    (clamped) integrand value times `degen_len`.
    """
    nq = A.shape[0]
    out = np.empty(nq, dtype=np.float64)
    tx, ty, tz = target[0], target[1], target[2]
    ox, oy, oz = origin[0], origin[1], origin[2]
    for q in prange(nq):
        ax, ay, az = A[q, 0], A[q, 1], A[q, 2]
        bx, by, bz = B[q, 0], B[q, 1], B[q, 2]
        dx = bx - ax
        dy = by - ay
        dz = bz - az
        length = np.sqrt(dx * dx + dy * dy + dz * dz)
        if length < 1e-12:
            v = _segment_min(values, ox, oy, oz, inv_res, ax, ay, az, tx, ty, tz, step)
            if v < 0.0:
                v = 0.0
            out[q] = v * degen_len
            continue
        m = int(np.ceil(length / step))
        if m < 1:
            m = 1
        h = length / m
        acc = 0.0
        for j in range(m + 1):
            t = j / m
            px = ax + t * dx
            py = ay + t * dy
            pz = az + t * dz
            v = _segment_min(values, ox, oy, oz, inv_res, px, py, pz, tx, ty, tz, step)
            if v < 0.0:
                v = 0.0
            w = 0.5 if (j == 0 or j == m) else 1.0
            acc += w * v
        out[q] = acc * h
    return out
