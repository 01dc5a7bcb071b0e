"""Discrete viewpoint preplanner.

Forecast the target over a short horizon, lay a lattice of candidate
viewpoints around each forecast sample, connect consecutive layers with
edges that are safe, mutually visible and short, weight them by travel,
visibility and tracking-distance terms, and extract the cheapest chain of
waypoints by shortest-path search on the layered DAG.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .errors import PlanningInfeasibleError
from .fields import (
    DistanceField,
    clearance_many,
    segment_min_clearance_many,
    visibility,
    visibility_line_integrals,
    visibility_many,
)
from .world import ChaserState, PlannerConfig

DUMMY_EDGE_WEIGHT = 1.0


@dataclass(frozen=True)
class TargetForecast:
    t0: float
    dt: float
    samples: np.ndarray  # (N+1, 3) target positions at t0 + n*dt

    @property
    def n_segments(self) -> int:
        return self.samples.shape[0] - 1

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.shape[0])


@dataclass(frozen=True)
class CandidateSet:
    layer: int
    points: np.ndarray  # (C, 3)


@dataclass(frozen=True)
class LayeredGraph:
    """Vertices partitioned into time layers; edges only between neighbors.

    layers[0] holds the chaser position, layers[1..N] the candidate sets.
    edges[n] connects layers[n] -> layers[n+1] as (prev_idx, next_idx, weight)
    arrays; the virtual goal layer is implicit, every last-layer vertex
    reaches it at the constant DUMMY_EDGE_WEIGHT.
    """

    layers: tuple[np.ndarray, ...]
    edges: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    forecast: TargetForecast
    dummy_weight: float = DUMMY_EDGE_WEIGHT


@dataclass(frozen=True)
class WaypointPlan:
    timestamps: np.ndarray  # (N+1,)
    waypoints: np.ndarray   # (N+1, 3); waypoints[0] is the chaser position
    cost: float

    @property
    def n_segments(self) -> int:
        return self.waypoints.shape[0] - 1

    @property
    def dt(self) -> float:
        return float(self.timestamps[1] - self.timestamps[0])


def target_position(target_path, t: float) -> np.ndarray:
    """Piecewise-linear evaluation of the scripted target path, clamped at the ends."""
    if len(target_path) == 0:
        raise PlanningInfeasibleError("target path is empty")
    times = np.array([k[0] for k in target_path])
    if t <= times[0]:
        return np.asarray(target_path[0][1], dtype=float).copy()
    if t >= times[-1]:
        return np.asarray(target_path[-1][1], dtype=float).copy()
    i = int(np.searchsorted(times, t, side="right")) - 1
    t0, p0 = target_path[i]
    t1, p1 = target_path[i + 1]
    a = (t - t0) / (t1 - t0)
    return (1.0 - a) * np.asarray(p0, dtype=float) + a * np.asarray(p1, dtype=float)


def forecast_window(target_path, t: float, horizon: float, n_segments: int) -> TargetForecast:
    """Sample the scripted path at N+1 evenly spaced times starting at t."""
    if len(target_path) == 0:
        raise PlanningInfeasibleError("target path is empty")
    dt = horizon / n_segments
    samples = np.array([target_position(target_path, t + n * dt)
                        for n in range(n_segments + 1)])
    return TargetForecast(t0=float(t), dt=float(dt), samples=samples)


def generate_candidates(field: DistanceField, target, config: PlannerConfig,
                        layer: int = 1) -> CandidateSet:
    """Lattice of admissible viewpoints in the tracking shell around the target.

    Lattice points inside the outer box and outside the inner box are kept,
    then filtered by Euclidean distance band, elevation band, clearance and
    visibility. Points outside the grid are dropped up front.
    """
    target = np.asarray(target, dtype=float)
    n_off = int(np.floor(config.d_upper / config.omega_res + 1e-9))
    offsets = config.omega_res * np.arange(-n_off, n_off + 1)
    ox, oy, oz = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    delta = np.column_stack([ox.ravel(), oy.ravel(), oz.ravel()])

    inf_norm = np.max(np.abs(delta), axis=1)
    shell = (inf_norm <= config.d_upper + 1e-12) & ~(inf_norm <= config.d_lower + 1e-12)
    delta = delta[shell]

    dist = np.linalg.norm(delta, axis=1)
    band = (dist >= config.d_lower) & (dist <= config.d_upper)
    delta = delta[band]
    dist = dist[band]

    elev = np.arctan2(delta[:, 2], np.hypot(delta[:, 0], delta[:, 1]))
    delta = delta[(elev >= config.theta_min) & (elev <= config.theta_max)]

    pts = target + delta
    pts = pts[field.grid.contains(pts)]
    if pts.shape[0] > 0:
        pts = pts[clearance_many(field, pts) >= config.r_safe]
    if pts.shape[0] > 0:
        pts = pts[visibility_many(field, pts, target) > 0.0]
    if pts.shape[0] == 0:
        raise PlanningInfeasibleError(
            f"no viewpoint candidates at layer {layer}", layer=layer)
    return CandidateSet(layer=layer, points=np.ascontiguousarray(pts))


def edge_cost(field: DistanceField, x_prev, x_next, target_prev, target_next,
              config: PlannerConfig) -> float:
    """Travel + weighted transition-visibility + weighted tracking-distance cost."""
    x_prev = np.asarray(x_prev, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    d2 = float(np.dot(x_next - x_prev, x_next - x_prev))
    i_prev = float(visibility_line_integrals(field, x_prev, x_next, target_prev)[0])
    i_next = float(visibility_line_integrals(field, x_prev, x_next, target_next)[0])
    if i_prev <= 0.0 or i_next <= 0.0:
        return float("inf")
    c_v = 1.0 / float(np.sqrt(i_prev * i_next))
    resid = float(np.linalg.norm(np.asarray(target_next, dtype=float) - x_next)) - config.d_des
    return d2 + config.w_v * c_v + config.w_d * resid * resid


def build_graph(field: DistanceField, chaser_pos, forecast: TargetForecast,
                config: PlannerConfig) -> LayeredGraph:
    """Connect consecutive candidate layers by safe, visible, short edges.

    An edge exists iff the connecting segment keeps clearance >= r_safe, both
    endpoints see their respective target samples, and the endpoints are
    closer than d_max. Candidate layers are visibility-filtered at
    construction; only the chaser vertex needs an explicit check.
    """
    chaser_pos = np.asarray(chaser_pos, dtype=float)
    n_seg = forecast.n_segments
    layers: list[np.ndarray] = [chaser_pos.reshape(1, 3)]
    for n in range(1, n_seg + 1):
        layers.append(generate_candidates(field, forecast.samples[n], config, layer=n).points)

    source_visible = visibility(field, chaser_pos, forecast.samples[0]) > 0.0

    edges = []
    for n in range(1, n_seg + 1):
        P, Q = layers[n - 1], layers[n]
        diff = P[:, None, :] - Q[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        close = dist < config.d_max
        if n == 1 and not source_visible:
            close[:] = False
        pairs = np.argwhere(close)
        if pairs.shape[0] == 0:
            edges.append((np.empty(0, int), np.empty(0, int), np.empty(0)))
            continue
        A = np.ascontiguousarray(P[pairs[:, 0]])
        B = np.ascontiguousarray(Q[pairs[:, 1]])
        safe = segment_min_clearance_many(field, A, B) >= config.r_safe
        pairs, A, B = pairs[safe], A[safe], B[safe]
        if pairs.shape[0] == 0:
            edges.append((np.empty(0, int), np.empty(0, int), np.empty(0)))
            continue

        i_prev = visibility_line_integrals(field, A, B, forecast.samples[n - 1])
        i_next = visibility_line_integrals(field, A, B, forecast.samples[n])
        visible_sweep = (i_prev > 0.0) & (i_next > 0.0)
        pairs, A, B = pairs[visible_sweep], A[visible_sweep], B[visible_sweep]
        i_prev, i_next = i_prev[visible_sweep], i_next[visible_sweep]
        if pairs.shape[0] == 0:
            edges.append((np.empty(0, int), np.empty(0, int), np.empty(0)))
            continue

        d2 = np.sum((B - A) ** 2, axis=1)
        c_v = 1.0 / np.sqrt(i_prev * i_next)
        resid = np.linalg.norm(forecast.samples[n] - Q[pairs[:, 1]], axis=1) - config.d_des
        w = d2 + config.w_v * c_v + config.w_d * resid * resid
        edges.append((np.ascontiguousarray(pairs[:, 0]),
                      np.ascontiguousarray(pairs[:, 1]),
                      w))
    return LayeredGraph(layers=tuple(layers), edges=tuple(edges), forecast=forecast)


def shortest_path(graph: LayeredGraph) -> WaypointPlan:
    """Forward dynamic program over the layered DAG.

    Ties are broken toward the smallest candidate index at every layer, so
    plans are reproducible. The virtual goal leg adds the same constant to
    every chain and is excluded from the reported cost.
    """
    n_layers = len(graph.layers)
    cost = [np.full(len(l), np.inf) for l in graph.layers]
    pred = [np.full(len(l), -1, dtype=int) for l in graph.layers]
    cost[0][0] = 0.0
    for n in range(1, n_layers):
        ip, jn, w = graph.edges[n - 1]
        cn = cost[n]
        pn = pred[n]
        cprev = cost[n - 1]
        for e in range(len(w)):
            c = cprev[ip[e]] + w[e]
            if c < cn[jn[e]]:
                cn[jn[e]] = c
                pn[jn[e]] = ip[e]
        if not np.isfinite(cn).any():
            raise PlanningInfeasibleError(
                f"preplanning infeasible: no path reaches layer {n}")

    j = int(np.argmin(cost[-1]))
    total = float(cost[-1][j])
    chain = [j]
    for n in range(n_layers - 1, 0, -1):
        chain.append(int(pred[n][chain[-1]]))
    chain.reverse()

    waypoints = np.array([graph.layers[n][chain[n]] for n in range(n_layers)])
    return WaypointPlan(timestamps=graph.forecast.times(), waypoints=waypoints, cost=total)


def shortest_path_dijkstra(graph: LayeredGraph) -> WaypointPlan:
    """Dijkstra over the same graph; used to cross-check the DP search."""
    adj: dict[tuple[int, int], list[tuple[tuple[int, int], float]]] = {}
    for n in range(1, len(graph.layers)):
        ip, jn, w = graph.edges[n - 1]
        for e in range(len(w)):
            adj.setdefault((n - 1, int(ip[e])), []).append(((n, int(jn[e])), float(w[e])))
    goal = (len(graph.layers), 0)
    for j in range(len(graph.layers[-1])):
        adj.setdefault((len(graph.layers) - 1, j), []).append((goal, graph.dummy_weight))

    start = (0, 0)
    best: dict[tuple[int, int], float] = {start: 0.0}
    prev: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(0.0, start)]
    done = set()
    while heap:
        c, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == goal:
            break
        for v, w in adj.get(u, []):
            nc = c + w
            if nc < best.get(v, np.inf):
                best[v] = nc
                prev[v] = u
                heapq.heappush(heap, (nc, v))
    if goal not in done:
        raise PlanningInfeasibleError("preplanning infeasible: goal unreachable")

    chain = []
    u = prev[goal]
    while u != start:
        chain.append(u)
        u = prev[u]
    chain.append(start)
    chain.reverse()
    waypoints = np.array([graph.layers[n][j] for n, j in chain])
    return WaypointPlan(timestamps=graph.forecast.times(), waypoints=waypoints,
                        cost=float(best[goal] - graph.dummy_weight))


def preplan(field: DistanceField, chaser_state: ChaserState, forecast: TargetForecast,
            config: PlannerConfig, timings: dict | None = None,
            details: dict | None = None) -> WaypointPlan:
    """Candidate generation + graph construction + shortest-path search."""
    t0 = time.perf_counter()
    graph = build_graph(field, chaser_state.pos, forecast, config)
    t1 = time.perf_counter()
    plan = shortest_path(graph)
    t2 = time.perf_counter()
    if timings is not None:
        timings["visibility"] = t1 - t0
        timings["search"] = t2 - t1
    if details is not None:
        details["layer_sizes"] = [len(l) for l in graph.layers[1:]]
        details["edge_counts"] = [len(w) for _, _, w in graph.edges]
    return plan
