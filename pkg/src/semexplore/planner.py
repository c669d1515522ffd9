"""Frontier extraction, A* paths, and information-per-cost plan selection."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import logsumexp
from .gridmap import UNKNOWN, MultiClassGrid
from .mutinfo import MapInfoTables, filter_nonoverlapping, pose_traces
from .sensor import GridGeometry, Pose2, SensorParams

SEMANTIC = "semantic"
BINARY = "binary"
FRONTIER = "frontier"
STRATEGIES = (SEMANTIC, BINARY, FRONTIER)

TERMINAL_COST = 0.1


class NoPath(Exception):
    pass


class Exhausted(Exception):
    """No reachable frontier is left: exploration is complete."""


@dataclass
class Frontier:
    cells: np.ndarray       # (n, 2) cell indices
    centroid: np.ndarray    # meters

    @property
    def size(self) -> int:
        return len(self.cells)


@dataclass
class CandidatePlan:
    poses: list
    controls: list
    cost: float
    mi: float = 0.0
    score: float = 0.0
    frontier_index: int = -1
    goal: Optional[tuple] = None


def find_frontiers(labels: np.ndarray, geometry: Optional[GridGeometry] = None, min_size: int = 1,
                   exclude=()) -> list:
    """Free cells with an unknown 8-neighbour, clustered by 8-connectivity.

    Clusters are ordered by their first cell in row-major order.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("frontier extraction works on 2-D label grids")
    unknown = labels == UNKNOWN
    near_unknown = ndimage.binary_dilation(unknown, structure=np.ones((3, 3), bool))
    mask = (labels == 0) & near_unknown
    for c in exclude:
        mask[c] = False
    comp, n = ndimage.label(mask, structure=np.ones((3, 3), int))
    res = geometry.resolution if geometry is not None else 1.0
    origin = np.array(geometry.origin) if geometry is not None else np.zeros(2)
    out = []
    for i in range(1, n + 1):
        cells = np.argwhere(comp == i)
        if len(cells) < min_size:
            continue
        out.append(Frontier(cells, origin + (cells.mean(axis=0) + 0.5) * res))
    return out


def frontier_goal(frontier: Frontier, geometry: GridGeometry) -> tuple:
    """Frontier cell closest to the cluster centroid (first on ties)."""
    centers = np.array(geometry.origin) + (frontier.cells + 0.5) * geometry.resolution
    i = int(np.argmin(np.sum((centers - frontier.centroid) ** 2, axis=1)))
    return tuple(int(c) for c in frontier.cells[i])


_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def astar(passable: np.ndarray, start: tuple, goal: tuple) -> list:
    """8-connected A* on a boolean grid; diagonal moves may not cut corners."""
    if start == goal:
        return [start]
    nx, ny = passable.shape
    gx, gy = goal
    g = {start: 0.0}
    parent = {start: None}
    heap = [(math.hypot(start[0] - gx, start[1] - gy), 0, start)]
    tie = 0
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add(cur)
        cx, cy = cur
        for dx, dy in _MOVES:
            x, y = cx + dx, cy + dy
            if not (0 <= x < nx and 0 <= y < ny) or not passable[x, y]:
                continue
            if dx and dy and not (passable[cx + dx, cy] and passable[cx, cy + dy]):
                continue
            ng = g[cur] + (math.sqrt(2.0) if dx and dy else 1.0)
            nxt = (x, y)
            if ng < g.get(nxt, math.inf):
                g[nxt] = ng
                parent[nxt] = cur
                tie += 1
                heapq.heappush(heap, (ng + math.hypot(x - gx, y - gy), tie, nxt))
    raise NoPath(f"no path from {start} to {goal}")


def plan_path(start: Pose2, goal: tuple, labels: np.ndarray, geometry: GridGeometry,
              terminal_cost: float = TERMINAL_COST) -> CandidatePlan:
    """A* from the start pose to a goal cell over cells labelled free.

    Stage cost is the Euclidean step length, terminal cost a constant.
    Poses after the first face along their incoming step.
    """
    passable = np.asarray(labels) == 0
    s = geometry.cell_of(start.position)
    passable[s] = True
    cells = astar(passable, s, tuple(goal))
    poses = [start]
    controls = []
    cost = 0.0
    prev = start
    for c in cells[1:]:
        x, y = geometry.cell_center(c)
        theta = math.atan2(y - prev.y, x - prev.x)
        step = math.hypot(x - prev.x, y - prev.y)
        pose = Pose2(x, y, theta)
        controls.append((step, math.remainder(theta - prev.theta, 2 * math.pi)))
        poses.append(pose)
        cost += step
        prev = pose
    return CandidatePlan(poses, controls, cost + terminal_cost, goal=tuple(goal))


def collapse_to_binary(h) -> np.ndarray:
    """Occupied-vs-free log odds: log(sum_{k>=1} p_k / p_0)."""
    h = np.asarray(h, dtype=float)
    return logsumexp(h[..., 1:]) - h[..., 0]


@dataclass
class BinaryInverseModel:
    """Two-class inverse model obtained by collapsing all object classes."""

    l_occupied: float
    l_free: float

    num_classes = 1

    @property
    def phi_minus(self) -> np.ndarray:
        return np.array([0.0, self.l_free])

    def l_plus(self, y: int) -> np.ndarray:
        return np.array([0.0, self.l_occupied])


def binary_model(params: SensorParams):
    """Collapse a multi-class inverse model; identity when K == 1."""
    if params.num_classes == 1:
        return params
    K = params.num_classes
    l_occ = float(np.mean([collapse_to_binary(params.l_plus(y)) for y in range(1, K + 1)]))
    return BinaryInverseModel(l_occ, float(collapse_to_binary(params.phi_minus)))


def binary_cells(grid: MultiClassGrid):
    """Collapsed (N, 2) log-odds and prior of a grid; unchanged when K == 1."""
    if grid.num_classes == 1:
        return grid.cells, grid.prior
    occ = collapse_to_binary(grid.cells)
    cells = np.stack([np.zeros_like(occ), occ], axis=1)
    return cells, np.array([0.0, float(collapse_to_binary(grid.prior))])


@dataclass
class ExplorationPlanner:
    """Scores paths to every frontier and keeps the best one.

    Beam traces depend only on geometry, so they are cached per pose across
    planning rounds. The sensor's own cell is left out of every trace.
    """

    geometry: GridGeometry
    sensor: SensorParams
    strategy: str = SEMANTIC
    min_frontier_size: int = 1
    terminal_cost: float = TERMINAL_COST
    _trace_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")

    def traces(self, pose: Pose2) -> list:
        key = (pose.x, pose.y, pose.theta)
        hit = self._trace_cache.get(key)
        if hit is None:
            hit = pose_traces(self.geometry, self.sensor, pose, skip_origin=True)
            self._trace_cache[key] = hit
        return hit

    def info_tables(self, grid: MultiClassGrid) -> Optional[MapInfoTables]:
        if self.strategy == SEMANTIC:
            return MapInfoTables(grid.cells, self.sensor, grid.prior)
        if self.strategy == BINARY:
            cells, prior = binary_cells(grid)
            return MapInfoTables(cells, binary_model(self.sensor), prior)
        return None

    def path_mi(self, poses, tables: MapInfoTables) -> float:
        # goal end first: the greedy filter then keeps the beams near the frontier
        traces = [tr for p in reversed(poses) for tr in self.traces(p)]
        return sum(tables.beam_mi(tr) for tr in filter_nonoverlapping(traces))

    def select(self, grid: MultiClassGrid, pose: Pose2, exclude=()):
        """Best plan and every evaluated candidate (in frontier order)."""
        labels = grid.most_likely_map()
        frontiers = find_frontiers(labels, self.geometry, self.min_frontier_size, exclude)
        if not frontiers:
            raise Exhausted("no frontiers left")
        tables = self.info_tables(grid)
        candidates = []
        for i, fr in enumerate(frontiers):
            try:
                plan = plan_path(pose, frontier_goal(fr, self.geometry), labels, self.geometry,
                                 self.terminal_cost)
            except NoPath:
                continue
            plan.frontier_index = i
            if tables is None:
                plan.mi = 0.0
                plan.score = 1.0 / plan.cost
            else:
                plan.mi = self.path_mi(plan.poses, tables)
                plan.score = plan.mi / plan.cost
            candidates.append(plan)
        if not candidates:
            raise Exhausted("no reachable frontier")
        best = candidates[0]
        for c in candidates[1:]:
            if c.score > best.score:
                best = c
        return best, candidates


def select_plan(grid: MultiClassGrid, sensor: SensorParams, strategy: str, pose: Pose2,
                min_frontier_size: int = 1, terminal_cost: float = TERMINAL_COST):
    planner = ExplorationPlanner(grid.geometry, sensor, strategy, min_frontier_size, terminal_cost)
    return planner.select(grid, pose)[0]
