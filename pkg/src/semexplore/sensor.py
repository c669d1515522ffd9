"""Range-category beam model: poses, grid geometry, raycasting, inverse model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import log_odds


@dataclass(frozen=True)
class Pose2:
    """Planar pose; theta is wrapped into (-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        t = math.remainder(self.theta, 2.0 * math.pi)
        if t == -math.pi:
            t = math.pi
        object.__setattr__(self, "theta", t)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose3:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))


Pose = Union[Pose2, Pose3]


@dataclass(frozen=True)
class GridGeometry:
    """Axis-aligned regular grid; ``origin`` is the min corner in meters."""

    dims: tuple
    resolution: float
    origin: tuple = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (2, 3) or min(dims) < 1:
            raise ValueError(f"grid dims must be 2-D or 3-D positive counts, got {self.dims}")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "dims", dims)
        origin = (0.0,) * len(dims) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(dims):
            raise ValueError("origin and dims dimensionality differ")
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def cell_of(self, point) -> tuple:
        p = np.asarray(point, dtype=float)
        return tuple(int(math.floor((p[a] - self.origin[a]) / self.resolution)) for a in range(self.ndim))

    def contains_cell(self, cell) -> bool:
        return all(0 <= c < d for c, d in zip(cell, self.dims))

    def contains_point(self, point) -> bool:
        return self.contains_cell(self.cell_of(point))

    def cell_center(self, cell) -> np.ndarray:
        return np.array(self.origin) + (np.asarray(cell, dtype=float) + 0.5) * self.resolution

    def flat_index(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.intp).reshape(-1, self.ndim)
        return np.ravel_multi_index(tuple(cells.T), self.dims)


@dataclass
class RayTrace:
    """Cells crossed by one beam, in order of increasing distance.

    ``lengths`` are exact chord lengths through each cell. ``hit_index``
    is the position in ``cells`` of the cell holding the beam end point,
    or None when the beam reported no obstacle.
    """

    cells: np.ndarray
    lengths: np.ndarray
    flat: np.ndarray
    hit_index: Optional[int] = None

    def __len__(self) -> int:
        return len(self.lengths)

    def with_hit(self, hit_index: Optional[int]) -> "RayTrace":
        return RayTrace(self.cells, self.lengths, self.flat, hit_index)


def raycast(geometry: GridGeometry, origin, direction, length: float) -> RayTrace:
    """Parametric voxel traversal (Amanatides-Woo) of a segment.

    Returns every cell the segment ``origin + t * unit(direction)``,
    ``0 <= t <= length``, passes through with positive chord length. The
    trace stops early if the segment leaves the grid.
    """
    dims = geometry.dims
    d = len(dims)
    o = np.asarray(origin, dtype=float).reshape(-1).tolist()
    res = geometry.resolution
    g0 = geometry.origin
    cell = [int(math.floor((o[a] - g0[a]) / res)) for a in range(d)]
    if not all(0 <= c < n for c, n in zip(cell, dims)):
        raise ValueError(f"ray origin {tuple(o)} lies outside the map")
    dvec = np.asarray(direction, dtype=float).reshape(-1).tolist()
    norm = math.sqrt(sum(v * v for v in dvec))
    if length <= 0.0 or norm == 0.0:
        return RayTrace(np.zeros((0, d), dtype=np.intp), np.zeros(0), np.zeros(0, dtype=np.intp))
    u = [v / norm for v in dvec]
    min_len = 1e-12 * res

    # row-major strides, so the flat index can be stepped alongside the cell
    strides = [1] * d
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * dims[a + 1]
    step = [0] * d
    t_max = [math.inf] * d
    t_delta = [math.inf] * d
    for a in range(d):
        if u[a] > 0.0:
            step[a] = 1
            t_max[a] = (g0[a] + (cell[a] + 1) * res - o[a]) / u[a]
            t_delta[a] = res / u[a]
        elif u[a] < 0.0:
            step[a] = -1
            t_max[a] = (g0[a] + cell[a] * res - o[a]) / u[a]
            t_delta[a] = -res / u[a]

    cells, lengths, flat = [], [], []
    f = sum(c * st for c, st in zip(cell, strides))
    axes = range(d)
    t = 0.0
    while True:
        a = min(axes, key=t_max.__getitem__)
        t_next = t_max[a]
        seg_end = t_next if t_next < length else length
        if seg_end - t > min_len:
            cells.append(tuple(cell))
            lengths.append(seg_end - t)
            flat.append(f)
        if t_next >= length:
            break
        cell[a] += step[a]
        if not 0 <= cell[a] < dims[a]:
            break
        f += step[a] * strides[a]
        t = t_next
        t_max[a] += t_delta[a]

    return RayTrace(np.array(cells, dtype=np.intp).reshape(-1, d), np.array(lengths),
                    np.array(flat, dtype=np.intp))


@dataclass
class SensorParams:
    """Inverse observation model parameters and beam layout.

    ``rays`` holds one vector per beam, each of norm ``r_max``, expressed
    in the sensor frame. The pivot entry of every parameter vector is 0.
    """

    phi_plus: np.ndarray
    psi_plus: np.ndarray
    phi_minus: np.ndarray
    r_max: float
    rays: np.ndarray

    def __post_init__(self):
        self.phi_plus = log_odds(self.phi_plus)
        self.psi_plus = log_odds(self.psi_plus)
        self.phi_minus = log_odds(self.phi_minus)
        if not (self.phi_plus.shape == self.psi_plus.shape == self.phi_minus.shape):
            raise ValueError("phi_plus, psi_plus and phi_minus must share length K+1")
        if np.any(self.phi_minus[1:] > 0.0):
            raise ValueError("phi_minus entries must be non-positive")
        if np.any(self.psi_plus[1:] <= 0.0):
            raise ValueError("psi_plus entries must be positive")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        self.rays = np.atleast_2d(np.asarray(self.rays, dtype=float))
        norms = np.linalg.norm(self.rays, axis=1)
        self.rays = self.rays * (self.r_max / norms)[:, None]

    @property
    def num_classes(self) -> int:
        return len(self.phi_plus) - 1

    def l_plus(self, y: int) -> np.ndarray:
        l = self.phi_plus.copy()
        l[y] += self.psi_plus[y]
        return l

    @classmethod
    def planar(cls, num_classes: int, n_rays: int, r_max: float, phi_plus=0.3, psi_plus=1.5,
               phi_minus=-1.0, fov: float = 2.0 * math.pi, start_angle: float = 0.0):
        """Evenly spaced planar beams; scalar parameters apply to every class."""
        angles = start_angle + fov * np.arange(n_rays) / n_rays
        rays = r_max * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return cls(
            _class_vector(phi_plus, num_classes),
            _class_vector(psi_plus, num_classes),
            _class_vector(phi_minus, num_classes),
            r_max,
            rays,
        )


def _class_vector(value, num_classes: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.concatenate([[0.0], np.full(num_classes, float(arr))])
    if len(arr) == num_classes:
        return np.concatenate([[0.0], arr])
    return arr


@dataclass(frozen=True)
class Measurement:
    range: float
    label: int
    ray_index: int
    pose: Pose


FREE = "free"
UNOBSERVED = "unobserved"

END_POINT_NUDGE = 1e-9   # in cells


def inverse_log_odds(params: SensorParams, status, prior) -> np.ndarray:
    """Log ratios of the inverse observation model for one cell.

    ``status`` is ``"free"``, ``"unobserved"``, or an object class id
    y >= 1 meaning the beam end point lies in the cell.
    """
    if isinstance(status, str):
        if status == FREE:
            return params.phi_minus.copy()
        if status == UNOBSERVED:
            return log_odds(prior)
        raise ValueError(f"unknown cell status {status!r}")
    y = int(status)
    if not 1 <= y <= params.num_classes:
        raise ValueError(f"occupied cells need a class in 1..{params.num_classes}, got {y}")
    return params.l_plus(y)


def beam_vector(params: SensorParams, pose: Pose, ray_index: int) -> np.ndarray:
    return pose.rotation @ params.rays[ray_index]


def trace_measurement(geometry: GridGeometry, params: SensorParams, z: Measurement) -> RayTrace:
    """Cells observed by a measurement, with the hit cell marked."""
    if z.label == 0 and not math.isclose(z.range, params.r_max):
        raise ValueError("a free label is only valid for a max-range return")
    r = min(max(z.range, 0.0), params.r_max)
    if z.label == 0:
        return raycast(geometry, z.pose.position, beam_vector(params, z.pose, z.ray_index), r)
    # an end point on a cell face belongs to the cell beyond it
    r_end = r + END_POINT_NUDGE * geometry.resolution
    trace = raycast(geometry, z.pose.position, beam_vector(params, z.pose, z.ray_index), r_end)
    if len(trace) == 0:
        return trace
    # end point left the map: no observed obstacle inside it
    if abs(float(np.sum(trace.lengths)) - r_end) > 1e-9 * max(1.0, r):
        return trace
    return trace.with_hit(len(trace) - 1)


def ray_pdf(trace: RayTrace, label: int, probs) -> float:
    """Likelihood of a (range, label) outcome under current beliefs.

    ``probs[j]`` is the categorical of the j-th cell on the trace. For a
    hit this is a density in 1/m; for the max-range free outcome it is the
    probability that every traversed cell is free.
    """
    probs = np.asarray(probs, dtype=float)
    if trace.hit_index is None:
        if label != 0:
            raise ValueError("a labelled outcome needs a hit cell")
        return float(np.prod(probs[: len(trace), 0]))
    n = trace.hit_index
    return float(probs[n, label] / trace.lengths[n] * np.prod(probs[:n, 0]))


def outcome_probabilities(probs) -> tuple[np.ndarray, float]:
    """Discrete outcome masses along a full-length beam.

    Returns ``(P, p_pass)`` where ``P[n, k-1]`` is the probability that the
    beam stops in the n-th cell with class k, and ``p_pass`` the probability
    that every cell is free. They sum to one.
    """
    probs = np.asarray(probs, dtype=float)
    free_before = np.concatenate([[1.0], np.cumprod(probs[:, 0])])
    P = probs[:, 1:] * free_before[:-1, None]
    return P, float(free_before[-1])


def rotate_rays(params: SensorParams, pose: Pose) -> np.ndarray:
    return params.rays @ pose.rotation.T


def scan_traces(geometry: GridGeometry, params: SensorParams, pose: Pose) -> list:
    """Full-range traces of every beam from ``pose``."""
    o = pose.position
    return [raycast(geometry, o, v, params.r_max) for v in rotate_rays(params, pose)]
