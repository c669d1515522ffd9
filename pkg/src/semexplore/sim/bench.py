"""Per-beam MI timing on a 3-D world: dense cell walk vs octree run lengths."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..mutinfo import beam_mi_rle, cell_tables, mi_from_tables, rle_segments
from ..octree import OctreeParams, SemanticOctree, SlotModel, node_update, prior_state, state_log_odds
from ..sensor import FREE, SensorParams, raycast
from .environments import BOX_WORLD_SIZE, Environment, get_environment

BENCH_COLUMNS = ("resolution", "N", "Q", "dense_ns", "rle_ns")
DEFAULT_RESOLUTIONS = (0.125, 0.0625, 0.03125, 0.015625)


@dataclass
class BenchRow:
    resolution: float
    N: float        # mean cells per beam
    Q: float        # mean runs per beam
    dense_ns: float  # mean time per beam
    rle_ns: float

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in BENCH_COLUMNS}


def mapped_states(num_classes: int, observations: int = 3) -> dict:
    """Node states of a map that has seen every cell a few times: free
    space observed free, objects observed with their true class."""
    sensor = SensorParams.planar(num_classes, 1, 1.0)
    model = SlotModel(sensor, OctreeParams(1.0, 1))
    states = {}
    for label in range(num_classes + 1):
        s = prior_state(num_classes)
        for _ in range(observations):
            s = node_update(s, FREE if label == 0 else label, model)
        states[label] = s
    return states


def beam_set(n_origins: int = 4, n_dirs: int = 16, length: float = 10.0, seed: int = 7):
    """Fixed beams of the box world, in meters.

    Directions are redrawn until the end point stays inside the world, so
    every beam spans its full length at every resolution.
    """
    rng = np.random.default_rng(seed)
    origins = [np.array([2.3, 7.7, 2.1]), np.array([8.1, 8.3, 6.9]),
               np.array([13.7, 6.2, 3.3]), np.array([6.4, 13.9, 9.2])][:n_origins]
    beams = []
    for o in origins:
        kept = 0
        while kept < n_dirs:
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            end = o + length * d
            if np.all(end > 0.1) and np.all(end < BOX_WORLD_SIZE - 0.1):
                beams.append((o, d, length))
                kept += 1
    return beams


class _Setup:
    """Both MI routes over one resolution of a labelled world."""

    def __init__(self, env: Environment):
        K = env.num_classes
        n = env.labels.shape[0]
        depth = int(round(math.log2(n)))
        if 2 ** depth != n:
            raise ValueError("benchmark worlds must have a power-of-two side")
        states = mapped_states(K)
        table = np.stack([state_log_odds(states[k], K) for k in range(K + 1)])
        self.env = env
        self.flat_labels = env.labels.reshape(-1)
        # the bound is evaluated against a prior-free map
        self.params = SensorParams.planar(K, 1, 1.0)
        self.tree = SemanticOctree.from_label_volume(env.labels, states,
                                                     OctreeParams(env.resolution, depth), K)
        # per-cell tables are precomputed once per map snapshot, as in planning
        self.tables = cell_tables(table, self.params, np.zeros(K + 1))

    def dense(self, beam) -> float:
        o, d, r = beam
        tr = raycast(self.env.geometry, o, d, r)
        lab = self.flat_labels[tr.flat]
        probs, f_hit, f_free = self.tables
        return mi_from_tables(probs[lab], f_hit[lab], f_free[lab])

    def rle(self, beam) -> float:
        rows, omegas = self.tree.ray_log_odds_runs(*beam)
        return beam_mi_rle(rle_segments(rows, omegas), self.params)

    def sizes(self, beams) -> tuple:
        N = np.mean([len(raycast(self.env.geometry, *beam)) for beam in beams])
        Q = np.mean([rle_segments(*self.tree.ray_log_odds_runs(*beam)).Q for beam in beams])
        return float(N), float(Q)


def _elapsed_ns(fn, arg) -> int:
    # untimed call first: the previous resolution may have evicted this one's caches
    fn(arg)
    t0 = time.perf_counter_ns()
    fn(arg)
    return time.perf_counter_ns() - t0


def bench_resolution_scaling(env_name: str = "box_world", resolutions=DEFAULT_RESOLUTIONS,
                             repeats: int = 25, beams=None, check: bool = True) -> list:
    """Mean per-beam time of the dense and run-length routes per resolution.

    Every (resolution, beam, route) is timed ``repeats`` times, each right
    after an untimed warm-up call, and the minimum kept. Resolutions are
    interleaved inside each repeat so slow periods on a shared machine hit
    all of them alike.
    """
    beams = beam_set() if beams is None else beams
    setups = [_Setup(get_environment(env_name, r)) for r in resolutions]
    if check:
        for s in setups:
            for beam in beams:
                a, b = s.dense(beam), s.rle(beam)
                if not math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12):
                    raise RuntimeError(f"dense and run-length MI disagree: {a} vs {b}")
    best = np.full((len(setups), len(beams), 2), np.inf)
    for _ in range(repeats):
        for i, s in enumerate(setups):
            for j, beam in enumerate(beams):
                best[i, j, 0] = min(best[i, j, 0], _elapsed_ns(s.dense, beam))
                best[i, j, 1] = min(best[i, j, 1], _elapsed_ns(s.rle, beam))
    rows = []
    for i, s in enumerate(setups):
        N, Q = s.sizes(beams)
        rows.append(BenchRow(s.env.resolution, N, Q, float(best[i, :, 0].mean()),
                             float(best[i, :, 1].mean())))
    return rows


def write_bench_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(f"{getattr(r, c):.9g}" for c in BENCH_COLUMNS) + "\n")


def growth_ratios(rows: list, column: str) -> list:
    vals = [getattr(r, column) for r in rows]
    return [b / a for a, b in zip(vals, vals[1:])]
