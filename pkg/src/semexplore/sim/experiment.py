"""Seeded exploration runs and their on-disk artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..gridmap import UNKNOWN, MultiClassGrid, write_belief_csv, write_pgm
from ..octree import SemanticOctree
from ..planner import Exhausted, ExplorationPlanner, find_frontiers
from ..sensor import Measurement, Pose2, Pose3, SensorParams
from .config import ConfigError, ExperimentConfig
from .environments import Environment, get_environment
from .simulate import RngStreams, simulate_scan

ENTROPY_CSV = "entropy.csv"
PLAN_LOG = "plan_log.jsonl"
MAP_PGM = "final_map.pgm"
BELIEF_CSV = "final_belief.csv"
OCTREE_BIN = "octree.bin"
OCTREE_STATS = "octree_stats.json"
FIGURE = "entropy.png"
MANIFEST = "manifest.json"


def class_precision(labels: np.ndarray, env: Environment) -> list:
    """Per object class precision of an argmax map over explored cells.

    Entry k-1 is None when class k is never predicted.
    """
    labels = np.asarray(labels)
    explored = labels != UNKNOWN
    out = []
    for k in range(1, env.num_classes + 1):
        pred = explored & (labels == k)
        n = int(pred.sum())
        out.append(None if n == 0 else float(np.sum(pred & (env.labels == k))) / n)
    return out


def _fmt(v) -> str:
    return "" if v is None else f"{v:.9g}"


@dataclass
class RunResult:
    rows: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    grid: Optional[MultiClassGrid] = None
    octree: Optional[SemanticOctree] = None
    exhausted: bool = False
    artifacts: dict = field(default_factory=dict)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r["distance"] for r in self.rows])

    @property
    def entropies(self) -> np.ndarray:
        return np.array([r["entropy"] for r in self.rows])


def _planar_to_volume(sensor: SensorParams) -> SensorParams:
    rays = np.hstack([sensor.rays, np.zeros((len(sensor.rays), 1))])
    return SensorParams(sensor.phi_plus, sensor.psi_plus, sensor.phi_minus, sensor.r_max, rays)


def _lift(z: Measurement, res: float) -> Measurement:
    p = z.pose
    rot = np.eye(3)
    rot[:2, :2] = p.rotation
    return Measurement(z.range, z.label, z.ray_index, Pose3(np.array([p.x, p.y, 0.5 * res]), rot))


def initial_pose(env: Environment, rngs: RngStreams) -> Pose2:
    free = env.free_cells()
    cell = free[int(rngs.init_pose.integers(len(free)))]
    x, y = env.geometry.cell_center(cell)
    return Pose2(float(x), float(y), 0.0)


def explore(cfg: ExperimentConfig, env: Optional[Environment] = None) -> RunResult:
    """Scan, integrate, plan and move until no frontier is left or the
    iteration budget runs out. One row is logged per executed pose."""
    if env is None:
        try:
            env = get_environment(cfg.environment, cfg.resolution, cfg.num_classes)
        except ValueError as exc:
            raise ConfigError("environment", str(exc)) from None
    if env.labels.ndim != 2:
        raise ConfigError("environment", "exploration runs need a 2-D environment")
    K = env.num_classes
    if cfg.num_classes is not None and cfg.num_classes != K:
        raise ConfigError("num_classes", f"environment {env.name!r} has {K} classes")
    sensor = cfg.sensor_params(K)
    noise = cfg.noise()
    geo = env.geometry
    rngs = RngStreams.from_seed(cfg.seed)

    grid = MultiClassGrid(geo, K)
    tree = None
    if cfg.octree.enabled:
        oparams = cfg.octree_params(env.resolution)
        if 2 ** oparams.max_depth < max(geo.dims):
            raise ConfigError("octree.max_depth", f"2^max_depth must cover {max(geo.dims)} cells")
        tree = SemanticOctree(oparams, K)
        sensor3 = _planar_to_volume(sensor)

    planner = ExplorationPlanner(geo, sensor, cfg.planner.strategy, cfg.planner.min_frontier_size,
                                 cfg.planner.terminal_cost)
    result = RunResult(grid=grid, octree=tree)

    def observe(pose, iteration, step, distance):
        scan = simulate_scan(env, pose, sensor, noise, rngs)
        grid.integrate_scan(scan, sensor)
        if tree is not None:
            tree.integrate_scan([_lift(z, env.resolution) for z in scan], sensor3)
        result.rows.append({
            "iteration": iteration,
            "step": step,
            "distance": distance,
            "x": pose.x,
            "y": pose.y,
            "entropy": grid.entropy(),
            "precision": class_precision(grid.most_likely_map(), env),
        })

    pose = initial_pose(env, rngs)
    distance = 0.0
    step = 0
    observe(pose, 0, step, distance)
    exclude: set = set()
    for it in range(1, cfg.max_iterations + 1):
        try:
            best, candidates = planner.select(grid, pose, exclude)
        except Exhausted:
            result.exhausted = True
            break
        result.plans.append({
            "iteration": it,
            "strategy": cfg.planner.strategy,
            "pose": [pose.x, pose.y, pose.theta],
            "candidates": [
                {"frontier": c.frontier_index, "goal": list(c.goal), "mi": c.mi, "cost": c.cost,
                 "score": c.score}
                for c in candidates
            ],
            "chosen": candidates.index(best),
        })
        for p in best.poses[1:]:
            if env.labels[geo.cell_of(p.position)] != 0:
                break
            distance += math.hypot(p.x - pose.x, p.y - pose.y)
            pose = p
            step += 1
            observe(pose, it, step, distance)
        # a goal that stays a frontier after a visit would be chosen forever
        if geo.cell_of(pose.position) == best.goal:
            labels = grid.most_likely_map()
            if any(tuple(best.goal) in map(tuple, f.cells.tolist())
                   for f in find_frontiers(labels, geo, 1)):
                exclude.add(best.goal)
    return result


def write_entropy_csv(rows: list, num_classes: int, path) -> None:
    cols = ["iteration", "step", "distance", "x", "y", "entropy"]
    cols += [f"precision_{k}" for k in range(1, num_classes + 1)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            vals = [str(r["iteration"]), str(r["step"]), _fmt(r["distance"]), _fmt(r["x"]),
                    _fmt(r["y"]), _fmt(r["entropy"])]
            vals += [_fmt(p) for p in r["precision"]]
            fh.write(",".join(vals) + "\n")


def read_entropy_csv(path) -> list:
    with open(path, newline="") as fh:
        return [{k: (float(v) if v != "" else None) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def write_plan_log(plans: list, path) -> None:
    with open(path, "w") as fh:
        for p in plans:
            fh.write(json.dumps(p, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir=None, figure: bool = True) -> RunResult:
    """Run one exploration experiment and write every artifact to ``out_dir``."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    result = explore(cfg)
    out.mkdir(parents=True, exist_ok=True)
    K = result.grid.num_classes
    write_entropy_csv(result.rows, K, out / ENTROPY_CSV)
    write_plan_log(result.plans, out / PLAN_LOG)
    write_pgm(result.grid.most_likely_map(), out / MAP_PGM)
    write_belief_csv(result.grid, out / BELIEF_CSV)
    names = [ENTROPY_CSV, PLAN_LOG, MAP_PGM, BELIEF_CSV]
    if result.octree is not None:
        (out / OCTREE_BIN).write_bytes(result.octree.to_bytes())
        result.octree.write_stats_json(out / OCTREE_STATS)
        names += [OCTREE_BIN, OCTREE_STATS]
    if figure:
        from .report import plot_entropy
        plot_entropy({cfg.planner.strategy: result}, out / FIGURE)
        names.append(FIGURE)
    result.artifacts = {n: sha256_file(out / n) for n in names}
    manifest = {
        "library": "semexplore",
        "version": __version__,
        "config": cfg.to_dict(with_output=False),
        "config_hash": cfg.hash(),
        "artifacts": result.artifacts,
        "exhausted": result.exhausted,
    }
    with open(out / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


def distance_to_reduction(result: RunResult, target_entropy: float) -> float:
    """Distance travelled when map entropy first drops to ``target_entropy``
    (inf if never)."""
    hit = np.nonzero(result.entropies <= target_entropy)[0]
    return float(result.distances[hit[0]]) if len(hit) else math.inf
