"""Seeded random streams and noisy range-category scan simulation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..sensor import Measurement, Pose, SensorParams, raycast, rotate_rays
from .environments import Environment


def stream(seed: int, name: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, name).

    Each subsystem draws from its own stream, so adding draws in one place
    never shifts the samples seen elsewhere.
    """
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class RngStreams:
    range_noise: np.random.Generator
    class_noise: np.random.Generator
    init_pose: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        return cls(stream(seed, "range-noise"), stream(seed, "class-noise"), stream(seed, "init-pose"))


@dataclass(frozen=True)
class SensorNoise:
    range_sigma: float = 0.03
    misclass_prob: float = 0.2

    def __post_init__(self):
        if self.range_sigma < 0:
            raise ValueError("range_sigma must be non-negative")
        if not 0.0 <= self.misclass_prob < 1.0:
            raise ValueError("misclass_prob must lie in [0, 1)")


def true_hit(env: Environment, origin, vector, r_max: float):
    """Distance to and class of the first occupied cell along a beam, or None."""
    trace = raycast(env.geometry, origin, vector, r_max)
    labels = env.labels[tuple(trace.cells.T)]
    occupied = np.nonzero(labels)[0]
    if len(occupied) == 0:
        return None
    i = occupied[0]
    return float(np.sum(trace.lengths[:i])), int(labels[i])


def simulate_scan(env: Environment, pose: Pose, sensor: SensorParams, noise: SensorNoise,
                  rngs: RngStreams) -> list:
    """One noisy measurement per sensor ray."""
    cell = env.geometry.cell_of(pose.position)
    if not env.geometry.contains_cell(cell):
        raise ValueError("pose lies outside the environment")
    if env.labels[cell] != 0:
        raise ValueError(f"pose {tuple(pose.position)} lies in an occupied cell")
    K = sensor.num_classes
    scan = []
    for b, vec in enumerate(rotate_rays(sensor, pose)):
        hit = true_hit(env, pose.position, vec, sensor.r_max)
        if hit is None:
            scan.append(Measurement(sensor.r_max, 0, b, pose))
            continue
        dist, label = hit
        r = dist
        if noise.range_sigma > 0:
            r += noise.range_sigma * rngs.range_noise.standard_normal()
        r = min(max(r, 0.0), sensor.r_max)
        if K > 1 and noise.misclass_prob > 0 and rngs.class_noise.random() < noise.misclass_prob:
            others = [k for k in range(1, K + 1) if k != label]
            label = others[int(rngs.class_noise.integers(len(others)))]
        scan.append(Measurement(r, label, b, pose))
    return scan
