"""Built-in ground-truth worlds and CSV loading."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..sensor import GridGeometry


@dataclass
class Environment:
    """Ground-truth class grid indexed ``labels[ix, iy(, iz)]``."""

    name: str
    labels: np.ndarray
    resolution: float
    num_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.dtype.kind not in "iu":
            raise ValueError(f"labels of {self.name!r} must be integer class ids")
        if self.labels.min() < 0 or self.labels.max() > self.num_classes:
            raise ValueError(f"labels of {self.name!r} must lie in 0..{self.num_classes}")
        if not _border_closed(self.labels):
            raise ValueError(f"environment {self.name!r} must have an occupied border")

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.labels.shape, self.resolution)

    def free_cells(self) -> np.ndarray:
        return np.argwhere(self.labels == 0)


def _border_closed(labels: np.ndarray) -> bool:
    for axis in range(labels.ndim):
        for idx in (0, -1):
            if np.any(np.take(labels, idx, axis=axis) == 0):
                return False
    return True


def _box(g, x0, x1, y0, y1, label):
    g[x0:x1, y0:y1] = label


def maze_a() -> Environment:
    """Four rooms joined by doorways, objects of three classes."""
    g = np.zeros((32, 32), dtype=np.int64)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = 1
    g[15:17, :] = 1
    g[:, 15:17] = 1
    g[15:17, 6:10] = 0
    g[15:17, 22:26] = 0
    g[6:10, 15:17] = 0
    g[22:26, 15:17] = 0
    _box(g, 4, 7, 4, 7, 2)
    _box(g, 10, 13, 10, 12, 3)
    _box(g, 21, 24, 4, 6, 4)
    _box(g, 26, 29, 9, 12, 2)
    _box(g, 4, 6, 21, 25, 3)
    _box(g, 9, 12, 27, 29, 4)
    _box(g, 21, 23, 21, 23, 3)
    _box(g, 26, 28, 26, 29, 4)
    return Environment("maze_a", g, 0.25, 4)


def maze_b() -> Environment:
    """A long corridor with side rooms, objects of three classes."""
    g = np.zeros((32, 32), dtype=np.int64)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = 1
    g[:, 12] = 1
    g[:, 19] = 1
    for x in (4, 13, 24):
        g[x:x + 3, 12] = 0
    for x in (8, 20, 27):
        g[x:x + 3, 19] = 0
    g[10, 1:12] = 1
    g[21, 1:12] = 1
    g[16, 20:31] = 1
    g[10, 4:7] = 0
    g[21, 7:10] = 0
    g[16, 24:27] = 0
    _box(g, 3, 6, 3, 6, 2)
    _box(g, 14, 18, 3, 5, 3)
    _box(g, 25, 28, 6, 9, 4)
    _box(g, 5, 8, 24, 28, 4)
    _box(g, 20, 23, 25, 29, 2)
    _box(g, 11, 13, 22, 25, 3)
    _box(g, 26, 29, 22, 24, 3)
    return Environment("maze_b", g, 0.25, 4)


def corridor(length: int = 12, wall_class: int = 2, num_classes: int = 2) -> Environment:
    """Straight 1-cell corridor closed by a wall of ``wall_class`` at +x."""
    g = np.ones((length, 3), dtype=np.int64)
    g[1:length - 1, 1] = 0
    g[length - 1, 1] = wall_class
    return Environment("corridor", g, 1.0, num_classes)


BOX_WORLD_SIZE = 16.0


def box_world(resolution: float = 0.25) -> Environment:
    """3-D cube of side 16 m: walls and floor of class 1, boxes of classes 2-4.

    Box faces sit on 1 m boundaries so every resolution dividing 1 m
    describes the same world.
    """
    n = int(round(BOX_WORLD_SIZE / resolution))
    cpm = int(round(1.0 / resolution))
    g = np.zeros((n, n, n), dtype=np.uint8)
    g[:cpm] = g[-cpm:] = 1
    g[:, :cpm] = g[:, -cpm:] = 1
    g[:, :, :cpm] = g[:, :, -cpm:] = 1
    boxes = [
        ((3, 5), (3, 6), (1, 3), 2),
        ((9, 12), (2, 4), (1, 5), 3),
        ((5, 7), (10, 13), (1, 2), 4),
        ((11, 13), (9, 11), (1, 4), 2),
        ((7, 9), (6, 8), (4, 6), 3),
    ]
    for (x0, x1), (y0, y1), (z0, z1), lab in boxes:
        g[x0 * cpm:x1 * cpm, y0 * cpm:y1 * cpm, z0 * cpm:z1 * cpm] = lab
    return Environment("box_world", g, resolution, 4)


BUILTIN = {"maze_a": maze_a, "maze_b": maze_b, "corridor": corridor, "box_world": box_world}


def load_csv(path, resolution: float, num_classes: int) -> Environment:
    """Class grid from CSV: row j holds cells with y index j, column i is x."""
    arr = np.loadtxt(Path(path), delimiter=",", dtype=np.int64, ndmin=2)
    return Environment(Path(path).stem, arr.T, resolution, num_classes)


def get_environment(name: str, resolution=None, num_classes=None) -> Environment:
    if name in BUILTIN:
        env = BUILTIN[name]() if resolution is None or name != "box_world" else box_world(resolution)
        return env
    path = Path(name)
    if path.suffix == ".csv" and path.exists():
        if resolution is None or num_classes is None:
            raise ValueError("CSV environments need a resolution and a class count")
        return load_csv(path, resolution, num_classes)
    raise ValueError(f"unknown environment {name!r}")
