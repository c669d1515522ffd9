"""Dense multi-class occupancy grid with additive log-odds updates."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import entropy_from_log_odds, log_odds, softmax
from .sensor import GridGeometry, Measurement, SensorParams, trace_measurement

UNKNOWN = -1


def update_cell(h, l, prior) -> np.ndarray:
    """Posterior log-odds after one measurement: h + (l - prior)."""
    return np.asarray(h, dtype=float) + (np.asarray(l, dtype=float) - np.asarray(prior, dtype=float))


class MultiClassGrid:
    """Factorized belief over a 2-D or 3-D grid of cells.

    ``cells`` is an (N, K+1) array of log-odds vectors indexed by the flat
    cell index of ``geometry``. Log-odds are left unbounded unless ``clamp``
    is given as ``(min, max)``, in which case every touched entry is
    clipped after each update (used to mirror the octree's thresholds).
    """

    def __init__(self, geometry: GridGeometry, num_classes: int, prior=None,
                 clamp: Optional[tuple] = None):
        if num_classes < 1:
            raise ValueError("need at least one object class")
        self.geometry = geometry
        self.num_classes = num_classes
        self.prior = np.zeros(num_classes + 1) if prior is None else log_odds(prior)
        if self.prior.shape != (num_classes + 1,):
            raise ValueError("prior length must be K+1")
        if clamp is not None and not clamp[0] < 0.0 < clamp[1]:
            raise ValueError("clamp must satisfy min < 0 < max")
        self.clamp = clamp
        self.cells = np.tile(self.prior, (geometry.size, 1))

    @property
    def dims(self) -> tuple:
        return self.geometry.dims

    def copy(self) -> "MultiClassGrid":
        out = MultiClassGrid(self.geometry, self.num_classes, self.prior, self.clamp)
        out.cells = self.cells.copy()
        return out

    def log_odds_at(self, cell) -> np.ndarray:
        return self.cells[self.geometry.flat_index(cell)[0]]

    def probabilities(self) -> np.ndarray:
        return softmax(self.cells)

    def _apply(self, flat, l):
        h = update_cell(self.cells[flat], l, self.prior)
        if self.clamp is not None:
            h[..., 1:] = np.clip(h[..., 1:], self.clamp[0], self.clamp[1])
        self.cells[flat] = h

    def integrate_measurement(self, z: Measurement, params: SensorParams) -> np.ndarray:
        trace = trace_measurement(self.geometry, params, z)
        n_free = len(trace) if trace.hit_index is None else trace.hit_index
        if n_free:
            self._apply(trace.flat[:n_free], params.phi_minus)
        if trace.hit_index is not None:
            self._apply(trace.flat[trace.hit_index], params.l_plus(z.label))
        return trace.flat

    def integrate_scan(self, scan: Iterable[Measurement], params: SensorParams) -> np.ndarray:
        """Apply every beam of a scan; returns the sorted touched flat indices."""
        if params.num_classes != self.num_classes:
            raise ValueError("sensor and map disagree on the number of classes")
        touched = [self.integrate_measurement(z, params) for z in scan]
        if not touched:
            return np.zeros(0, dtype=np.intp)
        return np.unique(np.concatenate(touched))

    def entropy(self) -> float:
        return float(np.sum(entropy_from_log_odds(self.cells)))

    def explored_mask(self) -> np.ndarray:
        return np.any(self.cells != self.prior, axis=1).reshape(self.dims)

    def most_likely_map(self) -> np.ndarray:
        """Per-cell argmax class id; cells still at the prior are UNKNOWN."""
        labels = np.argmax(self.cells, axis=1)
        labels[~self.explored_mask().ravel()] = UNKNOWN
        return labels.reshape(self.dims)


def map_entropy(grid: MultiClassGrid) -> float:
    return grid.entropy()


def most_likely_map(grid: MultiClassGrid) -> np.ndarray:
    return grid.most_likely_map()


# gray levels for PGM snapshots: unknown, free, then object classes
PGM_UNKNOWN = 128
PGM_FREE = 255
PGM_CLASS_LEVELS = (0, 60, 100, 170, 200, 30, 80, 140, 220, 15)


def class_gray_level(label: int) -> int:
    if label == UNKNOWN:
        return PGM_UNKNOWN
    if label == 0:
        return PGM_FREE
    return PGM_CLASS_LEVELS[(label - 1) % len(PGM_CLASS_LEVELS)]


def write_pgm(labels: np.ndarray, path) -> None:
    """Binary PGM of a 2-D label grid; row 0 of the image is the max-y row."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("PGM export needs a 2-D label grid")
    lut = {int(v): class_gray_level(int(v)) for v in np.unique(labels)}
    img = np.vectorize(lut.__getitem__, otypes=[np.uint8])(labels.T[::-1])
    height, width = img.shape
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_belief_csv(grid: MultiClassGrid, path) -> None:
    """One row per cell: flat index then p0..pK with 9 significant digits."""
    probs = grid.probabilities()
    header = "cell," + ",".join(f"p{k}" for k in range(grid.num_classes + 1))
    with open(Path(path), "w", newline="") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(probs):
            fh.write(str(i) + "," + ",".join(f"{v:.9g}" for v in row) + "\n")


__all__ = [
    "UNKNOWN",
    "MultiClassGrid",
    "update_cell",
    "map_entropy",
    "most_likely_map",
    "write_pgm",
    "write_belief_csv",
]
