"""Semantic octree storing the three most likely classes plus an *others* slot.

Each node keeps three (class id, log-ratio) pairs sorted by log-ratio and a
fourth log-ratio lumping every remaining object class. Log-ratios are
against the free class, which is the implicit zero pivot. When K <= 3 every
class has its own slot and the *others* slot is unused.
"""

from __future__ import annotations

import json
import math
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import logsumexp
from .sensor import FREE, GridGeometry, Measurement, SensorParams, trace_measurement

EMPTY = -1      # class-id slot not in use (K < 3)
OTHERS = -2     # class id written for the *others* slot in the binary stream


@dataclass(frozen=True)
class OctreeParams:
    resolution: float
    max_depth: int
    alpha: float = 0.5
    min_thresh: float = -2.0
    max_thresh: float = 3.5
    phi_plus_others: Optional[float] = None
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.min_thresh < 0.0 < self.max_thresh:
            raise ValueError("thresholds must satisfy min < 0 < max")
        if self.max_depth < 0 or self.resolution <= 0:
            raise ValueError("need max_depth >= 0 and a positive resolution")

    @property
    def size(self) -> float:
        return self.resolution * 2 ** self.max_depth


@dataclass(frozen=True)
class NodeState:
    """``ids``: three class ids (EMPTY for unused); ``vals``: four log-ratios."""

    ids: tuple
    vals: tuple

    def slots(self):
        return [(c, v) for c, v in zip(self.ids, self.vals) if c != EMPTY]


def prior_state(num_classes: int) -> NodeState:
    """Node state of a zero (uniform) prior."""
    top = [c for c in range(1, min(num_classes, 3) + 1)]
    ids = tuple(top + [EMPTY] * (3 - len(top)))
    others = math.log(num_classes - 3) if num_classes > 3 else 0.0
    return NodeState(ids, (0.0, 0.0, 0.0, others))


def _finish(pairs, others: float, num_classes: int, params: OctreeParams) -> NodeState:
    """Keep the top three, clamp, pad, and sort descending (ties by class id).

    Sorting after clamping keeps equal states equal: slots tied at a clamp
    bound always appear in class-id order.
    """
    lo, hi = params.min_thresh, params.max_thresh
    pairs = sorted(pairs, key=lambda cv: (-cv[1], cv[0]))[:3]
    pairs = sorted(((c, min(max(v, lo), hi)) for c, v in pairs), key=lambda cv: (-cv[1], cv[0]))
    ids = [c for c, _ in pairs] + [EMPTY] * (3 - len(pairs))
    vals = [v for _, v in pairs] + [0.0] * (3 - len(pairs))
    others = min(max(others, lo), hi) if num_classes > 3 else 0.0
    return NodeState(tuple(ids), tuple(vals) + (others,))


class SlotModel:
    """Slot-level increments derived from the sensor parameters."""

    def __init__(self, sensor: SensorParams, params: OctreeParams):
        self.sensor = sensor
        self.params = params
        self.K = sensor.num_classes
        phi = sensor.phi_plus[1:]
        self.phi_plus_others = (float(params.phi_plus_others) if params.phi_plus_others is not None
                                else float(logsumexp(phi) - math.log(len(phi))))

    def free_others(self, ids) -> float:
        rest = [c for c in range(1, self.K + 1) if c not in ids]
        if not rest:
            return 0.0
        vals = self.sensor.phi_minus[rest]
        return float(logsumexp(vals) - math.log(len(rest)))


def node_update(state: NodeState, observation, model: SlotModel) -> NodeState:
    """Fuse one observation of a leaf into its state.

    ``observation`` is ``"free"`` or an object class id y >= 1.
    """
    params, K = model.params, model.K
    pairs = state.slots()
    h4 = state.vals[3]
    if observation == FREE:
        l_minus = model.sensor.phi_minus
        new = [(c, v + l_minus[c]) for c, v in pairs]
        return _finish(new, h4 + model.free_others(state.ids), K, params)

    y = int(observation)
    if not 1 <= y <= K:
        raise ValueError(f"class observations need y in 1..{K}, got {y}")
    l_plus = model.sensor.l_plus(y)
    if y in state.ids:
        new = [(c, v + l_plus[c]) for c, v in pairs]
        return _finish(new, h4 + model.phi_plus_others, K, params)

    # y sits inside *others*: carve out a fraction alpha for it
    h_aux = h4 + math.log(params.alpha)
    h4 = h4 + model.phi_plus_others + math.log(1.0 - params.alpha)
    cand = [(c, v + l_plus[c]) for c, v in pairs] + [(y, h_aux + l_plus[y])]
    cand.sort(key=lambda cv: (-cv[1], cv[0]))
    keep, dropped = cand[:3], cand[3:]
    for _, v in dropped:
        h4 = float(logsumexp([v, h4]))
    return _finish(keep, h4, K, params)


def fuse_children(a: NodeState, b: NodeState, num_classes: int, params: OctreeParams) -> NodeState:
    """Average two node states, re-deriving the top three and *others*."""
    has_others = num_classes > 3
    va, vb = dict(a.slots()), dict(b.slots())
    oa, ob = a.vals[3], b.vals[3]

    def fill(v, other_v, h4):
        missing = [c for c in other_v if c not in v]
        o = h4 - math.log(1 + len(missing))
        out = dict(v)
        for c in missing:
            out[c] = o
        return out, o

    va, oa = fill(va, vb, oa)
    vb, ob = fill(vb, dict(a.slots()), ob)
    classes = sorted(va)
    fused = [(c, (va[c] + vb[c]) / 2.0) for c in classes]
    fused.sort(key=lambda cv: (-cv[1], cv[0]))
    others = 0.0
    if has_others:
        others = float(logsumexp([(oa + ob) / 2.0] + [v for _, v in fused[3:]]))
    return _finish(fused[:3], others, num_classes, params)


def state_log_odds(state: NodeState, num_classes: int) -> np.ndarray:
    """Full (K+1) log-odds vector a node state stands for.

    Classes folded into *others* share its mass evenly.
    """
    h = np.zeros(num_classes + 1)
    if num_classes > 3:
        h[1:] = state.vals[3] - math.log(num_classes - 3)
    for c, v in state.slots():
        h[c] = v
    return h


class OctreeNode:
    __slots__ = ("state", "children")

    def __init__(self, state: NodeState, children=None):
        self.state = state
        self.children = children

    def is_leaf(self) -> bool:
        return self.children is None


def try_prune(node: OctreeNode) -> bool:
    """Collapse 8 leaf children with identical states into their parent."""
    ch = node.children
    if ch is None or len(ch) != 8:
        return False
    first = ch[0].state
    if not all(c.children is None and c.state == first for c in ch):
        return False
    node.state = first
    node.children = None
    return True


def _child_index(key, level_bit: int) -> int:
    return (((key[0] >> level_bit) & 1)
            | (((key[1] >> level_bit) & 1) << 1)
            | (((key[2] >> level_bit) & 1) << 2))


class SemanticOctree:
    """Octree over a cube of side ``resolution * 2**max_depth``.

    The whole cube starts as one leaf in the prior state; leaves are split
    lazily when a finer cell is observed.
    """

    def __init__(self, params: OctreeParams, num_classes: int):
        self.params = params
        self.num_classes = num_classes
        self.root = OctreeNode(prior_state(num_classes))
        n = 2 ** params.max_depth
        self.geometry = GridGeometry((n, n, n), params.resolution, params.origin)

    # -- lookup ----------------------------------------------------------

    def key_of(self, point) -> tuple:
        key = self.geometry.cell_of(point)
        if not self.geometry.contains_cell(key):
            raise ValueError(f"point {tuple(np.asarray(point, dtype=float))} lies outside the octree")
        return key

    def query(self, point, depth: Optional[int] = None):
        """Deepest stored node containing ``point`` (or its ancestor at ``depth``).

        Returns ``(state, node_size_m, node_depth)``.
        """
        key = self.key_of(point)
        node, d = self.root, 0
        D = self.params.max_depth
        while node.children is not None and (depth is None or d < depth):
            node = node.children[_child_index(key, D - d - 1)]
            d += 1
        return node.state, self.params.resolution * 2 ** (D - d), d

    def query_log_odds(self, point, depth: Optional[int] = None) -> np.ndarray:
        return state_log_odds(self.query(point, depth)[0], self.num_classes)

    def _leaf_for_update(self, key) -> OctreeNode:
        node = self.root
        D = self.params.max_depth
        for d in range(D):
            if node.children is None:
                node.children = [OctreeNode(node.state) for _ in range(8)]
            node = node.children[_child_index(key, D - d - 1)]
        return node

    # -- updates ---------------------------------------------------------

    def update_cell(self, key, observation, model: SlotModel) -> None:
        leaf = self._leaf_for_update(key)
        leaf.state = node_update(leaf.state, observation, model)

    def integrate_scan(self, scan: Iterable[Measurement], sensor: SensorParams, prune: bool = True) -> int:
        """Raycast each beam at leaf resolution and fuse it into the leaves.

        Inner nodes on touched paths are then refreshed bottom-up (pruned
        where possible, otherwise re-fused from their children). Returns the
        number of leaf updates applied.
        """
        if sensor.num_classes != self.num_classes:
            raise ValueError("sensor and octree disagree on the number of classes")
        model = SlotModel(sensor, self.params)
        touched = set()
        updates = 0
        for z in scan:
            trace = trace_measurement(self.geometry, sensor, z)
            n_free = len(trace) if trace.hit_index is None else trace.hit_index
            for cell in trace.cells[:n_free]:
                key = tuple(int(c) for c in cell)
                self.update_cell(key, FREE, model)
                touched.add(key)
            if trace.hit_index is not None:
                key = tuple(int(c) for c in trace.cells[trace.hit_index])
                self.update_cell(key, z.label, model)
                touched.add(key)
            updates += len(trace)
        if touched:
            self._refresh(self.root, 0, list(touched), prune)
        return updates

    def _refresh(self, node: OctreeNode, depth: int, keys, prune: bool) -> None:
        if node.children is None:
            return
        bit = self.params.max_depth - depth - 1
        groups: dict = {}
        for k in keys:
            groups.setdefault(_child_index(k, bit), []).append(k)
        for idx, sub in groups.items():
            self._refresh(node.children[idx], depth + 1, sub, prune)
        if prune and try_prune(node):
            return
        node.state = self.fuse_all(node.children)

    def fuse_all(self, children) -> NodeState:
        """Left fold of pairwise fusion over children in Morton order."""
        state = children[0].state
        for c in children[1:]:
            state = fuse_children(state, c.state, self.num_classes, self.params)
        return state

    def prune_all(self) -> int:
        """Bottom-up pruning pass over the whole tree; returns nodes pruned."""
        count = 0

        def visit(node):
            nonlocal count
            if node.children is None:
                return
            for c in node.children:
                visit(c)
            if try_prune(node):
                count += 1

        visit(self.root)
        return count

    # -- construction from a dense label volume -----------------------------

    @classmethod
    def from_label_volume(cls, labels: np.ndarray, states: dict, params: OctreeParams,
                          num_classes: int) -> "SemanticOctree":
        """Build a pruned tree whose leaves take ``states[label]``.

        ``labels`` must be a cube of side ``2**max_depth``. Homogeneous
        blocks become single leaves.
        """
        n = 2 ** params.max_depth
        if labels.shape != (n, n, n):
            raise ValueError(f"label volume must be {n}^3")
        tree = cls(params, num_classes)

        def build(x, y, z, size):
            block = labels[x:x + size, y:y + size, z:z + size]
            first = block.flat[0]
            if size == 1 or np.all(block == first):
                return OctreeNode(states[int(first)])
            h = size // 2
            children = [build(x + (i & 1) * h, y + ((i >> 1) & 1) * h, z + ((i >> 2) & 1) * h, h)
                        for i in range(8)]
            node = OctreeNode(children[0].state, children)
            node.state = tree.fuse_all(children)
            return node

        tree.root = build(0, 0, 0, n)
        return tree

    # -- ray runs for run-length MI ----------------------------------------

    def ray_leaves(self, origin, direction, length: float):
        """Leaves crossed by a segment with the number of leaf-resolution cells
        the segment crosses inside each.

        Returns a list of ``(state, omega)`` pairs, nearest first. Large
        pruned leaves are stepped over in one move, so the cost scales with
        the number of stored leaves on the path, not with the resolution.
        """
        geo = self.geometry
        o = np.asarray(origin, dtype=float)
        cell = list(self.key_of(o))
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        res = geo.resolution
        n = geo.dims[0]
        D = self.params.max_depth
        step, t_max, t_delta = [0] * 3, [math.inf] * 3, [math.inf] * 3
        for a in range(3):
            if u[a] > 0.0:
                step[a] = 1
                t_max[a] = (geo.origin[a] + (cell[a] + 1) * res - o[a]) / u[a]
                t_delta[a] = res / u[a]
            elif u[a] < 0.0:
                step[a] = -1
                t_max[a] = (geo.origin[a] + cell[a] * res - o[a]) / u[a]
                t_delta[a] = -res / u[a]

        out = []
        while True:
            # locate the stored leaf holding the current cell
            node, d = self.root, 0
            while node.children is not None:
                node = node.children[_child_index(cell, D - d - 1)]
                d += 1
            side = 1 << (D - d)
            lo = [(c >> (D - d)) << (D - d) for c in cell]
            # parameter at which the segment leaves this leaf, per axis
            inner = [0, 0, 0]   # plane crossings left inside this leaf, per axis
            exit_t = [math.inf] * 3
            for a in range(3):
                if step[a] > 0:
                    inner[a] = lo[a] + side - 1 - cell[a]
                elif step[a] < 0:
                    inner[a] = cell[a] - lo[a]
                else:
                    continue
                exit_t[a] = t_max[a] + inner[a] * t_delta[a]
            ea = min(range(3), key=exit_t.__getitem__)
            t_exit = exit_t[ea]
            stop = t_exit >= length
            omega = 1
            moves = [0, 0, 0]
            for a in range(3):
                if step[a] == 0:
                    continue
                if a == ea and not stop:
                    moves[a] = inner[a]
                elif t_max[a] < (length if stop else t_exit):
                    limit = length if stop else t_exit
                    moves[a] = min(math.ceil((limit - t_max[a]) / t_delta[a]), inner[a])
                omega += moves[a]
            out.append((node.state, omega))
            if stop:
                break
            for a in range(3):
                cell[a] += step[a] * moves[a]
                t_max[a] += moves[a] * t_delta[a]
            cell[ea] += step[ea]
            t_max[ea] += t_delta[ea]
            if not 0 <= cell[ea] < n:
                break
        return out

    def ray_log_odds_runs(self, origin, direction, length: float):
        """``(h_rows, omegas)`` along a segment, ready for ``rle_segments``."""
        leaves = self.ray_leaves(origin, direction, length)
        rows = np.stack([state_log_odds(s, self.num_classes) for s, _ in leaves])
        return rows, [w for _, w in leaves]

    # -- stats and serialization ------------------------------------------

    def iter_nodes(self):
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            yield node, d
            if node.children is not None:
                stack.extend((c, d + 1) for c in reversed(node.children))

    def leaf_count(self) -> int:
        return sum(1 for node, _ in self.iter_nodes() if node.children is None)

    def node_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())

    def stats(self) -> dict:
        hist = Counter(d for _, d in self.iter_nodes())
        return {
            "node_count": self.node_count(),
            "leaf_count": self.leaf_count(),
            "depth_histogram": {str(d): hist[d] for d in sorted(hist)},
        }

    def write_stats_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.stats(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_bytes(self) -> bytes:
        p = self.params
        header = MAGIC + struct.pack("<HHHd3d", FORMAT_VERSION, self.num_classes, p.max_depth,
                                     p.resolution, *p.origin)
        parts = [header]
        for node, _ in self.iter_nodes():
            mask = 0 if node.children is None else 0xFF
            s = node.state
            parts.append(struct.pack("<B4i4d", mask, *s.ids, OTHERS, *s.vals))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, params: Optional[OctreeParams] = None) -> "SemanticOctree":
        if data[:4] != MAGIC:
            raise ValueError("not a semantic octree stream")
        version, K, max_depth, res, ox, oy, oz = struct.unpack_from("<HHHd3d", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported octree stream version {version}")
        if params is None:
            params = OctreeParams(res, max_depth, origin=(ox, oy, oz))
        tree = cls(params, K)
        rec = struct.Struct("<B4i4d")
        offset = 4 + struct.calcsize("<HHHd3d")

        def read():
            nonlocal offset
            mask, i0, i1, i2, _, v0, v1, v2, v3 = rec.unpack_from(data, offset)
            offset += rec.size
            node = OctreeNode(NodeState((i0, i1, i2), (v0, v1, v2, v3)))
            if mask:
                node.children = [read() for _ in range(8)]
            return node

        tree.root = read()
        return tree


MAGIC = b"SOCT"
FORMAT_VERSION = 1
