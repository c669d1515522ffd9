import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semexplore.gridmap import MultiClassGrid
from semexplore.octree import (EMPTY, FORMAT_VERSION, MAGIC, NodeState, OctreeNode, OctreeParams, SemanticOctree,
                               SlotModel, fuse_children, node_update, prior_state, state_log_odds, try_prune)
from semexplore.sensor import FREE, GridGeometry, SensorParams, raycast
from semexplore.sim.bench import mapped_states
from semexplore.sim.environments import box_world
from semexplore.sim.experiment import _lift, _planar_to_volume

from oracles import all_cell_queries, full_tree, random_scan, random_sensor, slot_update_reference

seeds = st.integers(0, 2 ** 32 - 1)


def model_for(K, phi_minus=-0.4, phi_plus=0.3, psi_plus=1.5, **kw):
    sensor = SensorParams.planar(K, 1, 1.0, phi_plus=phi_plus, psi_plus=psi_plus, phi_minus=phi_minus)
    return SlotModel(sensor, OctreeParams(1.0, 1, **kw))


def test_prior_state():
    assert prior_state(2) == NodeState((1, 2, EMPTY), (0.0, 0.0, 0.0, 0.0))
    s = prior_state(6)
    assert s.ids == (1, 2, 3) and s.vals[3] == pytest.approx(math.log(3))
    np.testing.assert_allclose(state_log_odds(s, 6), np.zeros(7), atol=1e-15)


def test_free_update_example():
    model = model_for(5)
    s = NodeState((1, 2, 3), (2.0, 1.0, 0.5, 0.3))
    out = node_update(s, FREE, model)
    assert out.ids == (1, 2, 3)
    np.testing.assert_allclose(out.vals, [1.6, 0.6, 0.1, -0.1], atol=1e-15)


def test_observed_class_in_top_three():
    model = model_for(5)
    s = NodeState((1, 2, 3), (0.4, 0.2, 0.1, 0.0))
    out = node_update(s, 3, model)
    # 3 gains psi_plus + phi_plus, the others gain phi_plus
    assert out.ids == (3, 1, 2)
    np.testing.assert_allclose(out.vals, [1.9, 0.7, 0.5, 0.3], atol=1e-15)


def test_observed_class_enters_from_others():
    model = model_for(5, alpha=0.5)
    s = NodeState((1, 2, 3), (0.4, 0.2, 0.1, 0.0))
    out = node_update(s, 5, model)
    assert out.ids[0] == 5
    assert out.vals[0] == pytest.approx(math.log(0.5) + 1.8)
    # class 3 is pushed into others
    assert 3 not in out.ids
    assert out.vals[3] == pytest.approx(np.logaddexp(0.3 + math.log(0.5), 0.4), rel=1e-14)


def test_clamps_bound_slots():
    model = model_for(2)
    s = prior_state(2)
    for _ in range(50):
        s = node_update(s, 1, model)
    assert s.vals[0] == 3.5
    for _ in range(50):
        s = node_update(s, FREE, model)
    assert s.vals[:2] == (-2.0, -2.0)


def test_rejects_bad_class():
    with pytest.raises(ValueError):
        node_update(prior_state(3), 4, model_for(3))


@given(seeds, st.integers(1, 7))
def test_update_matches_reference(seed, K):
    rng = np.random.default_rng(seed)
    sensor = random_sensor(rng, K)
    alpha = float(rng.uniform(0.1, 0.9))
    params = OctreeParams(1.0, 1, alpha=alpha, min_thresh=-3.0, max_thresh=4.0)
    model = SlotModel(sensor, params)
    s = prior_state(K)
    for _ in range(30):
        obs = FREE if rng.random() < 0.4 else int(rng.integers(1, K + 1))
        ids, vals = slot_update_reference(s.ids, s.vals, obs, sensor, alpha, -3.0, 4.0)
        s = node_update(s, obs, model)
        assert s.ids == ids
        np.testing.assert_allclose(s.vals, vals, rtol=1e-12, atol=1e-12)


def random_state(rng, K, params):
    s = prior_state(K)
    model = SlotModel(random_sensor(rng, K), params)
    for _ in range(int(rng.integers(0, 8))):
        s = node_update(s, FREE if rng.random() < 0.5 else int(rng.integers(1, K + 1)), model)
    return s


@given(seeds, st.integers(1, 7))
def test_fusion_properties(seed, K):
    rng = np.random.default_rng(seed)
    params = OctreeParams(1.0, 1)
    a, b = random_state(rng, K, params), random_state(rng, K, params)
    assert fuse_children(a, a, K, params) == a
    f = fuse_children(a, b, K, params)
    used = [c for c in f.ids if c != EMPTY]
    assert len(set(used)) == len(used) == min(K, 3)
    assert list(f.vals[:len(used)]) == sorted(f.vals[:len(used)], reverse=True)
    assert params.min_thresh <= f.vals[3] <= params.max_thresh


def test_try_prune_cases():
    s, t = prior_state(2), NodeState((1, 2, EMPTY), (0.5, 0.0, 0.0, 0.0))
    leaf = OctreeNode(s)
    assert not try_prune(leaf)
    same = OctreeNode(t, [OctreeNode(s) for _ in range(8)])
    assert try_prune(same) and same.is_leaf() and same.state == s
    mixed = OctreeNode(s, [OctreeNode(s) for _ in range(7)] + [OctreeNode(t)])
    assert not try_prune(mixed) and not mixed.is_leaf()
    deep = OctreeNode(s, [OctreeNode(s) for _ in range(7)] + [OctreeNode(s, [OctreeNode(s) for _ in range(8)])])
    assert not try_prune(deep)


def blocky_labels(rng, n, K):
    """Label volume built from a few axis-aligned boxes so pruning has work to do."""
    labels = np.zeros((n, n, n), dtype=np.int64)
    for _ in range(int(rng.integers(0, 5))):
        lo = rng.integers(0, n, 3)
        hi = lo + rng.integers(1, n, 3)
        labels[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = rng.integers(0, K + 1)
    return labels


@given(seeds, st.integers(1, 5), st.integers(1, 3))
def test_pruning_preserves_point_queries(seed, K, depth):
    rng = np.random.default_rng(seed)
    params = OctreeParams(0.5, depth)
    states = {k: random_state(rng, K, params) for k in range(K + 1)}
    tree = full_tree(blocky_labels(rng, 2 ** depth, K), states, params, K)
    before = all_cell_queries(tree)
    leaves = tree.leaf_count()
    tree.prune_all()
    assert all_cell_queries(tree) == before
    assert tree.leaf_count() <= leaves


def test_pruning_halves_box_world_leaves():
    env = box_world(0.5)
    states = mapped_states(env.num_classes)
    params = OctreeParams(0.5, 5)
    tree = full_tree(env.labels, states, params, env.num_classes)
    before = tree.leaf_count()
    tree.prune_all()
    assert before == 32 ** 3
    assert tree.leaf_count() <= 0.5 * before
    built = SemanticOctree.from_label_volume(env.labels, states, params, env.num_classes)
    assert built.leaf_count() == tree.leaf_count()


def test_mixed_surface_is_not_pruned():
    K = 2
    states = mapped_states(K)
    labels = np.zeros((4, 4, 4), dtype=np.int64)
    labels[0, 0, 0] = 1
    tree = SemanticOctree.from_label_volume(labels, states, OctreeParams(1.0, 2), K)
    state, size, depth = tree.query((0.5, 0.5, 0.5))
    assert state == states[1] and size == 1.0 and depth == 2
    state, size, depth = tree.query((3.5, 3.5, 3.5))
    assert state == states[0] and size == 2.0 and depth == 1


def test_query_depth_and_bounds():
    K = 2
    tree = SemanticOctree(OctreeParams(1.0, 3), K)
    state, size, depth = tree.query((0.5, 0.5, 0.5))
    assert state == prior_state(K) and size == 8.0 and depth == 0
    model = model_for(K)
    tree.update_cell((1, 2, 3), 2, model)
    assert tree.query((1.5, 2.5, 3.5))[2] == 3
    assert tree.query((1.5, 2.5, 3.5), depth=1)[1] == 4.0
    with pytest.raises(ValueError):
        tree.query((8.5, 0.0, 0.0))


@given(seeds, st.integers(1, 3))
def test_octree_matches_grid_without_others(seed, K):
    rng = np.random.default_rng(seed)
    geo = GridGeometry((16, 16), 0.25)
    sensor = random_sensor(rng, K, n_rays=8, r_max=1.5)
    params = OctreeParams(0.25, 4, min_thresh=-2.0, max_thresh=3.5)
    grid = MultiClassGrid(geo, K, clamp=(-2.0, 3.5))
    tree = SemanticOctree(params, K)
    sensor3 = _planar_to_volume(sensor)
    for _ in range(10):
        scan = random_scan(rng, geo, sensor)
        grid.integrate_scan(scan, sensor)
        tree.integrate_scan([_lift(z, 0.25) for z in scan], sensor3)
    for cell in np.ndindex(16, 16):
        x, y = geo.cell_center(cell)
        got = tree.query_log_odds((x, y, 0.125))
        np.testing.assert_allclose(got, grid.log_odds_at(cell), rtol=0, atol=1e-10)


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    K = 5
    params = OctreeParams(0.5, 3, origin=(1.0, -2.0, 0.5))
    states = {k: random_state(rng, K, params) for k in range(K + 1)}
    tree = SemanticOctree.from_label_volume(blocky_labels(rng, 8, K), states, params, K)
    data = tree.to_bytes()
    header = struct.calcsize("<HHHd3d")
    assert data[:4] == MAGIC
    assert struct.unpack_from("<HHHd3d", data, 4) == (FORMAT_VERSION, K, 3, 0.5, 1.0, -2.0, 0.5)
    assert len(data) == 4 + header + tree.node_count() * struct.calcsize("<B4i4d")
    back = SemanticOctree.from_bytes(data)
    assert back.to_bytes() == data
    assert all_cell_queries(back) == all_cell_queries(tree)
    with pytest.raises(ValueError):
        SemanticOctree.from_bytes(b"XXXX" + data[4:])

    tree.write_stats_json(tmp_path / "s.json")
    stats = json.loads((tmp_path / "s.json").read_text())
    assert stats["leaf_count"] == tree.leaf_count()
    assert sum(stats["depth_histogram"].values()) == stats["node_count"]


@given(seeds)
def test_ray_leaves_cover_raycast_cells(seed):
    rng = np.random.default_rng(seed)
    K = 3
    params = OctreeParams(0.5, 4)
    states = mapped_states(K)
    tree = SemanticOctree.from_label_volume(blocky_labels(rng, 16, K), states, params, K)
    o = rng.uniform(0.05, 7.95, 3)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    length = float(rng.uniform(0.1, 6.0))
    tr = raycast(tree.geometry, o, d, length)
    leaves = tree.ray_leaves(o, d, length)
    assert sum(w for _, w in leaves) == len(tr)
    flat_states = [tree.query(tree.geometry.cell_center(c))[0] for c in tr.cells]
    expanded = [s for s, w in leaves for _ in range(w)]
    assert expanded == flat_states
