import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semexplore.sensor import (FREE, UNOBSERVED, GridGeometry, Measurement, Pose2, SensorParams,
                               inverse_log_odds, outcome_probabilities, ray_pdf, raycast,
                               rotate_rays, trace_measurement)


def test_raycast_axis_aligned():
    tr = raycast(GridGeometry((5, 5), 1.0), (0.5, 0.5), (1.0, 0.0), 2.5)
    assert [tuple(c) for c in tr.cells] == [(0, 0), (1, 0), (2, 0)]
    np.testing.assert_allclose(tr.lengths, [0.5, 1.0, 1.0])


def test_raycast_zero_range_is_empty():
    tr = raycast(GridGeometry((5, 5), 1.0), (0.5, 0.5), (1.0, 0.0), 0.0)
    assert len(tr) == 0


def test_raycast_diagonal_through_corners():
    tr = raycast(GridGeometry((2, 2), 1.0), (0.0, 0.0), (1.0, 1.0), 2 * math.sqrt(2))
    assert [tuple(c) for c in tr.cells] == [(0, 0), (1, 1)]
    np.testing.assert_allclose(tr.lengths, [math.sqrt(2)] * 2)


def test_raycast_origin_outside_raises():
    with pytest.raises(ValueError):
        raycast(GridGeometry((3, 3), 1.0), (-0.5, 1.0), (1.0, 0.0), 1.0)


def test_raycast_stops_at_map_edge():
    tr = raycast(GridGeometry((3, 3), 1.0), (0.5, 1.5), (1.0, 0.0), 10.0)
    assert len(tr) == 3
    assert tr.lengths.sum() == pytest.approx(2.5)


def test_raycast_flat_matches_cells():
    geo = GridGeometry((7, 5, 6), 0.5)
    tr = raycast(geo, (1.1, 0.3, 2.2), (0.4, 0.9, -0.3), 3.0)
    np.testing.assert_array_equal(tr.flat, np.ravel_multi_index(tuple(tr.cells.T), geo.dims))


@given(st.floats(0.05, 7.95), st.floats(0.05, 7.95), st.floats(-math.pi, math.pi), st.floats(0.1, 12.0))
def test_raycast_matches_sampling_oracle(x, y, ang, length):
    """Every cell the segment spends more than a sliver in is listed once, in order."""
    geo = GridGeometry((8, 8), 1.0)
    d = np.array([math.cos(ang), math.sin(ang)])
    tr = raycast(geo, (x, y), d, length)
    # oracle: fine uniform sampling of the clipped segment
    t = np.linspace(0, length, 20001)[1:-1]
    pts = np.array([x, y]) + t[:, None] * d
    inside = np.all((pts >= 0) & (pts < 8), axis=1)
    if not inside.all():
        pts = pts[: np.argmin(inside)]
    sampled = []
    for c in map(tuple, np.floor(pts).astype(int)):
        if not sampled or sampled[-1] != c:
            sampled.append(c)
    got = [tuple(c) for c in tr.cells]
    long_enough = [c for c, l in zip(got, tr.lengths) if l > 1e-3]
    assert [c for c in sampled if c in long_enough] == long_enough
    assert set(long_enough) <= set(sampled)
    assert tr.lengths.sum() <= length + 1e-9
    assert len(set(got)) == len(got)


def params(K=2, **kw):
    return SensorParams.planar(K, 4, 3.0, **kw)


def test_inverse_model_occupied():
    p = SensorParams([0, 0.2, 0.2], [0, 1, 1], [0, -0.4, -0.4], 3.0, [[1.0, 0.0]])
    np.testing.assert_allclose(inverse_log_odds(p, 1, [0, 0, 0]), [0, 1.2, 0.2])
    np.testing.assert_allclose(inverse_log_odds(p, FREE, [0, 0, 0]), [0, -0.4, -0.4])
    np.testing.assert_allclose(inverse_log_odds(p, UNOBSERVED, [0, 0, 0]), [0, 0, 0])
    with pytest.raises(ValueError):
        inverse_log_odds(p, 3, [0, 0, 0])


@pytest.mark.parametrize("field, value", [("phi_minus", [0, 0.1, -1]), ("psi_plus", [0, 0.0, 1.0])])
def test_sensor_params_validation(field, value):
    kw = dict(phi_plus=[0, 0.2, 0.2], psi_plus=[0, 1, 1], phi_minus=[0, -0.4, -0.4], r_max=2.0,
              rays=[[1.0, 0.0]])
    kw[field] = value
    with pytest.raises(ValueError):
        SensorParams(**kw)


def test_planar_rays_have_range_norm():
    p = SensorParams.planar(3, 16, 2.5)
    np.testing.assert_allclose(np.linalg.norm(p.rays, axis=1), 2.5)
    assert p.num_classes == 3


def test_rotate_rays_follows_heading():
    p = SensorParams.planar(1, 4, 1.0)
    r = rotate_rays(p, Pose2(0, 0, math.pi / 2))
    np.testing.assert_allclose(r[0], [0.0, 1.0], atol=1e-15)


def test_pose_theta_wrapped():
    assert Pose2(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
    assert Pose2(0, 0, -math.pi).theta == pytest.approx(math.pi)


def test_ray_pdf_uniform_binary():
    tr = raycast(GridGeometry((4, 1), 1.0), (0.0, 0.5), (1.0, 0.0), 2.0).with_hit(1)
    probs = np.full((2, 2), 0.5)
    assert ray_pdf(tr, 1, probs) == pytest.approx(0.25)


def test_ray_pdf_certain_hit():
    tr = raycast(GridGeometry((4, 1), 0.5), (0.1, 0.25), (1.0, 0.0), 0.3).with_hit(0)
    assert ray_pdf(tr, 2, [[0.0, 0.0, 1.0]]) == pytest.approx(1 / 0.3)


@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_outcome_masses_sum_to_one(K, n, seed):
    """Integrating the range density over each cell recovers the outcome masses."""
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(K + 1), size=n)
    geo = GridGeometry((n + 1, 1), 1.0)
    base = raycast(geo, (0.0, 0.5), (1.0, 0.0), float(n))
    P, p_pass = outcome_probabilities(probs)
    total = p_pass
    for i in range(n):
        for k in range(1, K + 1):
            dens = ray_pdf(base.with_hit(i), k, probs)
            total += dens * base.lengths[i]
            assert dens * base.lengths[i] == pytest.approx(P[i, k - 1], rel=1e-12, abs=1e-300)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_trace_measurement_hit_on_cell_face():
    geo = GridGeometry((8, 3), 1.0)
    p = SensorParams.planar(2, 1, 6.0)
    z = Measurement(5.0, 2, 0, Pose2(0.5, 1.5, 0.0))
    tr = trace_measurement(geo, p, z)
    assert tuple(tr.cells[tr.hit_index]) == (5, 1)
    assert len(tr) == 6


def test_trace_measurement_free_requires_max_range():
    geo = GridGeometry((8, 3), 1.0)
    p = SensorParams.planar(2, 1, 6.0)
    with pytest.raises(ValueError):
        trace_measurement(geo, p, Measurement(3.0, 0, 0, Pose2(0.5, 1.5, 0.0)))
    tr = trace_measurement(geo, p, Measurement(6.0, 0, 0, Pose2(0.5, 1.5, 0.0)))
    assert tr.hit_index is None


def test_trace_measurement_end_outside_map_has_no_hit():
    geo = GridGeometry((4, 3), 1.0)
    p = SensorParams.planar(2, 1, 6.0)
    tr = trace_measurement(geo, p, Measurement(5.0, 1, 0, Pose2(0.5, 1.5, 0.0)))
    assert tr.hit_index is None
