"""Closed-form Shannon mutual information between a multi-class map and beams.

Two evaluation routes share the same per-cell quantities:

* the dense route walks the N cells of a beam with running prefix
  products/sums, O(N K) per beam;
* the run-length route groups consecutive identical cells into Q runs and
  sums each run in closed form, O(Q K) per beam.

``beam_mi_oracle`` enumerates outcomes and applies Bayes' rule cell by cell,
sharing no code with either route beyond ``softmax``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import f_gain, kl_divergence, softmax
from .sensor import GridGeometry, Pose, RayTrace, SensorParams, raycast, rotate_rays


@dataclass
class OpCounter:
    """Counts (cell or run) x class terms evaluated by the MI recursions."""

    terms: int = 0


def hit_updates(params: SensorParams, prior) -> np.ndarray:
    """(K, K+1) stack of l+(k) - prior for k = 1..K."""
    prior = np.asarray(prior, dtype=float)
    return np.stack([params.l_plus(k) - prior for k in range(1, params.num_classes + 1)])


def cell_tables(h, params: SensorParams, prior):
    """Per-cell quantities consumed by the MI recursions.

    Returns ``(probs, f_hit, f_free)`` with shapes (N, K+1), (N, K), (N,):
    the categorical of each cell, f(l+(k) - prior, h) and f(l- - prior, h).
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    prior = np.asarray(prior, dtype=float)
    probs = softmax(h)
    f_hit = f_gain(hit_updates(params, prior)[None, :, :], h[:, None, :])
    f_free = f_gain(params.phi_minus - prior, h)
    return probs, f_hit, f_free


@dataclass
class BeamOutcomeTable:
    """Outcome masses p(n, k) and information values C(n, k) of one beam."""

    p: np.ndarray
    C: np.ndarray

    @property
    def N(self) -> int:
        return self.p.shape[0]

    def mi(self) -> float:
        return float(np.sum(self.p * self.C))


def outcome_table(h, params: SensorParams, prior) -> BeamOutcomeTable:
    probs, f_hit, f_free = cell_tables(h, params, prior)
    free_before = np.concatenate([[1.0], np.cumprod(probs[:, 0])])[:-1]
    info_before = np.concatenate([[0.0], np.cumsum(f_free)])[:-1]
    return BeamOutcomeTable(probs[:, 1:] * free_before[:, None], f_hit + info_before[:, None])


def mi_from_tables(probs, f_hit, f_free, counter: Optional[OpCounter] = None) -> float:
    """Sum p(n,k) C(n,k) with the prefix recursion over cells."""
    probs = np.asarray(probs).tolist()
    f_hit = np.asarray(f_hit).tolist()
    f_free = np.asarray(f_free).tolist()
    total = 0.0
    free_prod = 1.0
    free_info = 0.0
    for p_n, fh_n, ff_n in zip(probs, f_hit, f_free):
        for k, fh in enumerate(fh_n, start=1):
            total += p_n[k] * free_prod * (fh + free_info)
        if counter is not None:
            counter.terms += len(fh_n)
        free_prod *= p_n[0]
        free_info += ff_n
    return total


def beam_mi_dense(h, params: SensorParams, prior=None, counter: Optional[OpCounter] = None) -> float:
    """MI lower-bound term of one full-range beam over cells with log-odds ``h``.

    ``h`` is the (N, K+1) stack of log-odds of the cells the beam crosses,
    nearest first. The traversal lengths cancel against the range density,
    so only the cell order matters.
    """
    h = np.asarray(h, dtype=float)
    if h.size == 0:
        return 0.0
    if prior is None:
        prior = np.zeros(h.shape[-1])
    return mi_from_tables(*cell_tables(h, params, prior), counter=counter)


def _bayes_update(p_cell, p_inverse, p_prior) -> np.ndarray:
    post = p_cell * p_inverse / p_prior
    return post / np.sum(post)


def beam_mi_oracle(trace: RayTrace, h, params: SensorParams, prior=None,
                   include_pass: bool = False) -> float:
    """Brute-force expected information gain of one beam.

    Every outcome (hit n-th cell with class k) is weighted by its range
    density times the cell chord length; for each outcome the cells are
    updated with Bayes' rule on categoricals and the KL divergence of each
    posterior from its current belief is accumulated. ``include_pass``
    adds the max-range all-free outcome, which the bound leaves out.
    """
    h = np.asarray(h, dtype=float)
    n_cells = len(trace)
    if n_cells == 0:
        return 0.0
    if prior is None:
        prior = np.zeros(h.shape[-1])
    K = params.num_classes
    probs = [softmax(row) for row in h]
    p_prior = softmax(prior)
    p_free = softmax(params.phi_minus)
    free_kl = [kl_divergence(_bayes_update(p, p_free, p_prior), p) for p in probs]

    total = 0.0
    for n in range(n_cells):
        stop_here = trace.with_hit(n)
        for k in range(1, K + 1):
            density = _ray_density(stop_here, k, probs)
            weight = density * trace.lengths[n]
            if weight == 0.0:
                continue
            post_hit = _bayes_update(probs[n], softmax(params.l_plus(k)), p_prior)
            info = kl_divergence(post_hit, probs[n]) + sum(free_kl[:n])
            total += weight * info
    if include_pass:
        weight = 1.0
        for p in probs:
            weight *= p[0]
        total += weight * sum(free_kl)
    return total


def _ray_density(trace: RayTrace, label: int, probs) -> float:
    n = trace.hit_index
    free = 1.0
    for p in probs[:n]:
        free *= p[0]
    return probs[n][label] / trace.lengths[n] * free


def filter_nonoverlapping(traces: Iterable[RayTrace]) -> list:
    """Greedy in-order selection of beams whose cell sets are pairwise disjoint."""
    kept = []
    seen: set = set()
    for tr in traces:
        cells = set(np.asarray(tr.flat).tolist())
        if cells.isdisjoint(seen):
            kept.append(tr)
            seen |= cells
    return kept


class MapInfoTables:
    """Per-cell MI quantities for a frozen map snapshot.

    Computed once per planning round so scoring a beam is a gather plus the
    O(N K) recursion.
    """

    def __init__(self, cells, params: SensorParams, prior):
        self.params = params
        self.prior = np.asarray(prior, dtype=float)
        self.probs, self.f_hit, self.f_free = cell_tables(cells, params, self.prior)

    def beam_mi(self, trace: RayTrace, counter: Optional[OpCounter] = None) -> float:
        if len(trace) == 0:
            return 0.0
        idx = trace.flat
        return mi_from_tables(self.probs[idx], self.f_hit[idx], self.f_free[idx], counter)


def pose_traces(geometry: GridGeometry, params: SensorParams, pose: Pose, skip_origin: bool = False) -> list:
    """Full-range traces of every beam from ``pose``.

    With ``skip_origin`` the cell holding the sensor is dropped: it is
    shared by every beam and would otherwise leave a single beam per pose
    after non-overlap filtering.
    """
    o = pose.position
    traces = [raycast(geometry, o, v, params.r_max) for v in rotate_rays(params, pose)]
    if skip_origin:
        traces = [RayTrace(t.cells[1:], t.lengths[1:], t.flat[1:]) for t in traces]
    return traces


def trajectory_mi(poses: Sequence[Pose], params: SensorParams, grid, tables: Optional[MapInfoTables] = None,
                  traces_for=None) -> float:
    """MI lower bound of the beams cast from every pose of a trajectory.

    Beams are raycast to full range against the frozen map, reduced to a
    non-overlapping subset in pose-then-beam order, and summed.
    ``traces_for(pose)`` may supply cached traces.
    """
    if not poses:
        return 0.0
    if tables is None:
        tables = MapInfoTables(grid.cells, params, grid.prior)
    if traces_for is None:
        def traces_for(pose):
            return pose_traces(grid.geometry, params, pose)
    traces = [tr for pose in poses for tr in traces_for(pose)]
    return sum(tables.beam_mi(tr) for tr in filter_nonoverlapping(traces))


# ---------------------------------------------------------------------------
# run-length route


@dataclass
class Run:
    omega: int
    chi: np.ndarray
    pi: np.ndarray


@dataclass
class BeamRuns:
    runs: list

    @property
    def Q(self) -> int:
        return len(self.runs)

    @property
    def N(self) -> int:
        return sum(r.omega for r in self.runs)

    def expand(self) -> np.ndarray:
        """Per-cell log-odds stack the runs stand for."""
        return np.concatenate([np.tile(r.chi, (r.omega, 1)) for r in self.runs])


def rle_segments(h, omegas=None) -> BeamRuns:
    """Merge consecutive cells with bit-identical log-odds into runs.

    ``omegas`` optionally gives a multiplicity per row of ``h`` (for inputs
    that are already partially grouped, such as octree leaves).
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if h.size == 0:
        return BeamRuns([])
    if omegas is None:
        omegas = [1] * len(h)
    runs: list = []
    for row, w in zip(h, omegas):
        if runs and np.array_equal(runs[-1].chi, row):
            runs[-1].omega += int(w)
        else:
            runs.append(Run(int(w), row.copy(), None))
    chis = np.stack([r.chi for r in runs])
    for r, p in zip(runs, softmax(chis)):
        r.pi = p
    return BeamRuns(runs)


SERIES_THRESHOLD = 1e-2


def geometric_sums(pi0: float, omega: int) -> tuple[float, float]:
    """S0 = sum_{j<omega} pi0^j and S1 = sum_{j<omega} j pi0^j.

    The closed forms divide by (1 - pi0) and (1 - pi0)^2, which cancels
    badly as pi0 -> 1. When omega * (1 - pi0) is small the sums are
    expanded in powers of x = 1 - pi0 instead; x = 0 gives the exact limits
    omega and omega (omega - 1) / 2.
    """
    omega = int(omega)
    x = 1.0 - pi0
    if x * omega < SERIES_THRESHOLD:
        # sum_j (1-x)^j   = sum_m (-x)^m C(omega, m+1)
        # sum_j j (1-x)^j = sum_m (-x)^m [(m+1) C(omega, m+2) + m C(omega, m+1)]
        s0 = 0.0
        s1 = 0.0
        c1 = float(omega)                       # C(omega, m+1)
        c2 = omega * (omega - 1) / 2.0          # C(omega, m+2)
        xm = 1.0
        for m in range(min(omega, 24)):
            s0 += xm * c1
            s1 += xm * ((m + 1) * c2 + m * c1)
            xm *= -x
            c1 = c2
            c2 = c2 * (omega - m - 2) / (m + 3)
            if xm == 0.0 or (c1 == 0.0 and c2 == 0.0):
                break
        return s0, s1
    p_w = pi0 ** omega
    s0 = (1.0 - p_w) / x
    g = pi0 * (1.0 - pi0 ** (omega - 1)) / x
    s1 = (g - (omega - 1) * p_w) / x
    return s0, s1


def beam_mi_rle(runs: BeamRuns, params: SensorParams, prior=None,
                counter: Optional[OpCounter] = None) -> float:
    """MI lower-bound term of one beam from its run-length decomposition.

    Requires a uniform zero prior; callers with another prior must use the
    dense route.
    """
    K = params.num_classes
    if prior is not None and np.any(np.asarray(prior) != 0.0):
        raise ValueError("the run-length closed form assumes a zero prior; use beam_mi_dense")
    if not runs.runs:
        return 0.0
    chis = np.stack([r.chi for r in runs.runs])
    _, f_hit, f_free = cell_tables(chis, params, np.zeros(K + 1))
    f_hit = f_hit.tolist()
    f_free = f_free.tolist()

    total = 0.0
    free_prod = 1.0     # prod_{j<q} pi(j,0)^omega_j
    free_info = 0.0     # sum_{j<q} omega_j f(l-, chi_j)
    for q, run in enumerate(runs.runs):
        pi = run.pi.tolist()
        s0, s1 = geometric_sums(pi[0], run.omega)
        for k in range(1, K + 1):
            a = pi[k] * free_prod
            b = f_hit[q][k - 1] + free_info
            total += a * (b * s0 + f_free[q] * s1)
        if counter is not None:
            counter.terms += K
        free_prod *= pi[0] ** run.omega
        free_info += run.omega * f_free[q]
    return total
