import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semexplore.core import (entropy, entropy_from_log_odds, f_gain, from_categorical, kl_divergence,
                             log_odds, logsumexp, softmax)

finite = st.floats(-30, 30, allow_nan=False)


def log_odds_vectors(min_len=2, max_len=5):
    return st.integers(min_len, max_len).flatmap(
        lambda n: arrays(float, n, elements=finite).map(lambda a: a - a[0]))


def test_softmax_uniform():
    np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, rtol=0, atol=1e-15)


def test_softmax_two_class_frozen():
    # 50-digit evaluation of 1/(1+e) and e/(1+e)
    np.testing.assert_allclose(softmax([0.0, 1.0]), [0.26894142136999512, 0.73105857863000488],
                               rtol=1e-15)


def test_softmax_no_overflow():
    p = softmax([0.0, 700.0, 700.0])
    assert np.all(np.isfinite(p))
    assert p[0] < 1e-300
    np.testing.assert_allclose(p[1:], [0.5, 0.5])


def test_log_odds_pivot_and_roundtrip():
    h = log_odds([0.3, 1.0, -2.0])
    assert h[0] == 0.0
    np.testing.assert_allclose(h, [0.0, 0.7, -2.3])
    p = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(softmax(from_categorical(p)), p, rtol=1e-14)


@pytest.mark.parametrize("bad", [[1.0], [0.0, np.inf], [0.0, np.nan]])
def test_log_odds_rejects(bad):
    with pytest.raises(ValueError):
        log_odds(bad)


def test_from_categorical_rejects_zero():
    with pytest.raises(ValueError):
        from_categorical([1.0, 0.0])


@pytest.mark.parametrize("p, expected", [
    ([1.0, 0.0, 0.0], 0.0),
    ([1 / 3, 1 / 3, 1 / 3], math.log(3)),
    ([0.5, 0.25, 0.25], 1.0397207708399180),  # mpmath, 50 digits
])
def test_entropy_values(p, expected):
    assert entropy(p) == pytest.approx(expected, abs=1e-15)


def test_entropy_from_log_odds_saturated():
    assert entropy_from_log_odds([0.0, -800.0, -800.0]) == pytest.approx(0.0, abs=1e-300)
    assert entropy_from_log_odds([0.0, 0.0]) == pytest.approx(math.log(2))


def test_f_gain_frozen():
    # KL(softmax(phi+h) || softmax(h)) evaluated with mpmath at 50 digits
    assert f_gain([0.0, 1.0], [0.0, 0.0]) == pytest.approx(0.11094407167172735, rel=1e-14)
    assert f_gain([0.0, 0.3, -1.2], [0.0, 0.7, 2.1]) == pytest.approx(0.24738783534973758, rel=1e-13)


def test_f_gain_zero_update():
    assert f_gain([0.0, 0.0, 0.0], [0.0, 4.0, -3.0]) == 0.0


def test_logsumexp_single_element_exact():
    assert logsumexp([3.25]) == 3.25


@given(log_odds_vectors(), st.data())
def test_f_gain_matches_kl_and_is_nonnegative(h, data):
    phi = data.draw(arrays(float, len(h), elements=st.floats(-5, 5)))
    phi = phi - phi[0]
    f = float(f_gain(phi, h))
    kl = kl_divergence(softmax(phi + h), softmax(h))
    assert f >= -1e-12
    assert f == pytest.approx(kl, rel=1e-7, abs=1e-10)


@given(log_odds_vectors())
def test_entropy_routes_agree(h):
    assert float(entropy_from_log_odds(h)) == pytest.approx(float(entropy(softmax(h))), abs=1e-9)
    assert 0.0 <= float(entropy_from_log_odds(h)) <= math.log(len(h)) + 1e-12


@given(log_odds_vectors(), finite)
def test_softmax_shift_invariant(h, c):
    np.testing.assert_allclose(softmax(h + c), softmax(h), rtol=1e-12, atol=1e-300)


def test_f_gain_stays_accurate_for_nearly_certain_cells():
    import mpmath

    mpmath.mp.dps = 50
    h = [0.0, -18.0, -20.0]
    phi = [0.0, 1.8, 0.3]
    post = [mpmath.mpf(a) + b for a, b in zip(h, phi)]
    lse = lambda v: mpmath.log(mpmath.fsum(mpmath.exp(x) for x in v))  # noqa: E731
    z = lse(post)
    ref = lse(h) - z + mpmath.fsum(b * mpmath.exp(x - z) for x, b in zip(post, phi))
    assert float(f_gain(phi, h)) == pytest.approx(float(ref), rel=1e-12)
