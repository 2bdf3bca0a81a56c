import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cxrenhance.histogram import compute_histogram, histogram_csv, image_stats, normalized_cdf


def naive_tally(plane):
    counts = [0] * 256
    for v in np.asarray(plane).ravel():
        counts[int(v)] += 1
    return counts


def test_four_levels():
    h = compute_histogram(np.array([[0, 85], [170, 255]], np.uint8))
    assert h.total == 4
    for k in (0, 85, 170, 255):
        assert h.counts[k] == 1
    assert h.counts.sum() == 4


def test_constant_plane():
    h = compute_histogram(np.full((3, 3), 7, np.uint8))
    assert h.counts[7] == 9 and h.counts.sum() == 9


def test_matches_naive_tally(rng):
    for _ in range(100):
        shape = tuple(rng.integers(1, 17, size=2))
        plane = rng.integers(0, 256, size=shape).astype(np.uint8)
        h = compute_histogram(plane)
        assert h.counts.tolist() == naive_tally(plane)
        assert h.total == plane.size


def test_empty_plane():
    with pytest.raises(ValueError):
        compute_histogram(np.zeros((0, 3), np.uint8))
    with pytest.raises(ValueError):
        image_stats(np.zeros((0,), np.uint8))


def test_cdf_all_in_zero():
    assert np.array_equal(normalized_cdf(compute_histogram(np.zeros((4, 4), np.uint8))), np.ones(256))


def test_cdf_uniform():
    cdf = normalized_cdf(compute_histogram(np.arange(256, dtype=np.uint8)))
    assert np.allclose(cdf, (np.arange(256) + 1) / 256, atol=1e-15, rtol=0)


def test_cdf_two_levels():
    cdf = normalized_cdf(compute_histogram(np.array([[10, 10], [200, 200]], np.uint8)))
    assert (cdf[:10] == 0).all()
    assert (cdf[10:200] == 0.5).all()
    assert (cdf[200:] == 1.0).all()


def test_probabilities_sum_to_one(rng):
    h = compute_histogram(rng.integers(0, 256, (37, 41)).astype(np.uint8))
    assert abs(h.probabilities.sum() - 1) < 1e-12


def test_stats_hand_example():
    s = image_stats(np.array([0, 50, 100, 150, 200], np.uint8))
    assert (s.l, s.h, s.e, s.s) == (0, 200, 100, 15000)


def test_stats_constant():
    s = image_stats(np.full((4, 5), 9, np.uint8))
    assert (s.l, s.h, s.e, s.s) == (9, 9, 9, 81)


def test_stats_vs_fsum_oracle(rng):
    for _ in range(20):
        plane = rng.integers(0, 256, (int(rng.integers(1, 300)), 97)).astype(np.uint8)
        vals = [float(v) for v in plane.ravel()]
        n = len(vals)
        e = math.fsum(vals) / n
        s = math.fsum(v * v for v in vals) / n
        st_ = image_stats(plane)
        assert st_.e == pytest.approx(e, rel=1e-9, abs=0)
        assert st_.s == pytest.approx(s, rel=1e-9, abs=0)


@settings(max_examples=200, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_histogram_invariants(plane):
    h = compute_histogram(plane)
    assert h.counts.sum() == plane.size
    cdf = normalized_cdf(h)
    assert (np.diff(cdf) >= 0).all()
    assert abs(cdf[255] - 1) <= 1e-12
    s = image_stats(plane)
    assert s.l <= s.e <= s.h
    assert s.s - s.e ** 2 >= -1e-9
    assert s.l ** 2 <= s.s <= s.h ** 2


def test_histogram_csv():
    text = histogram_csv(compute_histogram(np.full((3, 3), 7, np.uint8)))
    lines = text.strip().split("\n")
    assert lines[0] == "bin,count" and len(lines) == 257
    assert lines[8] == "7,9"
    assert all(l.endswith(",0") for i, l in enumerate(lines[1:]) if i != 7)
