import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtmeta.errors import EmptyPairs
from mtmeta.ties import (
    PairScope,
    TieCounts,
    acc_eq_at,
    calibrate_epsilon,
    calibrate_epsilon_bruteforce,
    count_pairs,
    enumerate_pairs,
    pairs_from_vectors,
    tie_counts,
)

from conftest import matrix

M_E = [0.6, 0.5, 0.4, 0.4]
H_E = [5, 3, 5, 5]


def brute_counts(m, h, eps=0.0):
    """Enumerate every index pair and classify it directly."""
    c = d = th = tm = thm = 0
    for i, j in itertools.combinations(range(len(m)), 2):
        mt = abs(m[i] - m[j]) <= eps
        ht = h[i] == h[j]
        if mt and ht:
            thm += 1
        elif mt:
            tm += 1
        elif ht:
            th += 1
        elif (m[i] - m[j]) * (h[i] - h[j]) > 0:
            c += 1
        else:
            d += 1
    return TieCounts(c, d, th, tm, thm)


def test_worked_example_counts():
    p = pairs_from_vectors(M_E, H_E)
    assert count_pairs(p, 0.0) == TieCounts(C=1, D=2, T_h=2, T_m=0, T_hm=1)
    assert acc_eq_at(p, 0.0) == pytest.approx(0.3333, abs=5e-4)


def test_worked_example_wide_epsilon():
    p = pairs_from_vectors(M_E, H_E)
    assert count_pairs(p, 0.2) == TieCounts(C=0, D=0, T_h=0, T_m=3, T_hm=3)
    assert count_pairs(p, 0.2) == brute_counts(M_E, H_E, 0.2)
    assert acc_eq_at(p, 0.2) == 0.5


def test_huge_epsilon_ties_everything():
    rng = np.random.default_rng(1)
    m, h = rng.normal(size=20), rng.integers(0, 3, 20)
    p = pairs_from_vectors(m, h)
    c = count_pairs(p, float(np.ptp(m)))
    assert c.C == c.D == c.T_h == 0
    assert c.T_m + c.T_hm == len(p)


def test_negative_epsilon_rejected():
    with pytest.raises(ValueError):
        count_pairs(pairs_from_vectors(M_E, H_E), -0.1)


def test_enumerate_scopes():
    h = matrix(np.arange(6).reshape(2, 3), "human")
    m = matrix(np.arange(6).reshape(2, 3))
    assert len(enumerate_pairs(m, h, PairScope.WITHIN_SEGMENT)) == 6
    assert len(enumerate_pairs(m, h, PairScope.ALL)) == 15
    h1 = matrix([[1, 2, 3, 4]], "human")
    m1 = matrix([[4, 3, 2, 1]])
    assert len(enumerate_pairs(m1, h1, PairScope.WITHIN_SEGMENT)) == 6
    assert len(enumerate_pairs(m1, h1, PairScope.ALL)) == 6


def test_enumerate_within_segment_respects_missing_and_order():
    h = matrix([[1, np.nan, 3], [4, 5, 6], [7, np.nan, np.nan]], "human")
    m = matrix(np.ones((3, 3)))
    p = enumerate_pairs(m, h)
    keys = p.keys(h.segments, h.systems)
    assert keys == [(("s0", "sys0"), ("s0", "sys2")),
                    (("s1", "sys0"), ("s1", "sys1")),
                    (("s1", "sys0"), ("s1", "sys2")),
                    (("s1", "sys1"), ("s1", "sys2"))]


def test_empty_pairs():
    p = pairs_from_vectors([1.0], [1.0])
    with pytest.raises(EmptyPairs):
        acc_eq_at(p)
    with pytest.raises(EmptyPairs):
        calibrate_epsilon(p)
    with pytest.raises(EmptyPairs):
        calibrate_epsilon_bruteforce(p)


def test_calibrate_worked_example():
    p = pairs_from_vectors(M_E, H_E)
    for fn in (calibrate_epsilon, calibrate_epsilon_bruteforce):
        r = fn(p)
        assert r.epsilon == pytest.approx(0.2)
        assert r.acc_eq == 0.5
        assert r.candidates_evaluated == 3
        assert r.acc_eq == acc_eq_at(p, r.epsilon)


def test_calibrate_distinct_concordant():
    p = pairs_from_vectors([0.1, 0.5, 0.9, 1.7], [1, 2, 3, 4])
    r = calibrate_epsilon(p)
    assert (r.epsilon, r.acc_eq) == (0.0, 1.0)


def test_calibrate_all_tied():
    p = pairs_from_vectors([2.0] * 5, [1.0] * 5)
    r = calibrate_epsilon(p)
    assert (r.epsilon, r.acc_eq) == (0.0, 1.0)


def test_bruteforce_single_tied_pair():
    r = calibrate_epsilon_bruteforce(pairs_from_vectors([1.0, 1.0], [3.0, 3.0]))
    assert (r.epsilon, r.acc_eq) == (0.0, 1.0)


def random_instance(rng):
    n = int(rng.integers(2, 51))
    kind = rng.integers(0, 4)
    if kind == 0:  # continuous metric, discrete human
        m, h = rng.normal(size=n), rng.integers(0, 4, n)
    elif kind == 1:  # both discrete
        m, h = rng.integers(0, 5, n) / 4, rng.integers(0, 3, n)
    elif kind == 2:  # coarse grid metric with repeated gaps
        m, h = np.round(rng.normal(size=n), 1), np.round(rng.normal(size=n))
    else:
        m, h = rng.normal(size=n), rng.normal(size=n)
    return m.astype(float), h.astype(float)


def test_calibration_matches_bruteforce_randomized():
    rng = np.random.default_rng(2024)
    for _ in range(300):
        p = pairs_from_vectors(*random_instance(rng))
        fast, slow = calibrate_epsilon(p), calibrate_epsilon_bruteforce(p)
        assert (fast.epsilon, fast.acc_eq) == (slow.epsilon, slow.acc_eq)
        assert fast.counts_at_epsilon == slow.counts_at_epsilon


def test_tie_counts_fast_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(300):
        m, h = random_instance(rng)
        assert tie_counts(m, h) == brute_counts(m.tolist(), h.tolist())
        assert tie_counts(m, h) == count_pairs(pairs_from_vectors(m, h), 0.0)


def test_tie_counts_signed_zero():
    assert tie_counts([0.0, -0.0, 1.0], [1, 1, 2]) == brute_counts([0.0, -0.0, 1.0], [1, 1, 2])


small = st.lists(st.tuples(st.integers(-4, 4), st.integers(-2, 2)), min_size=2, max_size=25)


@settings(max_examples=300, deadline=None)
@given(small, st.floats(0, 10))
def test_partition_identity_and_range(data, eps):
    m = [a / 2 for a, _ in data]
    h = [b for _, b in data]
    p = pairs_from_vectors(m, h)
    c = count_pairs(p, eps)
    assert c.total == len(p) == len(data) * (len(data) - 1) // 2
    assert 0.0 <= c.acc_eq() <= 1.0
    assert c == brute_counts(m, h, eps)


@settings(max_examples=200, deadline=None)
@given(small, st.floats(0, 5), st.floats(0, 5))
def test_monotone_in_epsilon(data, e1, e2):
    lo, hi = sorted((e1, e2))
    p = pairs_from_vectors([a / 3 for a, _ in data], [b for _, b in data])
    a, b = count_pairs(p, lo), count_pairs(p, hi)
    assert a.T_m + a.T_hm <= b.T_m + b.T_hm
    assert a.C + a.D + a.T_h >= b.C + b.D + b.T_h


@settings(max_examples=200, deadline=None)
@given(small)
def test_calibration_never_loses_to_zero(data):
    p = pairs_from_vectors([a / 3 for a, _ in data], [b for _, b in data])
    r = calibrate_epsilon(p)
    assert r.acc_eq >= acc_eq_at(p, 0.0)
    assert r.acc_eq == acc_eq_at(p, r.epsilon)


def test_piecewise_constant_between_candidates():
    rng = np.random.default_rng(9)
    for _ in range(50):
        m, h = random_instance(rng)
        p = pairs_from_vectors(m, h)
        cands = np.unique(np.r_[0.0, p.metric_gaps])
        for lo, hi in zip(cands[:-1], cands[1:]):
            base = acc_eq_at(p, lo)
            for t in (0.25, 0.5, 0.75):
                mid = lo + t * (hi - lo)
                if lo < mid < hi:
                    assert acc_eq_at(p, mid) == base
