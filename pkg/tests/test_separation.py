"""Multiset machinery: measurement, grouping, restriction, separation."""

import random
from fractions import Fraction

import mpmath
import pytest

from memcap.errors import ConsistencyError, DegenerateData, NotDistinct
from memcap.numerics import Dyadic
from memcap.separation import (
    Multiset,
    check_separated,
    consistency_groups,
    find_projection_vector,
    restriction_set,
    separating_function,
    sequence_to_multiset,
)

D = Dyadic


def tok(*coords):
    return tuple(D(c) for c in coords)


def test_check_separated_single_pair():
    params = check_separated([tok(0, 0), tok(3, 4)])
    assert params.raw_r_sq == 25
    assert params.raw_delta_sq == 25
    assert params.r_sq == 25 and params.delta_sq == 1   # clamped to <= 1


def test_check_separated_single_value():
    params = check_separated([tok(1, 0), tok(1, 0)])
    assert params.delta_sq == 1
    with pytest.raises(DegenerateData):
        check_separated([tok(1, 0), tok(1, 0)], require_delta=True)


def test_check_separated_brute_force_matches():
    rng = random.Random(5)
    tokens = list({tuple(rng.randint(-6, 6) for _ in range(3)) for _ in range(10)})
    toks = [tok(*t) for t in tokens]
    params = check_separated(toks)
    best = min(sum((a - b) ** 2 for a, b in zip(x, y))
               for i, x in enumerate(tokens) for y in tokens[i + 1:])
    assert params.raw_delta_sq == best


def test_sequence_to_multiset():
    a, b = tok(1, 0), tok(0, 1)
    ms = sequence_to_multiset([a, a, b])
    assert ms.counts() == {a: 2, b: 1}
    assert ms.cardinality == 3
    assert sequence_to_multiset([b, a, a]) == ms
    allsame = sequence_to_multiset([a, a, a])
    assert allsame.entries == ((a, 3),)


def test_consistency_groups_next_token():
    a, b = tok(1, 0), tok(0, 1)
    # same multiset, different last token: two distinct keys
    groups = consistency_groups([[a, b], [b, a]], [3, 5], "next_token")
    assert len(groups) == 2
    # identical keys with conflicting labels
    with pytest.raises(ConsistencyError):
        consistency_groups([[a, b], [a, b]], [3, 5], "next_token")
    # permuted prefix with equal label collapses to one point
    c = tok(2, 2)
    groups = consistency_groups([[b, a, c], [a, b, c]], [4, 4], "next_token")
    assert len(groups) == 1
    assert groups[0].members == (0, 1)


def test_consistency_groups_seq2seq():
    a, b = tok(1, 0), tok(0, 1)
    groups = consistency_groups([[a, b]], [[1, 2]], "seq2seq")
    assert len(groups) == 2
    with pytest.raises(ConsistencyError):
        consistency_groups([[a, a]], [[1, 2]], "seq2seq")


def test_consistency_groups_permutation_invariant():
    a, b, c = tok(1, 0), tok(0, 1), tok(2, 2)
    base = consistency_groups([[a, b, c], [b, c, a]], [1, 2], "next_token")
    # permuting the non-final columns leaves every key unchanged
    permuted = consistency_groups([[b, a, c], [c, b, a]], [1, 2], "next_token")
    assert [(g.anchor, g.multiset, g.label) for g in base] == \
           [(g.anchor, g.multiset, g.label) for g in permuted]


def test_restriction_set_examples():
    a, b = tok(0), tok(1)
    assert restriction_set([Multiset.from_elements([a])]).elements == ()
    got = restriction_set([Multiset.from_elements([a]), Multiset.from_elements([b])])
    assert got.elements == (a,)
    got = restriction_set([Multiset.from_elements([a, a]), Multiset.from_elements([a])])
    assert got.elements == (a,)
    with pytest.raises(NotDistinct):
        restriction_set([Multiset.from_elements([a]), Multiset.from_elements([a])])


@pytest.mark.parametrize("seed", range(6))
def test_restriction_set_fuzz(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 64)
    pool = [tok(v) for v in range(12)]
    seen = set()
    family = []
    while len(family) < n:
        card = rng.randint(1, 6)
        ms = Multiset.from_elements(rng.choice(pool) for _ in range(card))
        if ms not in seen:
            seen.add(ms)
            family.append(ms)
    got = restriction_set(family)
    assert len(got.elements) <= n
    keys = {m.restrict_key(got.elements) for m in family}
    assert len(keys) == n


def test_projection_single_point_and_alignment():
    assert find_projection_vector([tok(5, 5)], 2) == (D(1), D(0))
    v = find_projection_vector([tok(0, 0), tok(0, 5)], 2, seed=1)
    norm_sq = sum(c.as_fraction() ** 2 for c in v)
    assert norm_sq <= 1
    dot = abs(sum(c.as_fraction() * x for c, x in zip(v, (0, 5))))
    assert dot <= 5    # upper bound |v . delta| <= ||delta||


def _verify_projection_external(v, points):
    """Independent re-check with mpmath pi at 60 digits."""
    mpmath.mp.dps = 60
    x = len(points)
    d = len(points[0])
    vf = [c.as_fraction() for c in v]
    assert sum(c * c for c in vf) <= 1
    for i in range(x):
        for j in range(i + 1, x):
            diff = [a - b for a, b in zip(points[i], points[j])]
            nrm_sq = sum(c * c for c in diff)
            if nrm_sq == 0:
                continue
            dot = sum(a * b for a, b in zip(vf, diff))
            assert dot * dot <= nrm_sq
            lhs = (mpmath.mpf(dot.numerator) / dot.denominator) ** 2
            rhs = (mpmath.mpf(8) / (mpmath.pi * d * x**4)
                   * mpmath.mpf(nrm_sq.numerator) / nrm_sq.denominator)
            assert lhs >= rhs


def test_projection_six_points_all_pairs():
    rng = random.Random(9)
    pts = list({tuple(rng.randint(-8, 8) for _ in range(3)) for _ in range(6)})[:6]
    toks = [tok(*p) for p in pts]
    v = find_projection_vector(toks, 3, seed=4)
    _verify_projection_external(v, [tuple(map(Fraction, p)) for p in pts])


def test_projection_norm_slack():
    from memcap.separation import default_frac_bits, norm_slack
    rng = random.Random(2)
    pts = [tok(*[rng.randint(-9, 9) for _ in range(4)]) for _ in range(8)]
    v = find_projection_vector(pts, 4, seed=8)
    norm_sq = sum(c.as_fraction() ** 2 for c in v)
    assert 1 - norm_slack(4, default_frac_bits(len(pts), 4)) <= norm_sq <= 1
    # an explicit budget is honored exactly
    v64 = find_projection_vector(pts, 4, seed=8, frac_bits=64)
    assert max(c.exp for c in v64) <= 64
    assert 1 - norm_slack(4, 64) <= sum(c.as_fraction() ** 2 for c in v64) <= 1


def test_separating_function_trivial_and_pairs():
    a, b = tok(0), tok(1)
    one = separating_function([Multiset.from_elements([a])],
                              restriction_set([Multiset.from_elements([a])]))
    assert one.table == () and one.sums == (0,)

    family = [Multiset.from_elements([a]), Multiset.from_elements([b])]
    rset = restriction_set(family)
    fn = separating_function(family, rset, seed=3)
    size_s = len(fn.table)
    assert all(1 <= val <= fn.range_bound for _, val in fn.table)
    for i in range(len(fn.sums)):
        for j in range(i + 1, len(fn.sums)):
            assert (fn.sums[i] - fn.sums[j]) ** 2 >= size_s


@pytest.mark.parametrize("seed", range(4))
def test_separating_function_fuzz(seed):
    rng = random.Random(100 + seed)
    n = rng.randint(2, 16)
    pool = [tok(v, v * v % 7) for v in range(10)]
    seen, family = set(), []
    while len(family) < n:
        ms = Multiset.from_elements(rng.choice(pool)
                                    for _ in range(rng.randint(1, 6)))
        if ms not in seen:
            seen.add(ms)
            family.append(ms)
    rset = restriction_set(family)
    fn = separating_function(family, rset, seed=seed)
    cap_m = max(m.cardinality for m in family)
    size_s = len(fn.table)
    mpmath.mp.dps = 50
    bound = 4 * cap_m * n**2 * size_s * mpmath.sqrt(mpmath.pi)
    for i, s in enumerate(fn.sums):
        assert abs(s) <= bound
        for j in range(i + 1, n):
            assert (s - fn.sums[j]) ** 2 >= size_s
