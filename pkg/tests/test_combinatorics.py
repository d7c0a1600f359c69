from itertools import combinations
from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bia_sim.combinatorics import (
    desired_indices,
    group_index,
    member_position,
    mod1,
    ordered_subsets,
    subset_at,
)
from bia_sim.errors import MembershipError, ParameterError


@st.composite
def k_and_g(draw, max_k=8):
    K = draw(st.integers(1, max_k))
    return K, draw(st.integers(1, K))


def test_subsets_four_choose_two():
    assert ordered_subsets(4, 2).groups == ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))


def test_subsets_four_choose_three():
    assert ordered_subsets(4, 3).groups == ((1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4))


def test_subsets_full_group():
    assert ordered_subsets(3, 3).groups == ((1, 2, 3),)


@pytest.mark.parametrize("K,G", [(0, 1), (3, 0), (3, 4), (-1, 1)])
def test_subsets_reject_bad_parameters(K, G):
    with pytest.raises(ParameterError):
        ordered_subsets(K, G)


@pytest.mark.parametrize("k,expected", [(1, (1, 2, 3)), (2, (1, 2, 4)), (3, (1, 3, 4)), (4, (2, 3, 4))])
def test_desired_indices_four_three(k, expected):
    assert desired_indices(k, ordered_subsets(4, 3)) == expected


def test_desired_indices_full_group():
    t = ordered_subsets(5, 5)
    assert all(desired_indices(k, t) == (1,) for k in range(1, 6))


@pytest.mark.parametrize("k", [0, 5])
def test_desired_indices_out_of_range(k):
    with pytest.raises(ParameterError):
        desired_indices(k, ordered_subsets(4, 3))


@pytest.mark.parametrize("n,k,g", [(2, 4, 3), (1, 1, 1), (3, 3, 2)])
def test_member_position(n, k, g):
    assert member_position(n, k, ordered_subsets(4, 3)) == g


def test_member_position_non_member():
    with pytest.raises(MembershipError):
        member_position(1, 4, ordered_subsets(4, 3))


@pytest.mark.parametrize("a,M,out", [(4, 2, 2), (5, 2, 1), (0, 3, 3), (-1, 3, 2), (7, 1, 1)])
def test_mod1_examples(a, M, out):
    assert mod1(a, M) == out


@pytest.mark.parametrize("M", [0, -2])
def test_mod1_rejects_nonpositive_modulus(M):
    with pytest.raises(ParameterError):
        mod1(3, M)


@given(st.integers(-10**6, 10**6), st.integers(1, 50))
def test_mod1_periodic_and_in_range(a, M):
    r = mod1(a, M)
    assert 1 <= r <= M
    assert (a - r) % M == 0
    assert mod1(a + M, M) == r


@given(k_and_g())
def test_ordering_matches_lexicographic_enumeration(kg):
    K, G = kg
    t = ordered_subsets(K, G)
    assert list(t.groups) == list(combinations(range(1, K + 1), G))
    assert len(t) == comb(K, G)
    assert all(a < b for a, b in zip(t.groups, t.groups[1:]))


@given(k_and_g())
def test_desired_count_identity(kg):
    K, G = kg
    t = ordered_subsets(K, G)
    sizes = [len(desired_indices(k, t)) for k in range(1, K + 1)]
    assert all(s == comb(K - 1, G - 1) for s in sizes)
    assert sum(sizes) == G * comb(K, G)


@given(k_and_g())
def test_subset_index_bijection(kg):
    K, G = kg
    t = ordered_subsets(K, G)
    for n in range(1, len(t) + 1):
        assert group_index(subset_at(n, t), t) == n
    for S in combinations(range(1, K + 1), G):
        assert subset_at(group_index(S, t), t) == S


@given(k_and_g())
def test_member_position_inverts_lookup(kg):
    K, G = kg
    t = ordered_subsets(K, G)
    for n, S in enumerate(t.groups, start=1):
        for g, k in enumerate(S, start=1):
            assert member_position(n, k, t) == g
