import itertools
from math import comb

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from fcsheom.hierarchy import (HierarchyTooLarge, IndexSpace, count_fields, enumerate_space,
                               occupation_vectors, partition_coefficient,
                               partition_coefficient_closed, partition_weight, partitions)


def symbolic_partition_table(M):
    """Coefficients of prod w_q^{m_q} in d^M/dx^M exp(sum_q w_q x^q / q!) at x = 0."""
    x = sp.Symbol("x")
    w = sp.symbols(f"w1:{M + 1}")
    gen = sp.exp(sum(w[q - 1] * x**q / sp.factorial(q) for q in range(1, M + 1)))
    poly = sp.Poly(sp.expand(sp.diff(gen, x, M).subs(x, 0)), *w)
    return {tuple(int(e) for e in mon): int(c) for mon, c in poly.terms()}


@pytest.mark.parametrize("M", range(1, 6))
def test_partition_coefficients_symbolic(M):
    table = symbolic_partition_table(M)
    exact = [p for p in partitions(M) if partition_weight(p) == M]
    assert len(exact) == len(table)
    for p in exact:
        assert partition_coefficient(p) == table[tuple(p)]
        assert partition_coefficient_closed(p) == table[tuple(p)]


def test_partition_examples():
    assert partition_coefficient((1,)) == 1
    assert partition_coefficient((0, 1)) == 1
    assert partition_coefficient((2, 0)) == 1
    assert partition_coefficient((1, 1, 0)) == 3


@pytest.mark.parametrize("M", range(1, 7))
def test_partition_coefficients_sum_to_bell(M):
    # the number of set partitions of M labelled derivatives
    total = sum(partition_coefficient(p) for p in partitions(M) if partition_weight(p) == M)
    assert total == sp.bell(M)


def test_partitions_of_two():
    assert partitions(2) == ((0, 0), (1, 0), (0, 1), (2, 0))


def test_enumerate_single_term():
    sp_ = enumerate_space(1, 1, 1, 0)
    assert len(sp_) == 3
    rows = {tuple(r) for r in sp_.n}
    assert rows == {(0, 0), (1, 0), (0, 1)}


def brute_count(n_slots, n_max):
    return sum(1 for v in itertools.product(range(n_max + 1), repeat=n_slots)
               if sum(v) <= n_max)


def test_enumerate_two_baths_two_terms():
    sp_ = enumerate_space(2, 2, 2, 0)
    assert len(sp_) == 45 == brute_count(8, 2)


def test_partition_multiplier():
    assert len(enumerate_space(2, 2, 2, 2)) == 4 * 45


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 4), st.integers(0, 3))
def test_count_matches_formula(n_slots, n_max, m_max):
    space = IndexSpace(n_slots, n_max, m_max)
    assert len(space) == count_fields(n_slots, n_max, m_max)
    assert len(space) == brute_count(n_slots, n_max) * len(partitions(m_max))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2))
def test_neighbour_round_trip(n_slots, n_max, m_max):
    space = IndexSpace(n_slots, n_max, m_max)
    idx = np.arange(len(space))
    for s in range(n_slots):
        up = space.raise_n(s)
        ok = up >= 0
        assert np.all(space.lower_n(s)[up[ok]] == idx[ok])
        # raising from the top level leaves the space
        assert np.all(up[space.n.sum(axis=1) == n_max] == -1)
        down = space.lower_n(s)
        assert np.all(down[space.n[:, s] == 0] == -1)
    for i, (n, m) in enumerate(zip(space.n, space.m)):
        assert space.find(n, m)[0] == i


def test_swap_and_cascade_links():
    space = IndexSpace(3, 2, 2)
    i = space.offset([1, 0, 0], [0, 1])
    j = space.swap_n(0, 2)[i]
    assert tuple(space.n[j]) == (0, 0, 1) and tuple(space.m[j]) == (0, 1)
    k = space.raise_lower_m(1, 2)[i]
    assert tuple(space.n[k]) == (1, 1, 0) and tuple(space.m[k]) == (0, 0)
    assert space.lower_m(1)[i] == -1


def test_bounded_slots():
    space = IndexSpace(2, 3, 2, bounded=np.array([False, True]))
    weight = np.array([partition_weight(m) for m in space.m])
    assert np.all(space.n[:, 1] + weight <= 2)


def test_canonical_order():
    space = IndexSpace(3, 2, 1)
    level = space.n.sum(axis=1)
    assert np.all(np.diff(level) >= 0)
    keys = [tuple(np.concatenate([[lv], n, m])) for lv, n, m in zip(level, space.n, space.m)]
    assert keys == sorted(keys)


def test_size_guard():
    with pytest.raises(HierarchyTooLarge) as err:
        IndexSpace(12, 8, 2, cap=1000)
    assert err.value.count == count_fields(12, 8, 2)


def test_occupation_vectors():
    rows = occupation_vectors(4, 3)
    assert len(rows) == comb(7, 3)
    assert rows.sum(axis=1).max() == 3


def test_signature_distinguishes_layouts():
    assert IndexSpace(2, 2, 1).signature() != IndexSpace(2, 3, 1).signature()
    assert IndexSpace(2, 2, 1).signature() == IndexSpace(2, 2, 1).signature()
