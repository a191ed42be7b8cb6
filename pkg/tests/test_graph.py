import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leadersel.errors import DimensionError
from leadersel.graph import Digraph, initial_leader_set, laplacian, scc, union_graph
from leadersel.instances import random_digraph


def _closure(g):
    N = g.n_agents
    R = np.eye(N, dtype=bool)
    for j, i in g.edges:
        R[j - 1, i - 1] = True
    for k in range(N):
        R |= R[:, [k]] & R[[k], :]
    return R


digraphs = st.integers(1, 8).flatmap(
    lambda N: st.lists(st.tuples(st.integers(1, N), st.integers(1, N))
                       .filter(lambda e: e[0] != e[1]), max_size=20, unique=True)
    .map(lambda es: Digraph(N, es)))


def test_laplacian_small_hand():
    L = laplacian(Digraph(3, [(1, 2), (3, 2), (2, 3)]))
    np.testing.assert_array_equal(L, [[0, 0, 0], [-1, 2, -1], [0, -1, 1]])


def test_laplacian_row_sums_match_degree_count(rng):
    g = random_digraph(rng, 4, 0.5)
    L = laplacian(g)
    np.testing.assert_allclose(L.sum(axis=1), 0)
    for i in range(1, 5):
        assert L[i - 1, i - 1] == sum(1 for (_, t) in g.edges if t == i)


@given(digraphs)
def test_laplacian_properties(g):
    L = laplacian(g)
    assert np.allclose(L.sum(axis=1), 0)
    off = L - np.diag(np.diag(L))
    assert np.all(off <= 0)


def test_union_membership(rng):
    gs = [random_digraph(rng, 5, 0.3) for _ in range(3)]
    u = union_graph(gs)
    for j, i in itertools.permutations(range(1, 6), 2):
        assert ((j, i) in u.edges) == any((j, i) in g.edges for g in gs)


def test_union_size_mismatch():
    with pytest.raises(DimensionError):
        union_graph([Digraph(3), Digraph(4)])


@pytest.mark.parametrize("seed", range(5))
def test_scc_matches_transitive_closure(seed):
    g = random_digraph(np.random.default_rng(seed), 8, 0.2)
    R = _closure(g)
    dec = scc(g)
    for a, b in itertools.product(range(1, 9), repeat=2):
        same = dec.component_of(a) == dec.component_of(b)
        assert same == (R[a - 1, b - 1] and R[b - 1, a - 1])


@settings(max_examples=50)
@given(digraphs)
def test_scc_partition_property(g):
    dec = scc(g)
    agents = sorted(v for comp in dec.components for v in comp)
    assert agents == list(range(1, g.n_agents + 1))


def test_initial_leaders_fig1_structure():
    gs = [Digraph(6, [(1, 2), (2, 3), (6, 4)]), Digraph(6, [(6, 5), (5, 4), (3, 2)])]
    assert initial_leader_set(gs) == {1, 6}


def test_initial_leaders_two_cycles_empty():
    assert initial_leader_set([Digraph(4, [(1, 2), (2, 1), (3, 4), (4, 3)])]) == set()


@settings(max_examples=50)
@given(digraphs)
def test_initial_leaders_are_agents_without_in_links(g):
    assert initial_leader_set([g]) == {v for v in range(1, g.n_agents + 1)
                                       if not any(t == v for _, t in g.edges)}
