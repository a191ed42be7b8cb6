"""Directed interaction topologies, Laplacians and reachability.

Agents are numbered ``1..N`` everywhere outside this module's internals.
An edge ``(j, i)`` is a directed link from agent ``j`` to agent ``i``,
i.e. ``j`` is a neighbor of ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError

__all__ = [
    "Digraph",
    "SccDecomposition",
    "laplacian",
    "union_graph",
    "scc",
    "initial_leader_set",
]


@dataclass(frozen=True)
class Digraph:
    """Simple directed graph over agents ``1..n_agents``."""

    n_agents: int
    edges: frozenset

    def __init__(self, n_agents: int, edges: Iterable[Sequence[int]] = ()):
        if int(n_agents) != n_agents or n_agents < 1:
            raise ValueError(f"n_agents must be a positive integer, got {n_agents!r}")
        pairs = []
        for e in edges:
            if len(e) != 2:
                raise ValueError(f"edge {e!r} is not a pair")
            j, i = int(e[0]), int(e[1])
            if j == i:
                raise ValueError(f"self-loop ({j}, {i}) not allowed")
            if not (1 <= j <= n_agents and 1 <= i <= n_agents):
                raise ValueError(f"edge ({j}, {i}) has an endpoint outside 1..{n_agents}")
            pairs.append((j, i))
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate edges: only simple graphs are supported")
        object.__setattr__(self, "n_agents", int(n_agents))
        object.__setattr__(self, "edges", frozenset(pairs))

    def in_neighbors(self, i: int) -> set[int]:
        return {j for (j, k) in self.edges if k == i}

    def in_degree(self, i: int) -> int:
        return sum(1 for (_, k) in self.edges if k == i)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_json(self) -> list[list[int]]:
        return [list(e) for e in self.sorted_edges()]


@dataclass(frozen=True)
class SccDecomposition:
    """Strongly connected components and their condensation.

    ``components`` is a tuple of frozensets of 1-based agents; the
    condensation uses 0-based component indices into that tuple.
    """

    components: tuple
    condensation_edges: frozenset
    source_components: frozenset

    def component_of(self, agent: int) -> int:
        for idx, comp in enumerate(self.components):
            if agent in comp:
                return idx
        raise KeyError(agent)


def laplacian(g: Digraph) -> np.ndarray:
    """In-degree Laplacian: ``L[i, j] = -1`` for each link ``j -> i``."""
    n = g.n_agents
    L = np.zeros((n, n))
    for j, i in g.edges:
        L[i - 1, j - 1] = -1.0
        L[i - 1, i - 1] += 1.0
    return L


def union_graph(gs: Sequence[Digraph]) -> Digraph:
    if not gs:
        raise ValueError("union of an empty list of graphs")
    n = gs[0].n_agents
    for g in gs:
        if g.n_agents != n:
            raise DimensionError(
                f"graphs disagree on agent count: {n} vs {g.n_agents}")
    edges = set()
    for g in gs:
        edges |= g.edges
    return Digraph(n, edges)


def scc(g: Digraph) -> SccDecomposition:
    """Tarjan's algorithm, iterative to avoid recursion limits."""
    n = g.n_agents
    succ: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for j, i in g.sorted_edges():
        succ[j].append(i)

    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[frozenset] = []
    counter = 0

    for root in range(1, n + 1):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            children = succ[v]
            while pos < len(children):
                w = children[pos]
                pos += 1
                if w not in index:
                    work.append((v, pos))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(frozenset(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])

    # deterministic order: by smallest member
    comps.sort(key=min)
    where = {v: c for c, comp in enumerate(comps) for v in comp}
    cond = frozenset(
        (where[j], where[i]) for j, i in g.edges if where[j] != where[i])
    has_in = {b for _, b in cond}
    sources = frozenset(c for c in range(len(comps)) if c not in has_in)
    return SccDecomposition(tuple(comps), cond, sources)


def initial_leader_set(gs: Sequence[Digraph]) -> set[int]:
    """Agents that no other agent can reach in the union of ``gs``.

    These are the singleton source components of the union graph; they
    must be leaders for tracking to be possible at all.
    """
    dec = scc(union_graph(gs))
    return {
        next(iter(dec.components[c]))
        for c in dec.source_components
        if len(dec.components[c]) == 1
    }
