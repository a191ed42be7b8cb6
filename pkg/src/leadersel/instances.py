"""Ready-made networks: the published agent dynamics, a six-agent reference
network with the published structural features, and random generators.

The published edge lists are not available, so the reference network
is synthesized: agents 1 and 6 receive no links in any topology, agent 5
none in the first one, and every other follower listens to two agents.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .graph import Digraph
from .sysmodel import SwitchedModel, TddtSpec, TheoremParams

__all__ = [
    "PUBLISHED_A",
    "REFERENCE_EDGES",
    "reference_model",
    "random_digraph",
    "random_model",
    "random_certifiable_model",
]

PUBLISHED_A = np.array([
    [0.4147, -0.4087, -0.1287],
    [0.3802, -0.3380, -0.3305],
    [0.1313, -0.7076, 0.0233],
])

REFERENCE_EDGES = (
    ((1, 2), (6, 2), (2, 3), (5, 3), (6, 4), (5, 4)),
    ((1, 2), (6, 2), (2, 3), (1, 3), (6, 4), (1, 4), (4, 5), (6, 5)),
    ((1, 3), (6, 3), (3, 2), (1, 2), (6, 5), (1, 5), (5, 4), (6, 4)),
)

REFERENCE_TDDT = TddtSpec((1.0, 0.5, 0.5), (1.2, 0.6, 0.6))
REFERENCE_PARAMS = TheoremParams(l=(2, 2, 2), mu=(0.5, 0.5, 0.5), eta=(0.5, 0.8, 0.8))


def reference_model(tddt: Optional[TddtSpec] = None,
                    params: Optional[TheoremParams] = None) -> SwitchedModel:
    """Six agents, three topologies, the published ``A``; certifies with
    leaders ``{1, 5, 6}``."""
    return SwitchedModel(
        PUBLISHED_A,
        [Digraph(6, e) for e in REFERENCE_EDGES],
        REFERENCE_TDDT if tddt is None else tddt,
        REFERENCE_PARAMS if params is None else params,
    )


def random_digraph(rng, N: int, p_edge: float = 0.4) -> Digraph:
    """Erdos-Renyi digraph without self-loops."""
    edges = [(j, i) for j in range(1, N + 1) for i in range(1, N + 1)
             if j != i and rng.random() < p_edge]
    return Digraph(N, edges)


def random_model(rng, N: int, n: int, m: int, p_edge: float = 0.4,
                 shift_scale: float = 1.0) -> SwitchedModel:
    """Gaussian ``A`` and Erdos-Renyi topologies with parameters drawn so
    that the shifted open-loop matrices have both stable and unstable
    eigenvalues on typical draws."""
    rng = np.random.default_rng(rng)
    A = rng.normal(size=(n, n)) * 0.8
    topologies = [random_digraph(rng, N, p_edge) for _ in range(m)]
    tau_min = rng.uniform(0.5, 1.5, size=m)
    tddt = TddtSpec(tau_min, tau_min * rng.uniform(1.0, 1.5, size=m))
    l = rng.integers(1, 4, size=m)
    eta = l / tau_min - 2 * shift_scale * rng.uniform(-1.0, 1.0, size=m)
    eta = np.where(np.abs(eta) < 0.05, 0.05, eta)
    mu = np.where(eta > 0, 0.5, 2.0)
    return SwitchedModel(A, topologies, tddt, TheoremParams(l, mu, eta))


def _layered_topology(rng, N: int, roots, extra_root=None) -> Digraph:
    """Random DAG on a random agent order in which every non-root agent has
    two in-neighbors earlier in the order."""
    roots = list(roots)
    if extra_root is not None:
        roots.append(extra_root)
    rest = [v for v in range(1, N + 1) if v not in roots]
    order = roots + list(rng.permutation(rest))
    edges = []
    for pos in range(len(roots), N):
        i = int(order[pos])
        srcs = rng.choice(order[:pos], size=min(2, pos), replace=False)
        edges += [(int(j), i) for j in srcs]
    return Digraph(N, edges)


def random_certifiable_model(rng, N: int = 5, n: int = 2, m: int = 3) -> SwitchedModel:
    """Random networks shaped like the reference one.

    Agents 1 and ``N`` are never listened to; each topology may leave one
    further agent without in-neighbors.  ``A`` has a mildly unstable
    complex pair (and a stable eigenvalue when ``n`` is odd), so dense
    follower coupling plus leader feedback can stabilize every mode.
    """
    rng = np.random.default_rng(rng)
    roots = [1, N]
    tops = []
    for _ in range(m):
        extra = None
        if rng.random() < 0.5:
            extra = int(rng.choice([v for v in range(2, N)]))
        tops.append(_layered_topology(rng, N, roots, extra))
    blocks = []
    for _ in range(n // 2):
        a, b = rng.uniform(0.1, 0.4), rng.uniform(0.05, 0.3)
        blocks.append(np.array([[a, b], [-b, a]]))
    if n % 2:
        blocks.append(np.array([[rng.uniform(-0.6, -0.2)]]))
    D = np.zeros((n, n))
    k = 0
    for blk in blocks:
        s = blk.shape[0]
        D[k:k + s, k:k + s] = blk
        k += s
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    A = Q @ D @ Q.T
    tau_min = np.where(rng.random(m) < 0.5, 1.0, 0.5)
    tddt = TddtSpec(tau_min, tau_min * 1.2)
    params = TheoremParams(l=[2] * m, mu=[0.5] * m, eta=list(rng.uniform(0.4, 0.9, size=m)))
    return SwitchedModel(A, tops, tddt, params)
