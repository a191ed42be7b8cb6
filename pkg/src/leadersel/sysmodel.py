"""Switched error dynamics of a leader-follower network.

Every agent follows ``x_i' = A x_i + u_i`` with input matrix fixed to the
identity.  Stacking tracking errors gives the mode matrices

    A_p = I_N (x) A - L_p (x) I_n - D (x) K_p

with ``D = diag(d_1..d_N)`` the 0/1 leader indicator.  Gains are either
``n x n`` (the protocol structure above) or ``Nn x Nn`` (an unstructured
full-state fallback, ``B D K`` replaced by ``(D (x) I_n) K``).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError
from .graph import Digraph, laplacian

__all__ = [
    "TheoremParams",
    "TddtSpec",
    "SwitchedModel",
    "leader_matrix",
    "input_matrix",
    "mode_matrix",
    "open_loop_matrix",
    "shifted_open_loop",
    "shift_1",
    "shift_2",
]


def _tuple(values, cast=float) -> tuple:
    return tuple(cast(v) for v in values)


@dataclass(frozen=True)
class TddtSpec:
    """Per-topology dwell-time windows ``[tau_min, tau_max]`` in seconds."""

    tau_min: tuple
    tau_max: tuple

    def __post_init__(self):
        object.__setattr__(self, "tau_min", _tuple(self.tau_min))
        object.__setattr__(self, "tau_max", _tuple(self.tau_max))
        if len(self.tau_min) != len(self.tau_max):
            raise DimensionError("tau_min and tau_max differ in length")
        for p, (lo, hi) in enumerate(zip(self.tau_min, self.tau_max)):
            if not (0 < lo <= hi):
                raise ValueError(
                    f"topology {p + 1}: need 0 < tau_min <= tau_max, got [{lo}, {hi}]")

    def __len__(self):
        return len(self.tau_min)

    def window(self, p: int) -> tuple[float, float]:
        return self.tau_min[p], self.tau_max[p]


@dataclass(frozen=True)
class TheoremParams:
    """Certification scalars per topology.

    ``l`` is the discretization count of the piecewise-linear Lyapunov
    family, ``mu`` the jump factor at switches and ``eta`` the per-mode
    growth (positive) or decay (negative) rate.
    """

    l: tuple
    mu: tuple
    eta: tuple
    phi: Optional[float] = None
    beta_setting: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "l", _tuple(self.l, int))
        object.__setattr__(self, "mu", _tuple(self.mu))
        object.__setattr__(self, "eta", _tuple(self.eta))
        if not (len(self.l) == len(self.mu) == len(self.eta)):
            raise DimensionError("l, mu and eta must have one entry per topology")
        if any(v < 1 for v in self.l):
            raise ValueError("every l_p must be a positive integer")
        if any(v <= 0 for v in self.mu):
            raise ValueError("every mu_p must be positive")
        if self.phi is not None and self.phi <= 0:
            raise ValueError("phi must be positive")
        if not (0 < self.beta_setting <= 1):
            raise ValueError("beta_setting must lie in (0, 1]")

    def __len__(self):
        return len(self.l)

    def phi_value(self, tddt: TddtSpec) -> float:
        if self.phi is not None:
            return float(self.phi)
        return 1e-3 * min(l / t for l, t in zip(self.l, tddt.tau_min))

    def c(self, p: int, tddt: TddtSpec) -> float:
        """``l_p / tau_p_min``."""
        return self.l[p] / tddt.tau_min[p]

    def range_violations(self, tddt: TddtSpec) -> list[str]:
        """Human-readable list of parameter-range violations.

        Returned rather than raised: published parameter sets do not
        always respect the stated ranges.
        """
        out = []
        for p in range(len(self)):
            eta, mu = self.eta[p], self.mu[p]
            if eta > 0:
                if eta <= self.c(p, tddt):
                    out.append(f"topology {p + 1}: eta={eta} <= l/tau_min={self.c(p, tddt):.4g}")
                if not 0 < mu < 1:
                    out.append(f"topology {p + 1}: growing mode needs mu in (0,1), got {mu}")
            elif eta < 0:
                if mu <= 1:
                    out.append(f"topology {p + 1}: decaying mode needs mu > 1, got {mu}")
            else:
                out.append(f"topology {p + 1}: eta must be nonzero")
        return out

    def with_eta(self, eta: Sequence[float]) -> "TheoremParams":
        return replace(self, eta=tuple(eta))

    def to_json(self) -> dict:
        return {"l": list(self.l), "mu": list(self.mu), "eta": list(self.eta),
                "phi": self.phi, "beta_setting": self.beta_setting}


@dataclass(frozen=True, eq=False)
class SwitchedModel:
    A: np.ndarray
    topologies: tuple
    tddt: TddtSpec
    params: TheoremParams
    leaders: frozenset = frozenset()
    gains: Optional[tuple] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        tops = tuple(self.topologies)
        if not tops:
            raise ValueError("at least one topology is required")
        N = tops[0].n_agents
        if any(g.n_agents != N for g in tops):
            raise DimensionError("topologies disagree on agent count")
        object.__setattr__(self, "topologies", tops)
        if len(self.tddt) != len(tops) or len(self.params) != len(tops):
            raise DimensionError("tddt and params need one entry per topology")
        leaders = frozenset(int(i) for i in self.leaders)
        if any(not 1 <= i <= N for i in leaders):
            raise ValueError(f"leaders must lie in 1..{N}")
        object.__setattr__(self, "leaders", leaders)
        if self.gains is not None:
            gains = tuple(np.array(K, dtype=float) for K in self.gains)
            if len(gains) != len(tops):
                raise DimensionError("need one gain per topology")
            n, Nn = A.shape[0], A.shape[0] * N
            for K in gains:
                if K.shape not in ((n, n), (Nn, Nn)):
                    raise DimensionError(f"gain has shape {K.shape}, expected {(n, n)}")
            object.__setattr__(self, "gains", gains)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.topologies[0].n_agents

    @property
    def m(self) -> int:
        return len(self.topologies)

    @property
    def dim(self) -> int:
        return self.n * self.N

    def laplacians(self) -> list[np.ndarray]:
        return [laplacian(g) for g in self.topologies]

    def with_leaders(self, leaders: Iterable[int]) -> "SwitchedModel":
        return replace(self, leaders=frozenset(leaders))

    def with_gains(self, gains) -> "SwitchedModel":
        return replace(self, gains=None if gains is None else tuple(gains))

    def with_params(self, params: TheoremParams) -> "SwitchedModel":
        return replace(self, params=params)

    def with_tddt(self, tddt: TddtSpec) -> "SwitchedModel":
        return replace(self, tddt=tddt)


def leader_matrix(N: int, leaders: Iterable[int]) -> np.ndarray:
    """The diagonal configuration matrix ``D``."""
    d = np.zeros(N)
    for i in leaders:
        d[i - 1] = 1.0
    return np.diag(d)


def input_matrix(N: int, n: int, leaders: Iterable[int], compact: bool = True) -> np.ndarray:
    """``D (x) I_n``; with ``compact`` only its nonzero columns."""
    B = np.kron(leader_matrix(N, leaders), np.eye(n))
    if compact:
        cols = [k for k in range(N * n) if B[k, k] != 0]
        B = B[:, cols]
    return B


def open_loop_matrix(model: SwitchedModel, p: int) -> np.ndarray:
    """``I_N (x) A - L_p (x) I_n``."""
    L = laplacian(model.topologies[p])
    return np.kron(np.eye(model.N), model.A) - np.kron(L, np.eye(model.n))


def mode_matrix(model: SwitchedModel, p: int, leaders=None, gains=None) -> np.ndarray:
    """Closed-loop error matrix for topology ``p`` (0-based)."""
    leaders = model.leaders if leaders is None else leaders
    gains = model.gains if gains is None else gains
    if gains is None:
        raise ConfigurationError("mode matrix needs feedback gains for every topology")
    K = np.asarray(gains[p], dtype=float)
    D = leader_matrix(model.N, leaders)
    Ap = open_loop_matrix(model, p)
    if K.shape == (model.n, model.n):
        return Ap - np.kron(D, K)
    return Ap - np.kron(D, np.eye(model.n)) @ K


def _half_gap(model: SwitchedModel, p: int) -> float:
    return 0.5 * (model.params.c(p, model.tddt) - model.params.eta[p])


def shifted_open_loop(model: SwitchedModel, p: int) -> np.ndarray:
    """Open-loop matrix shifted by ``(l_p / tau_p_min - eta_p) / 2``."""
    return open_loop_matrix(model, p) + _half_gap(model, p) * np.eye(model.dim)


def shift_1(mode: np.ndarray, p: int, params: TheoremParams, tddt: TddtSpec) -> np.ndarray:
    """``mode - (l_p / tau_p_min + eta_p) / 2 * I``."""
    mode = np.asarray(mode, dtype=float)
    s = 0.5 * (params.c(p, tddt) + params.eta[p])
    return mode - s * np.eye(mode.shape[0])


def shift_2(mode: np.ndarray, p: int, params: TheoremParams, tddt: TddtSpec) -> np.ndarray:
    """``mode + (l_p / tau_p_min - eta_p) / 2 * I``."""
    mode = np.asarray(mode, dtype=float)
    s = 0.5 * (params.c(p, tddt) - params.eta[p])
    return mode + s * np.eye(mode.shape[0])
