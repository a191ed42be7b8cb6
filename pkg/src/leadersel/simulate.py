"""Dwell-time-admissible switching signals and exact propagation of the
switched error dynamics ``e' = A_sigma(t) e``.

The system is linear time-invariant between switches, so each step is a
matrix exponential; ``sample_dt`` only sets output resolution.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, GenerationError, ScalingError
from .sysmodel import SwitchedModel, mode_matrix

__all__ = [
    "SwitchingSignal",
    "Trajectory",
    "gen_signal",
    "expm",
    "propagate",
    "error_norms",
    "random_initial_state",
    "write_trajectory_csv",
]

EXPM_LOG_LIMIT = 700.0   # exp(700) is near the double-precision ceiling


@dataclass(frozen=True)
class SwitchingSignal:
    """Ordered ``(topology, duration)`` segments, 0-based topology indices.

    Segments are generated until they cover the horizon; ``total_horizon``
    is the sum of all durations (at least the requested horizon) and
    propagation stops at whatever end time it is asked for.
    """

    segments: tuple
    total_horizon: float

    def __post_init__(self):
        segs = tuple((int(p), float(d)) for p, d in self.segments)
        object.__setattr__(self, "segments", segs)
        if any(d <= 0 for _, d in segs):
            raise ValueError("segment durations must be positive")
        if any(a[0] == b[0] for a, b in zip(segs, segs[1:])):
            raise ValueError("consecutive segments share a topology")
        if abs(sum(d for _, d in segs) - self.total_horizon) > 1e-9:
            raise ValueError("durations do not sum to total_horizon")

    def switch_times(self) -> np.ndarray:
        return np.cumsum([0.0] + [d for _, d in self.segments])

    def mode_at(self, t: float) -> int:
        edges = self.switch_times()
        i = int(np.searchsorted(edges, t, side="right")) - 1
        return self.segments[min(max(i, 0), len(self.segments) - 1)][0]

    def admissible(self, windows) -> bool:
        return all(windows[p][0] - 1e-12 <= d <= windows[p][1] + 1e-12
                   for p, d in self.segments)


def gen_signal(windows: Sequence[tuple], horizon: float, seed: Optional[int] = None,
               law: str = "aperiodic") -> SwitchingSignal:
    """Draw a switching signal whose segments respect per-topology windows.

    ``aperiodic``: the next topology is uniform among the others, the
    duration uniform in its window.  ``cyclic``: topologies in order with
    midpoint durations.  A single topology yields one segment spanning the
    horizon.
    """
    windows = [(float(lo), float(hi)) for lo, hi in windows]
    if not windows:
        raise GenerationError("no dwell windows given")
    for p, (lo, hi) in enumerate(windows):
        if not (0 < lo <= hi) or not math.isfinite(hi):
            raise GenerationError(f"topology {p + 1}: window [{lo}, {hi}] is empty or unbounded")
    if horizon <= 0:
        raise GenerationError("horizon must be positive")
    m = len(windows)
    if m == 1:
        return SwitchingSignal(((0, horizon),), horizon)
    if law not in ("aperiodic", "cyclic"):
        raise ValueError(f"unknown switching law {law!r}")
    rng = np.random.default_rng(seed)
    segs = []
    total = 0.0
    p = int(rng.integers(m)) if law == "aperiodic" else 0
    while total < horizon:
        lo, hi = windows[p]
        d = float(rng.uniform(lo, hi)) if law == "aperiodic" else 0.5 * (lo + hi)
        segs.append((p, d))
        total += d
        if law == "aperiodic":
            q = int(rng.integers(m - 1))
            p = q if q < p else q + 1
        else:
            p = (p + 1) % m
    return SwitchingSignal(tuple(segs), float(sum(d for _, d in segs)))


def expm(M, t: float = 1.0) -> np.ndarray:
    """``exp(M t)`` by scaling and squaring with Pade approximation (SciPy).

    Raises
    ------
    ScalingError
        When ``t`` times the spectral abscissa bound would overflow.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expm needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)) or not math.isfinite(t):
        raise ValueError("expm needs finite entries")
    growth = t * float(np.max(np.linalg.eigvals(M).real)) if M.size else 0.0
    if growth > EXPM_LOG_LIMIT:
        raise ScalingError(
            f"exp(M t) overflows: t * max Re lambda = {growth:.4g} > {EXPM_LOG_LIMIT}")
    E = sla.expm(M * t)
    if not np.all(np.isfinite(E)):
        raise ScalingError(f"exp(M t) overflowed (||M t||_1 = {np.abs(M * t).sum(0).max():.4g})")
    return E


@dataclass
class Trajectory:
    times: np.ndarray        # (T,)
    states: np.ndarray       # (T, N n)
    modes: np.ndarray        # (T,) active topology, 0-based
    n: int

    @property
    def agent_norms(self) -> np.ndarray:
        return error_norms(self)

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


def propagate(model: SwitchedModel, signal: SwitchingSignal, eps0, sample_dt: float = 0.01,
              t_end: Optional[float] = None, gains=None, leaders=None) -> Trajectory:
    """Exact propagation along ``signal`` sampled every ``sample_dt``.

    Samples fall on the regular grid plus every switching instant, so the
    state is recorded exactly where the mode changes; it is continuous
    there (no jumps).
    """
    eps0 = np.asarray(eps0, dtype=float).ravel()
    if eps0.size != model.dim:
        raise DimensionError(f"initial state has length {eps0.size}, expected {model.dim}")
    if sample_dt <= 0:
        raise ValueError("sample_dt must be positive")
    t_end = signal.total_horizon if t_end is None else float(t_end)
    mats = [mode_matrix(model, p, leaders, gains) for p in range(model.m)]
    step_cache: dict = {}

    def step(p, dt):
        key = (p, round(dt, 12))
        if key not in step_cache:
            step_cache[key] = expm(mats[p], dt)
        return step_cache[key]

    times, states, modes = [0.0], [eps0.copy()], [signal.segments[0][0]]
    x = eps0.copy()
    t = 0.0
    for p, d in signal.segments:
        if t >= t_end - 1e-12:
            break
        seg_end = min(t + d, t_end)
        grid = np.arange(math.floor(t / sample_dt) + 1, math.ceil(seg_end / sample_dt)) * sample_dt
        marks = [s for s in grid if t + 1e-12 < s < seg_end - 1e-12] + [seg_end]
        for s in marks:
            x = step(p, s - t) @ x
            t = s
            times.append(t)
            states.append(x.copy())
            modes.append(p)
    return Trajectory(np.array(times), np.array(states), np.array(modes), model.n)


def error_norms(traj: Trajectory) -> np.ndarray:
    """Per-agent Euclidean norms, shape ``(T, N)``."""
    T, dim = traj.states.shape
    return np.linalg.norm(traj.states.reshape(T, dim // traj.n, traj.n), axis=2)


def random_initial_state(dim: int, rng=None, bound: float = 100.0) -> np.ndarray:
    """Uniform draw from the open box ``(-bound, bound)^dim``."""
    rng = np.random.default_rng(rng)
    return rng.uniform(-bound, bound, size=dim)


def write_trajectory_csv(path, traj: Trajectory, exclude: Sequence[int] = (),
                         include_state: bool = False) -> None:
    """Columns ``time, topology, agent_<i>_norm ...`` (1-based agents and
    topologies); agents in ``exclude`` (e.g. the leaders) are dropped."""
    norms = error_norms(traj)
    agents = [i for i in range(1, norms.shape[1] + 1) if i not in set(exclude)]
    header = ["time", "topology"] + [f"agent_{i}_norm" for i in agents]
    if include_state:
        header += [f"state_{j}" for j in range(traj.states.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(traj.times)):
            row = [f"{traj.times[k]:.6f}", int(traj.modes[k]) + 1]
            row += [f"{norms[k, i - 1]:.10g}" for i in agents]
            if include_state:
                row += [f"{v:.10g}" for v in traj.states[k]]
            w.writerow(row)
