"""Eigen-structure, controllable subspaces and the leader-selection metrics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, DimensionError, NumericalError, SingularityError
from .sysmodel import (
    SwitchedModel,
    input_matrix,
    mode_matrix,
    shift_2,
    shifted_open_loop,
)

__all__ = [
    "EigenPair",
    "SpanBasis",
    "eig",
    "rightmost_real",
    "ctrb",
    "span_basis",
    "controllable_basis",
    "dist2",
    "UnstableSubspace",
    "unstable_subspaces",
    "MetricF",
    "metric_f",
    "metric_fmax",
    "c_bar",
    "sparse_lambda_min",
    "submod_ratio_lower_bounds",
    "exact_submodularity_ratio",
    "beta_of",
]

UNSTABLE_THRESHOLD = -1e-9
MAX_CBAR_DIM = 40
MAX_SUBSETS = 10**6


@dataclass(frozen=True)
class EigenPair:
    value: complex
    vector: np.ndarray


@dataclass(frozen=True)
class SpanBasis:
    basis: np.ndarray
    rank: int
    tolerance_used: float

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


def eig(M) -> list[EigenPair]:
    """Full eigendecomposition sorted by descending real part.

    Ties are broken by descending imaginary part, then by solver order,
    so element 0 is the rightmost eigenvalue.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"eig needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries")
    try:
        w, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(M)
        raise NumericalError(f"eigensolver did not converge (cond={cond:.3e})") from exc
    order = np.lexsort((np.arange(len(w)), -w.imag, -w.real))
    pairs = []
    for k in order:
        v = V[:, k].astype(complex)
        v = v / np.linalg.norm(v)
        pairs.append(EigenPair(complex(w[k]), v))
    return pairs


def rightmost_real(M) -> float:
    """``Re(lambda_r(M))``: the spectral abscissa."""
    return float(np.max(np.linalg.eigvals(np.asarray(M, dtype=float)).real))


def ctrb(Ahat, Bhat) -> np.ndarray:
    """``[B, A B, ..., A^{d-1} B]`` with ``d`` the state dimension."""
    Ahat = np.asarray(Ahat, dtype=float)
    Bhat = np.atleast_2d(np.asarray(Bhat, dtype=float))
    d = Ahat.shape[0]
    if Ahat.shape != (d, d) or Bhat.shape[0] != d:
        raise DimensionError(f"incompatible shapes {Ahat.shape} and {Bhat.shape}")
    blocks = [Bhat]
    for _ in range(d - 1):
        blocks.append(Ahat @ blocks[-1])
    return np.hstack(blocks)


def span_basis(M, rel_tol: float = 1e-8) -> SpanBasis:
    """Orthonormal basis of the column space, rank by singular-value cutoff."""
    M = np.atleast_2d(np.asarray(M))
    rows = M.shape[0]
    if M.size == 0:
        return SpanBasis(np.zeros((rows, 0)), 0, 0.0)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return SpanBasis(np.zeros((rows, 0), dtype=U.dtype), 0, 0.0)
    tol = rel_tol * s[0]
    r = int(np.sum(s > tol))
    return SpanBasis(U[:, :r], r, float(tol))


def controllable_basis(Ahat, Bhat, rel_tol: float = 1e-8) -> SpanBasis:
    """Orthonormal basis of ``span(ctrb(Ahat, Bhat))`` by block Arnoldi.

    Same subspace as ``span_basis(ctrb(...))`` but never forms high matrix
    powers, so the rank decision is not swamped by ``||A||^(d-1)`` growth.
    """
    Ahat = np.asarray(Ahat, dtype=float)
    d = Ahat.shape[0]
    Bhat = np.asarray(Bhat, dtype=float).reshape(d, -1)
    if Bhat.shape[1] == 0:
        return SpanBasis(np.zeros((d, 0)), 0, 0.0)
    scale = max(np.linalg.norm(Ahat, 2), np.linalg.norm(Bhat, 2), 1.0)
    tol = rel_tol * scale
    first = span_basis(Bhat, rel_tol)
    Q = first.basis
    new = Q
    while new.shape[1] and Q.shape[1] < d:
        W = Ahat @ new
        for _ in range(2):
            W = W - Q @ (Q.T @ W)
        U, s, _ = np.linalg.svd(W, full_matrices=False)
        keep = s > tol
        new = U[:, keep]
        if new.shape[1]:
            Q = np.hstack([Q, new])
    # one more orthogonalization pass keeps Q^T Q = I to machine precision
    Q, _ = np.linalg.qr(Q)
    return SpanBasis(Q[:, :min(Q.shape[1], d)], min(Q.shape[1], d), float(tol))


def dist2(v, span: SpanBasis) -> float:
    """Squared distance from unit vector ``v`` to a (complexified) real span."""
    v = np.asarray(v, dtype=complex)
    if span.rank == 0:
        r = v
    else:
        P = span.basis
        r = v - P @ (P.conj().T @ v)
    return float(min(1.0, max(0.0, np.vdot(r, r).real)))


@dataclass(frozen=True)
class UnstableSubspace:
    """Orthonormal eigenvector basis for one cluster of equal eigenvalues."""

    value: complex
    vectors: np.ndarray       # dim x k, orthonormal columns
    multiplicity: int         # algebraic, as returned by the solver
    ill_conditioned: bool


def unstable_subspaces(Ahat, threshold: float = UNSTABLE_THRESHOLD) -> list[UnstableSubspace]:
    """Eigenvectors of eigenvalues with real part ``>= threshold``.

    Eigenvectors sharing an eigenvalue are orthonormalized together so the
    metric does not depend on which eigenspace basis LAPACK happens to
    return; directions the solver duplicated (defective eigenvalues) are
    dropped and flagged.
    """
    pairs = [p for p in eig(Ahat) if p.value.real >= threshold]
    clusters: list[list[EigenPair]] = []
    for p in pairs:
        for c in clusters:
            ref = c[0].value
            if abs(p.value - ref) <= 1e-6 * max(1.0, abs(ref)):
                c.append(p)
                break
        else:
            clusters.append([p])
    out = []
    for c in clusters:
        V = np.column_stack([p.vector for p in c])
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        keep = s > 1e-6 * s[0]
        cond = s[0] / s[-1] if s[-1] > 0 else np.inf
        out.append(UnstableSubspace(c[0].value, U[:, keep], len(c),
                                    bool(cond > 1e8 or not keep.all())))
    return out


class MetricF:
    """The controllability-distance metric with eigendata cached per mode.

    ``f(S)`` sums, over modes and over eigenvectors of the shifted
    open-loop matrix whose eigenvalues have nonnegative real part, the
    squared distance to the subspace controllable from leaders ``S``.
    """

    def __init__(self, model: SwitchedModel, rel_tol: float = 1e-8):
        self.model = model
        self.rel_tol = rel_tol
        self.Ahat = [shifted_open_loop(model, p) for p in range(model.m)]
        self.unstable = [unstable_subspaces(A) for A in self.Ahat]
        self._cache: dict[frozenset, tuple] = {}

    @property
    def ill_conditioned(self) -> bool:
        return any(u.ill_conditioned for us in self.unstable for u in us)

    def per_mode(self, leaders: Iterable[int]) -> tuple:
        key = frozenset(leaders)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        model = self.model
        B = input_matrix(model.N, model.n, key)
        terms = []
        for Ahat, subspaces in zip(self.Ahat, self.unstable):
            if not subspaces:
                terms.append(0.0)
                continue
            span = controllable_basis(Ahat, B, self.rel_tol)
            total = 0.0
            for sub in subspaces:
                for k in range(sub.vectors.shape[1]):
                    total += dist2(sub.vectors[:, k], span)
            terms.append(total)
        out = tuple(terms)
        self._cache[key] = out
        return out

    def __call__(self, leaders: Iterable[int]) -> float:
        return float(sum(self.per_mode(leaders)))

    def unstable_count(self) -> int:
        return sum(u.vectors.shape[1] for us in self.unstable for u in us)


def metric_f(model: SwitchedModel, leaders: Iterable[int]) -> float:
    return MetricF(model)(leaders)


def _as_gain(g, n: int) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        return float(g) * np.eye(n)
    return g


def metric_fmax(model: SwitchedModel, leaders: Iterable[int], gains=None) -> float:
    """Sum over modes of the spectral abscissa of the shifted closed loop.

    ``gains`` may hold scalars (``kappa * I_n``) or matrices; defaults to
    the model's own gains.
    """
    per = fmax_terms(model, leaders, gains)
    return float(sum(per))


def fmax_terms(model: SwitchedModel, leaders: Iterable[int], gains=None) -> list[float]:
    from .errors import ConfigurationError

    gains = model.gains if gains is None else gains
    if gains is None:
        raise ConfigurationError("f_max needs a gain (or scalar trial gain) per topology")
    Ks = [_as_gain(g, model.n) for g in gains]
    leaders = frozenset(leaders)
    out = []
    for p in range(model.m):
        Ap = mode_matrix(model, p, leaders, Ks)
        out.append(rightmost_real(shift_2(Ap, p, model.params, model.tddt)))
    return out


def c_bar(model: SwitchedModel, p: int, max_dim: int = MAX_CBAR_DIM):
    """Column-normalized Gram matrix of ``[I, Ahat, ..., Ahat^{d-1}]``.

    Columns are scaled to norm ``sqrt(d)`` before dividing the Gram matrix
    by ``d``, so every nonzero column contributes a unit diagonal entry.

    Returns
    -------
    Cbar : (d*d, d*d) ndarray
    flagged : (d*d,) bool ndarray
        True for zero columns (left unscaled, excluded from sparse bounds).
    """
    Ahat = shifted_open_loop(model, p)
    return _c_bar_from(Ahat, max_dim)


def _c_bar_from(Ahat, max_dim: int = MAX_CBAR_DIM):
    d = Ahat.shape[0]
    if d > max_dim:
        raise CapabilityError(
            f"state dimension {d} exceeds {max_dim}; only the global "
            "lambda_min bound is tractable at this size")
    blocks = []
    V = np.eye(d)
    flagged = []
    for k in range(d):
        if k:
            V = Ahat @ V
        norms = np.linalg.norm(V, axis=0)
        zero = norms <= 1e-300
        safe = np.where(zero, 1.0, norms)
        V = V / safe
        blocks.append(V.copy())
        flagged.append(zero)
    C = np.hstack(blocks) * math.sqrt(d)
    flagged = np.concatenate(flagged)
    C[:, flagged] = 0.0
    Cbar = (C.T @ C) / d
    Cbar = 0.5 * (Cbar + Cbar.T)
    return Cbar, flagged


def sparse_lambda_min(Cbar, s: int, flagged=None, max_subsets: int = MAX_SUBSETS) -> Optional[float]:
    """Minimum over size-``s`` principal submatrices of ``lambda_min``.

    Only non-flagged indices take part.  Returns ``None`` when the number
    of subsets exceeds ``max_subsets``.
    """
    Cbar = np.asarray(Cbar)
    idx = np.arange(Cbar.shape[0])
    if flagged is not None:
        idx = idx[~np.asarray(flagged)]
    if s >= len(idx):
        return float(np.linalg.eigvalsh(Cbar[np.ix_(idx, idx)])[0]) if len(idx) else None
    if s < 1:
        raise ValueError("subset size must be positive")
    if math.comb(len(idx), s) > max_subsets:
        return None
    best = np.inf
    combos = itertools.combinations(idx, s)
    while True:
        chunk = list(itertools.islice(combos, 20000))
        if not chunk:
            break
        sel = np.array(chunk)
        sub = Cbar[sel[:, :, None], sel[:, None, :]]
        best = min(best, float(np.linalg.eigvalsh(sub)[:, 0].min()))
    return best


def submod_ratio_lower_bounds(model: SwitchedModel, p: int, s: int,
                              max_subsets: int = MAX_SUBSETS):
    """``(lambda_min(Cbar_p), sparse bound of order s or None)``."""
    Cbar, flagged = c_bar(model, p)
    keep = ~flagged
    glob = float(np.linalg.eigvalsh(Cbar[np.ix_(keep, keep)])[0]) if keep.any() else 0.0
    return glob, sparse_lambda_min(Cbar, s, flagged, max_subsets)


def exact_submodularity_ratio(f: Callable[[frozenset], float], ground: Iterable[Hashable],
                              U: Iterable[Hashable], k: int,
                              skip_tol: float = 1e-12) -> Optional[float]:
    """Brute-force submodularity ratio of the decrement ``g(X) = f({}) - f(X)``.

    Minimizes ``sum_l [g(W+l) - g(W)] / [g(W+S) - g(W)]`` over ``W`` inside
    ``U`` and nonempty ``S`` disjoint from ``W`` with ``|S| <= k``; pairs
    whose denominator is at most ``skip_tol`` are skipped.  Returns ``None``
    if nothing is admissible.
    """
    ground = sorted(set(ground))
    U = sorted(set(U))
    memo: dict[frozenset, float] = {}

    def F(X):
        X = frozenset(X)
        if X not in memo:
            memo[X] = float(f(X))
        return memo[X]

    best = None
    for r in range(len(U) + 1):
        for W in itertools.combinations(U, r):
            W = frozenset(W)
            rest = [x for x in ground if x not in W]
            fW = F(W)
            singles = {l: fW - F(W | {l}) for l in rest}
            for size in range(1, min(k, len(rest)) + 1):
                for S in itertools.combinations(rest, size):
                    den = fW - F(W | set(S))
                    if den <= skip_tol:
                        continue
                    ratio = sum(singles[l] for l in S) / den
                    if best is None or ratio < best:
                        best = ratio
    return best


def beta_of(M) -> float:
    """``lambda_max(M^T + M) / (2 Re(lambda_r(M)))``."""
    M = np.asarray(M, dtype=float)
    den = 2.0 * rightmost_real(M)
    if abs(den) <= 2e-12:
        raise SingularityError("spectral abscissa is zero; beta undefined")
    num = float(np.linalg.eigvalsh(M + M.T)[-1])
    return num / den
