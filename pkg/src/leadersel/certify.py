"""Gain synthesis and dwell-time certification of the switched error system.

The certificate is constructive: every matrix inequality is checked on an
explicit family of Lyapunov matrices, never solved by semidefinite
programming.  Strict inequalities are accepted when the largest eigenvalue
of the symmetrized left-hand side is at most ``-LMI_TOL``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConstructionError,
    DomainError,
    NumericalError,
    SingularityError,
    SpectralClashError,
    SynthesisError,
)
from .spectral import MetricF, beta_of, rightmost_real
from .sysmodel import (
    SwitchedModel,
    TddtSpec,
    TheoremParams,
    input_matrix,
    mode_matrix,
    open_loop_matrix,
    shift_1,
    shift_2,
    shifted_open_loop,
)

__all__ = [
    "LMI_TOL",
    "GainResult",
    "PFamily",
    "ModeRecord",
    "Certificate",
    "lyapunov_solve",
    "synthesize_gain",
    "check_margins",
    "BetaDecision",
    "beta_verification_loop",
    "endpoint_family",
    "px_upper_bound",
    "geometric_family",
    "log_norm",
    "construct_p_family",
    "check_discretized_lmis",
    "mu_feasibility",
    "tddt_window",
    "classify_modes",
    "full_certificate",
]

LMI_TOL = 1e-9
STABLE_TOL = 1e-9
WINDOW_SLACK = 1e-9
KAPPA_MIN = 1e-6
KAPPA_MAX = 2.0 ** 16
DEFAULT_GAIN_TARGETS = (1e-6, 0.1, 0.3, 0.6, 1.0, 1.5, 2.5, 4.0)
THETA_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)


def _sym(M):
    return 0.5 * (M + M.T)


def _lmax_sym(M) -> float:
    return float(np.linalg.eigvalsh(_sym(M))[-1])


# ---------------------------------------------------------------------------
# Lyapunov equation


def lyapunov_solve(M, Q) -> np.ndarray:
    """Solve ``M^T P + P M + Q = 0`` (Bartels-Stewart via SciPy)."""
    M = np.asarray(M, dtype=float)
    Q = np.asarray(Q, dtype=float)
    lam = np.linalg.eigvals(M)
    scale = max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
    clash = np.min(np.abs(lam[:, None] + lam[None, :]))
    if clash <= 1e-12 * scale:
        raise SpectralClashError(
            f"M and -M share an eigenvalue (min |l_i + l_j| = {clash:.2e})")
    P = sla.solve_continuous_lyapunov(M.T, -Q)
    return _sym(P)


# ---------------------------------------------------------------------------
# Gains


@dataclass(frozen=True)
class GainResult:
    K: np.ndarray
    kappa: Optional[float]       # None for the unstructured fallback
    abscissa: float              # Re lambda_r of the shifted closed loop
    structured: bool
    target: float


def _target_matrix(model, p, Ap):
    # growing modes need A_p^(2) Hurwitz; decaying ones A_p - eta/2 I
    eta = model.params.eta[p]
    if eta < 0:
        return Ap - 0.5 * eta * np.eye(Ap.shape[0])
    return shift_2(Ap, p, model.params, model.tddt)


def _shifted_closed_abscissa(model, p, leaders, K) -> float:
    gains = [K] * model.m
    Ap = mode_matrix(model, p, leaders, gains)
    return rightmost_real(_target_matrix(model, p, Ap))


def synthesize_gain(model: SwitchedModel, leaders, p: int, shift_target: float = 1e-6,
                    best_effort: bool = False, allow_unstructured: bool = True) -> GainResult:
    """Smallest ``kappa`` with ``Re lambda_r(A_p^(2)(kappa I)) < -shift_target``.

    Doubling from ``KAPPA_MIN`` then bisection.  With ``best_effort`` the
    controllability premise is not demanded and the scalar gain minimizing
    the abscissa over a geometric grid is returned instead of raising.
    """
    leaders = frozenset(leaders)
    n = model.n
    I = np.eye(n)

    def absc(kappa):
        return _shifted_closed_abscissa(model, p, leaders, kappa * I)

    def ok(kappa):
        return absc(kappa) < -shift_target

    if best_effort:
        grid = [0.0] + [2.0 ** e for e in range(-10, 17)]
        vals = [absc(k) for k in grid]
        if min(vals) < -shift_target:
            return synthesize_gain(model, leaders, p, shift_target, False, False)
        # smallest gain within a hair of the best abscissa (it saturates)
        j = next(i for i, v in enumerate(vals) if v <= min(vals) + 1e-6 * max(1.0, abs(min(vals))))
        return GainResult(grid[j] * I, grid[j], vals[j], True, shift_target)

    metric = MetricF(model)
    f_p = metric.per_mode(leaders)[p]
    if f_p > 1e-8:
        sub = metric.unstable[p]
        worst = sub[0].value if sub else None
        raise SynthesisError(
            f"topology {p + 1}: unstable shifted eigenvalue {worst} is not controllable "
            f"from leaders {sorted(leaders)} (f_p = {f_p:.4g})")

    if ok(KAPPA_MIN):
        return GainResult(KAPPA_MIN * I, KAPPA_MIN, absc(KAPPA_MIN), True, shift_target)
    lo, hi = KAPPA_MIN, 2 * KAPPA_MIN
    while hi <= KAPPA_MAX and not ok(hi):
        lo, hi = hi, 2 * hi
    if hi <= KAPPA_MAX:
        while hi - lo > 1e-10 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        return GainResult(hi * I, hi, absc(hi), True, shift_target)

    if not allow_unstructured:
        raise SynthesisError(
            f"topology {p + 1}: no scalar gain up to {KAPPA_MAX:g} reaches the target")
    # Unstructured full-state feedback for (Ahat_p, D (x) I_n).
    Ahat = shifted_open_loop(model, p)
    if model.params.eta[p] < 0:
        Ahat = _target_matrix(model, p, open_loop_matrix(model, p))
    B = input_matrix(model.N, n, leaders, compact=False)
    alpha = shift_target + 1e-3
    try:
        X = sla.solve_continuous_are(Ahat + alpha * np.eye(model.dim), B,
                                     np.eye(model.dim), np.eye(model.dim))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SynthesisError(f"topology {p + 1}: Riccati fallback failed: {exc}") from exc
    Khat = B.T @ X
    a = rightmost_real(Ahat - B @ Khat)
    if not a < -shift_target:
        raise SynthesisError(f"topology {p + 1}: fallback feedback reaches only {a:.4g}")
    return GainResult(Khat, None, a, False, shift_target)


# ---------------------------------------------------------------------------
# Eigenvalue margins and beta


def check_margins(model: SwitchedModel, gains, p: int, beta_setting: Optional[float] = None):
    """``(margin_6, margin_7, beta_computed)`` for topology ``p``.

    ``beta_computed`` is ``nan`` when the spectral abscissa of the shifted
    matrix is numerically zero.
    """
    params, tddt = model.params, model.tddt
    beta_setting = params.beta_setting if beta_setting is None else beta_setting
    phi = params.phi_value(tddt)
    Ap = mode_matrix(model, p, gains=gains)
    A1 = shift_1(Ap, p, params, tddt)
    A2 = shift_2(Ap, p, params, tddt)
    m6 = rightmost_real(A1) + (params.l[p] + phi) / (2 * beta_setting * tddt.tau_min[p])
    m7 = rightmost_real(A2)
    try:
        beta = beta_of(A1)
    except SingularityError:
        beta = float("nan")
    return m6, m7, beta


@dataclass(frozen=True)
class BetaDecision:
    accepted: bool
    setting: float
    rerun: bool
    history: tuple


def beta_verification_loop(beta_computed: float, beta_setting: float) -> BetaDecision:
    """Accept or lower the assumed normality factor.

    Accepted outright when the computed value reaches the setting or
    exceeds 0.5; otherwise the setting drops in 0.1 steps until it is at
    or below the computed value, and the caller must re-run.
    """
    hist = [beta_setting]
    if beta_computed >= beta_setting or beta_computed > 0.5:
        return BetaDecision(True, beta_setting, False, tuple(hist))
    s = beta_setting
    while s > beta_computed + 1e-12 and s > 0.1 + 1e-12:
        s = round(s - 0.1, 10)
        hist.append(s)
    if beta_computed >= s - 1e-12:
        return BetaDecision(True, s, True, tuple(hist))
    return BetaDecision(False, s, False, tuple(hist))


# ---------------------------------------------------------------------------
# Lyapunov matrix families


@dataclass(frozen=True)
class PFamily:
    """Matrices ``P_0 .. P_l`` of one topology plus construction metadata."""

    matrices: tuple
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def first(self):
        return self.matrices[0]

    @property
    def last(self):
        return self.matrices[-1]

    def eig_range(self) -> tuple[float, float]:
        lo = min(float(np.linalg.eigvalsh(P)[0]) for P in self.matrices)
        hi = max(float(np.linalg.eigvalsh(P)[-1]) for P in self.matrices)
        return lo, hi

    def scaled(self, s: float) -> "PFamily":
        return PFamily(tuple(s * P for P in self.matrices), self.method, dict(self.meta))


def _check_box(family: PFamily, label: str = "") -> None:
    for i, P in enumerate(family.matrices):
        w = np.linalg.eigvalsh(P)
        if not (w[0] > 1e-10 and w[-1] < 1 - 1e-10):
            raise ConstructionError(
                f"{label}P_{i} eigenvalues in [{w[0]:.4g}, {w[-1]:.4g}], outside (0, 1)")


def px_upper_bound(A1, rhs: float) -> float:
    """``rhs / (-lambda_max(A1^T + A1))``: bound on ``lambda_max`` of the
    solution of ``A1^T P + P A1 + rhs I = 0`` when ``A1 + A1^T < 0``."""
    s = _lmax_sym(2 * _sym(A1))
    if s >= 0:
        return float("inf")
    return rhs / (-s)


def endpoint_family(Ap, p: int, params: TheoremParams, tddt: TddtSpec,
                    check: bool = True) -> PFamily:
    """Family whose endpoints solve the two shifted Lyapunov equations.

    ``P_0`` solves ``A1^T P + P A1 + (l + phi)/tau_min I = 0`` and ``P_l``
    solves ``A2^T P + P A2 + phi I = 0``; intermediate members interpolate
    linearly.
    """
    Ap = np.asarray(Ap, dtype=float)
    l, tau = params.l[p], tddt.tau_min[p]
    phi = params.phi_value(tddt)
    A1 = shift_1(Ap, p, params, tddt)
    A2 = shift_2(Ap, p, params, tddt)
    d = Ap.shape[0]
    rhs = (l + phi) / tau
    Px = lyapunov_solve(A1, rhs * np.eye(d))
    Pxp = lyapunov_solve(A2, phi * np.eye(d))
    mats = tuple(Px + (i / l) * (Pxp - Px) for i in range(l + 1))
    fam = PFamily(mats, "endpoint", {"rhs_first": rhs, "rhs_last": phi,
                                     "px_bound": px_upper_bound(A1, rhs)})
    if check:
        _check_box(fam, f"topology {p + 1}: ")
        if np.linalg.eigvalsh(Px)[-1] > fam.meta["px_bound"] * (1 + 1e-9) + 1e-12:
            raise ConstructionError(f"topology {p + 1}: P_x violates its eigenvalue bound")
    return fam


def log_norm(M, X=None) -> float:
    """Largest eigenvalue of the symmetric part of ``M`` in the ``X`` inner product."""
    M = np.asarray(M, dtype=float)
    if X is None:
        return _lmax_sym(M)
    R = np.linalg.cholesky(X).T
    return _lmax_sym(R @ M @ np.linalg.inv(R))


def geometric_family(Ap, p: int, params: TheoremParams, tddt: TddtSpec,
                     rate: float, stable: bool = False, pbar=None) -> PFamily:
    """Family ``P_i = g^i Pbar`` growing at discrete rate ``rate``.

    By default ``Pbar`` solves ``(A - h I)^T Pbar + Pbar (A - h I) + I = 0``
    with ``h = (eta - rate)/2``; then the interval inequalities hold with
    left-hand side ``-g^i I`` exactly, where ``g = 1 + rate * tau_min / l``.
    A supplied ``pbar`` (shared between modes) must make ``A - h I``
    dissipative in its inner product.  Decaying (stable-route) modes use
    ``rate = 0``: a constant family.  Unscaled; the certificate rescales
    into the unit box.
    """
    Ap = np.asarray(Ap, dtype=float)
    l, tau, eta = params.l[p], tddt.tau_min[p], params.eta[p]
    if stable:
        rate = 0.0
    h = 0.5 * (eta - rate)
    Ah = Ap - h * np.eye(Ap.shape[0])
    if pbar is None:
        if rightmost_real(Ah) >= 0:
            raise ConstructionError(
                f"topology {p + 1}: A_p - {h:.4g} I is not Hurwitz; no family at this rate")
        Pbar = lyapunov_solve(Ah, np.eye(Ap.shape[0]))
    else:
        Pbar = _sym(np.asarray(pbar, dtype=float))
        if log_norm(Ah, Pbar) >= 0:
            raise ConstructionError(
                f"topology {p + 1}: shared base matrix does not contract A_p - {h:.4g} I")
    g = 1.0 + rate * tau / l
    mats = tuple((g ** i) * Pbar for i in range(l + 1))
    return PFamily(mats, "geometric", {"rate": rate, "growth": g ** l,
                                       "shared": pbar is not None})


def construct_p_family(model: SwitchedModel, gains, p: int, method: str = "endpoint",
                       rate: Optional[float] = None) -> PFamily:
    Ap = mode_matrix(model, p, gains=gains)
    if method == "endpoint":
        return endpoint_family(Ap, p, model.params, model.tddt)
    if method == "geometric":
        eta = model.params.eta[p]
        if rate is None:
            rate = 0.5 * max(eta - 2 * rightmost_real(Ap), 0.0)
        fam = geometric_family(Ap, p, model.params, model.tddt, rate, stable=eta < 0)
        lo, hi = fam.eig_range()
        return fam.scaled(0.5 / hi)
    raise ValueError(f"unknown family method {method!r}")


def check_discretized_lmis(Ap, p: int, params: TheoremParams, tddt: TddtSpec,
                           family: PFamily, stable: bool = False) -> dict:
    """Largest eigenvalue of every discretized inequality's left-hand side.

    Growing modes: the two interval inequalities for ``i = 0..l-1`` plus
    the terminal one on ``P_l``.  Decaying modes: the inequality without
    the interval term, for every member.
    """
    Ap = np.asarray(Ap, dtype=float)
    eta, l, tau = params.eta[p], params.l[p], tddt.tau_min[p]
    P = family.matrices

    def lie(X):
        return Ap.T @ X + X @ Ap - eta * X

    out = {}
    if stable:
        out["(18)"] = [_lmax_sym(lie(X)) for X in P]
        return out
    phis = [l * (P[i + 1] - P[i]) / tau for i in range(len(P) - 1)]
    out["(10)"] = [_lmax_sym(lie(P[i]) + phis[i]) for i in range(len(P) - 1)]
    out["(11)"] = [_lmax_sym(lie(P[i + 1]) + phis[i]) for i in range(len(P) - 1)]
    out["terminal"] = [_lmax_sym(lie(P[-1]))]
    return out


def mu_feasibility(families: Sequence[PFamily]):
    """Minimal jump factors between consecutive modes.

    ``pairs[q][p]`` is the least ``mu`` with ``P_{q,0} <= mu P_{p,l}``
    (largest generalized eigenvalue); ``required[q]`` maximizes it over
    ``p != q`` and is ``None`` for a single topology.
    """
    m = len(families)
    pairs = np.full((m, m), np.nan)
    for q in range(m):
        for p in range(m):
            if p == q:
                continue
            Pl = families[p].last
            if np.linalg.eigvalsh(Pl)[0] <= 0:
                raise DomainError(f"P_{{{p + 1},l}} is not positive definite")
            w = sla.eigh(families[q].first, Pl, eigvals_only=True)
            pairs[q, p] = float(w[-1])
    required = [None if m == 1 else float(np.nanmax(pairs[q])) for q in range(m)]
    return pairs, required


def tddt_window(params: TheoremParams, mu_required: Sequence[Optional[float]],
                tddt: Optional[TddtSpec] = None) -> list[tuple[float, float]]:
    """Certified dwell windows from the jump factors.

    Growing mode: ``[tau_min, -log(mu)/eta - slack]`` (empty when the upper
    end falls below ``tau_min``).  Decaying mode:
    ``[max(tau_min, -log(mu)/eta + slack), inf)``.  ``None`` in
    ``mu_required`` falls back to the configured ``mu``.
    """
    out = []
    for p, mu in enumerate(mu_required):
        mu = params.mu[p] if mu is None else mu
        eta = params.eta[p]
        lo = tddt.tau_min[p] if tddt is not None else 0.0
        if eta == 0:
            raise DomainError(f"topology {p + 1}: eta = 0 gives no dwell bound")
        if mu <= 0:
            raise DomainError(f"topology {p + 1}: mu must be positive")
        bound = -math.log(mu) / eta
        if eta > 0:
            out.append((lo, bound - WINDOW_SLACK))
        else:
            out.append((max(lo, bound + WINDOW_SLACK), math.inf))
    return out


def classify_modes(model: SwitchedModel, gains) -> list[str]:
    return ["stable" if rightmost_real(mode_matrix(model, p, gains=gains)) < -STABLE_TOL
            else "unstable" for p in range(model.m)]


# ---------------------------------------------------------------------------
# Cross-mode scaling


def min_mean_cycle(W) -> float:
    """Karp's minimum cycle mean of a complete digraph with weights ``W[p, q]``
    on edge ``p -> q`` (diagonal ignored)."""
    W = np.asarray(W, dtype=float)
    m = W.shape[0]
    D = np.full((m + 1, m), np.inf)
    D[0] = 0.0
    for k in range(1, m + 1):
        for q in range(m):
            D[k, q] = min(D[k - 1, p] + W[p, q] for p in range(m) if p != q)
    best = np.inf
    for v in range(m):
        if not np.isfinite(D[m, v]):
            continue
        worst = max((D[m, v] - D[k, v]) / (m - k) for k in range(m) if np.isfinite(D[k, v]))
        best = min(best, worst)
    return float(best)


def _potentials(W) -> np.ndarray:
    """Shortest-path potentials ``x`` with ``x_q - x_p <= W[p, q]``."""
    m = W.shape[0]
    x = np.zeros(m)
    for _ in range(m + 1):
        changed = False
        for p in range(m):
            for q in range(m):
                if p != q and x[p] + W[p, q] < x[q] - 1e-15:
                    x[q] = x[p] + W[p, q]
                    changed = True
        if not changed:
            break
    return x


@dataclass
class _Design:
    families: list
    slack: float
    rates: list


def _requirement(params: TheoremParams, tddt: TddtSpec, p: int, stable: bool) -> float:
    # eta * tau evaluated at the binding end of the requested window
    tau = tddt.tau_min[p] if stable else tddt.tau_max[p]
    return params.eta[p] * tau


def _design_for_base(mode_mats, stable, params, tddt, bases) -> Optional[_Design]:
    """Rate search for one choice of base matrices (``None`` entries mean
    a per-mode Lyapunov solution)."""
    m = len(mode_mats)
    room = []
    for p in range(m):
        if bases[p] is None:
            room.append(params.eta[p] - 2 * rightmost_real(mode_mats[p]))
        else:
            room.append(params.eta[p] - 2 * log_norm(mode_mats[p], bases[p]))
    if any(r <= 0 for r in room):
        return None
    R = [_requirement(params, tddt, p, stable[p]) for p in range(m)]
    cache: dict = {}

    def fam(p, theta):
        key = (p, theta)
        if key not in cache:
            try:
                cache[key] = geometric_family(mode_mats[p], p, params, tddt, theta * room[p],
                                              stable=stable[p], pbar=bases[p])
            except (ConstructionError, SpectralClashError, np.linalg.LinAlgError):
                cache[key] = None
        return cache[key]

    def weights(fams):
        W = np.zeros((m, m))
        for p in range(m):
            for q in range(m):
                if p == q:
                    continue
                kappa = sla.eigh(fams[q].first, fams[p].matrices[0], eigvals_only=True)[-1]
                W[p, q] = -R[q] - math.log(kappa) + math.log(fams[p].meta["growth"])
        return W

    def score(thetas):
        fams = [fam(p, t) for p, t in enumerate(thetas)]
        if any(f is None for f in fams):
            return -np.inf, fams
        if m == 1:
            return np.inf, fams
        return min_mean_cycle(weights(fams)), fams

    thetas = [0.5] * m
    best, fams = score(thetas)
    for _ in range(3):
        improved = False
        for p in range(m):
            if stable[p]:
                continue
            for t in THETA_GRID:
                trial = list(thetas)
                trial[p] = t
                sc, fs = score(trial)
                if sc > best + 1e-12:
                    best, thetas, fams, improved = sc, trial, fs, True
        if not improved:
            break
    if any(f is None for f in fams):
        return None
    if m > 1:
        W = weights(fams)
        x = _potentials(W - best * (1 - 1e-6) if np.isfinite(best) else W)
        fams = [f.scaled(math.exp(x[p])) for p, f in enumerate(fams)]
    top = max(f.eig_range()[1] for f in fams)
    fams = [f.scaled(0.5 / top) for f in fams]
    return _Design(fams, float(best), [thetas[p] * room[p] for p in range(m)])


def _design_families(mode_mats, stable, params, tddt) -> _Design:
    """Pick base matrices, growth rates and per-mode scalings maximizing the
    worst slack of ``log mu_q + eta_q tau_q <= -slack`` over all switches.

    Candidates: a Lyapunov solution per mode, the identity shared by all
    modes, and the normalized average of the per-mode solutions.
    """
    m = len(mode_mats)
    d = mode_mats[0].shape[0]
    candidates = [[None] * m, [np.eye(d)] * m]
    try:
        own = []
        for p, A in enumerate(mode_mats):
            shift = 0.5 * (rightmost_real(A) + min(0.0, params.eta[p]))
            P = lyapunov_solve(A - shift * np.eye(d), np.eye(d))
            w = np.linalg.eigvalsh(P)
            if w[0] <= 0:
                raise np.linalg.LinAlgError("indefinite")
            own.append(P / w[-1])
        candidates.append([sum(own) / m] * m)
    except (SpectralClashError, np.linalg.LinAlgError):
        pass
    best: Optional[_Design] = None
    for bases in candidates:
        design = _design_for_base(mode_mats, stable, params, tddt, bases)
        if design is not None and (best is None or design.slack > best.slack):
            best = design
    if best is None:
        absc = max(rightmost_real(A) for A in mode_mats)
        raise ConstructionError(
            f"no admissible growth rate for some topology (max Re lambda_r(A_p) = {absc:.4g})")
    return best


# ---------------------------------------------------------------------------
# The certificate


@dataclass
class ModeRecord:
    mode_class: str                 # eigenvalue sign of the closed loop
    route: str                      # "growing" or "decaying" condition set
    lambda_r: float
    margin_6: float
    margin_7: float
    margin_decay: Optional[float]
    beta_computed: float
    kappa: Optional[float]
    structured: bool
    lmi_margins: dict = field(default_factory=dict)
    p_eig_range: Optional[tuple] = None


@dataclass
class Certificate:
    leaders: list
    gains: list
    modes: list
    beta_setting: float
    beta_history: list
    mu_pairs: Optional[list]
    mu_required: list
    tau_windows: list
    requested_windows: list
    slack: Optional[float]
    verdict: str
    failed_condition: Optional[str]
    require_margins: bool = True
    gain_target: Optional[float] = None
    notes: list = field(default_factory=list)
    families: Optional[list] = None   # kept in memory only

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        def num(x):
            if x is None:
                return None
            x = float(x)
            if math.isnan(x):
                return None
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x

        return {
            "leaders": list(self.leaders),
            "verdict": self.verdict,
            "failed_condition": self.failed_condition,
            "require_margins": self.require_margins,
            "gain_target": self.gain_target,
            "beta_setting": self.beta_setting,
            "beta_history": list(self.beta_history),
            "gains": [np.asarray(K).tolist() for K in self.gains],
            "modes": [{
                "mode_class": r.mode_class,
                "route": r.route,
                "lambda_r": num(r.lambda_r),
                "margin_6": num(r.margin_6),
                "margin_7": num(r.margin_7),
                "margin_decay": num(r.margin_decay),
                "beta_computed": num(r.beta_computed),
                "kappa": num(r.kappa),
                "structured": r.structured,
                "lmi_margins": {k: [num(v) for v in vs] for k, vs in r.lmi_margins.items()},
                "p_eig_range": None if r.p_eig_range is None else [num(v) for v in r.p_eig_range],
            } for r in self.modes],
            "mu_pairs": None if self.mu_pairs is None else
            [[num(v) for v in row] for row in self.mu_pairs],
            "mu_required": [num(v) for v in self.mu_required],
            "tau_windows": [[num(a), num(b)] for a, b in self.tau_windows],
            "requested_windows": [[num(a), num(b)] for a, b in self.requested_windows],
            "slack": num(self.slack),
            "notes": list(self.notes),
        }

    def render_text(self) -> str:
        lines = [f"leaders {sorted(self.leaders)}: {self.verdict.upper()}"
                 + (f" (first failure: {self.failed_condition})" if self.failed_condition else "")]
        for p, r in enumerate(self.modes):
            lines.append(f"  topology {p + 1} [{r.mode_class}, {r.route}] "
                         f"lambda_r={r.lambda_r:+.4f} beta={r.beta_computed:.4f}")
            if r.route == "growing":
                lines.append(f"    (6) margin {r.margin_6:+.4e} {'ok' if r.margin_6 < 0 else 'FAIL'}")
                lines.append(f"    (7) margin {r.margin_7:+.4e} {'ok' if r.margin_7 < 0 else 'FAIL'}")
            else:
                lines.append(f"    decay margin {r.margin_decay:+.4e} "
                             f"{'ok' if r.margin_decay < 0 else 'FAIL'}")
            for name, vals in r.lmi_margins.items():
                worst = max(vals)
                lines.append(f"    {name} worst {worst:+.4e} {'ok' if worst <= -LMI_TOL else 'FAIL'}")
        for p, (mu, (lo, hi), (rlo, rhi)) in enumerate(
                zip(self.mu_required, self.tau_windows, self.requested_windows)):
            mu_s = "n/a" if mu is None else f"{mu:.4g}"
            lines.append(f"  topology {p + 1}: (16) mu={mu_s}  (17) certified [{lo:.4f}, {hi:.4f}]"
                         f" requested [{rlo:.4f}, {rhi:.4f}]")
        return "\n".join(lines)


def _fail_certificate(model, leaders, reason, note, require_margins, target=None):
    return Certificate(
        leaders=sorted(leaders), gains=[], modes=[], beta_setting=model.params.beta_setting,
        beta_history=[model.params.beta_setting], mu_pairs=None,
        mu_required=[None] * model.m, tau_windows=[(math.nan, math.nan)] * model.m,
        requested_windows=[model.tddt.window(p) for p in range(model.m)], slack=None,
        verdict="fail", failed_condition=reason, require_margins=require_margins,
        gain_target=target, notes=[note])


def certify_with_gains(model: SwitchedModel, leaders, gain_results: Sequence[GainResult],
                       require_margins: bool = True, target: Optional[float] = None) -> Certificate:
    """Run every certification stage for fixed gains."""
    leaders = frozenset(leaders)
    params, tddt = model.params, model.tddt
    gains = [g.K for g in gain_results]
    model = model.with_leaders(leaders).with_gains(gains)
    m = model.m
    modes_A = [mode_matrix(model, p) for p in range(m)]
    classes = classify_modes(model, gains)
    stable = [classes[p] == "stable" and params.eta[p] < 0 for p in range(m)]
    notes = list(params.range_violations(tddt))
    failed = None

    def fail(cond):
        nonlocal failed
        if failed is None:
            failed = cond

    if not all(g.structured for g in gain_results):
        notes.append("unstructured full-state feedback used; protocol gain structure not achieved")
        fail("structure")

    records = []
    for p in range(m):
        m6, m7, beta = check_margins(model, gains, p)
        decay = rightmost_real(modes_A[p]) - 0.5 * params.eta[p]
        records.append(ModeRecord(
            mode_class=classes[p], route="decaying" if stable[p] else "growing",
            lambda_r=rightmost_real(modes_A[p]), margin_6=m6, margin_7=m7,
            margin_decay=decay, beta_computed=beta,
            kappa=gain_results[p].kappa, structured=gain_results[p].structured))

    beta_setting = params.beta_setting
    history = [beta_setting]
    for p in range(m):
        r = records[p]
        if stable[p]:
            if r.margin_decay >= 0:
                fail("decay")
            continue
        if params.eta[p] < 0:
            notes.append(f"topology {p + 1}: decaying rate on a mode that is not Hurwitz")
            fail("decay")
            continue
        if not require_margins:
            continue
        if math.isnan(r.beta_computed):
            fail("beta")
            continue
        dec = beta_verification_loop(r.beta_computed, beta_setting)
        if dec.rerun:
            beta_setting = dec.setting
            history.extend(dec.history[1:])
            for q in range(m):
                records[q].margin_6 = check_margins(model, gains, q, beta_setting)[0]
        if not dec.accepted:
            fail("beta")
    if require_margins:
        for p in range(m):
            if stable[p]:
                continue
            if not records[p].margin_7 < 0:
                fail("(7)")
            if not records[p].margin_6 < 0:
                fail("(6)")

    requested = [tddt.window(p) for p in range(m)]
    try:
        design = _design_families(modes_A, stable, params, tddt)
    except ConstructionError as exc:
        notes.append(str(exc))
        fail("family")
        cert = Certificate(sorted(leaders), gains, records, beta_setting, history, None,
                           [None] * m, [(math.nan, math.nan)] * m, requested, None,
                           "fail", failed, require_margins, target, notes)
        return cert

    fams = design.families
    for p in range(m):
        lmis = check_discretized_lmis(modes_A[p], p, params, tddt, fams[p], stable[p])
        records[p].lmi_margins = lmis
        records[p].p_eig_range = fams[p].eig_range()
        lo, hi = records[p].p_eig_range
        if not (lo > 1e-10 and hi < 1 - 1e-10):
            fail("family")
        for name, vals in lmis.items():
            if max(vals) > -LMI_TOL:
                fail(name)

    if m > 1:
        pairs, mu_req = mu_feasibility(fams)
        for q in range(m):
            if not stable[q] and not mu_req[q] < 1:
                fail("(16)")
        mu_pairs = pairs.tolist()
    else:
        mu_req, mu_pairs = [None], None
    windows = tddt_window(params, mu_req, tddt)
    for p in range(m):
        lo, hi = windows[p]
        rlo, rhi = requested[p]
        if not (lo <= rlo and rhi <= hi and lo <= hi):
            fail("(17)")
    if m == 1 and not stable[0] and not records[0].lambda_r < 0:
        notes.append("single topology that is not Hurwitz: nothing to switch to")
        fail("(17)")

    return Certificate(
        leaders=sorted(leaders), gains=gains, modes=records, beta_setting=beta_setting,
        beta_history=history, mu_pairs=mu_pairs, mu_required=mu_req, tau_windows=windows,
        requested_windows=requested, slack=None if m == 1 else design.slack,
        verdict="pass" if failed is None else "fail", failed_condition=failed,
        require_margins=require_margins, gain_target=target, notes=notes, families=fams)


def full_certificate(model: SwitchedModel, leaders=None, *, require_margins: bool = True,
                     gain_targets: Sequence[float] = DEFAULT_GAIN_TARGETS) -> Certificate:
    """Synthesize gains and run the whole certification chain.

    Gain targets are tried in increasing order (stronger closed-loop decay
    usually buys a wider dwell window); the first passing certificate is
    returned, otherwise the failing one with the largest scaling slack.
    With ``require_margins=False`` the eigenvalue margins are reported but
    do not gate the verdict, and gains are best-effort when the leaders do
    not control every unstable direction.
    """
    leaders = frozenset(model.leaders if leaders is None else leaders)
    prev: Optional[list] = None
    best: Optional[Certificate] = None
    for t in gain_targets:
        results = []
        for p in range(model.m):
            try:
                results.append(synthesize_gain(model, leaders, p, t,
                                               best_effort=not require_margins,
                                               allow_unstructured=prev is None))
            except SynthesisError as exc:
                if prev is None:
                    return _fail_certificate(model, leaders, "synthesis", str(exc),
                                             require_margins, t)
                # unattainable target: keep the fastest scalar gain found so far
                fallback = synthesize_gain(model, leaders, p, t, best_effort=True)
                results.append(fallback if fallback.abscissa < prev[p].abscissa - 1e-9
                               else prev[p])
        if prev is not None and all(
                np.array_equal(a.K, b.K) for a, b in zip(results, prev)):
            continue
        prev = results
        cert = certify_with_gains(model, leaders, results, require_margins, t)
        if cert.passed:
            return cert
        if best is None or (cert.slack is not None and
                            (best.slack is None or cert.slack > best.slack)):
            best = cert
    return best
