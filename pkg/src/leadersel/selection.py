"""Greedy leader selection, baselines and the greedy optimality certificate.

All routines grow a leader set from the mandatory agents ``S_0`` (those
unreachable in the union graph).  Ties between equally good candidates
go to the lowest agent index so that results are reproducible.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .certify import Certificate, full_certificate
from .errors import CapabilityError, DegenerateInstanceError, DomainError
from .graph import initial_leader_set
from .spectral import MetricF, fmax_terms, rightmost_real, submod_ratio_lower_bounds
from .sysmodel import SwitchedModel, TheoremParams, shifted_open_loop

__all__ = [
    "F_TOL",
    "SelectionReport",
    "check_nondegenerate",
    "marginal_gains",
    "greedy",
    "gamma_delta",
    "optimality_certificate",
    "default_proposals",
    "algorithm1",
    "algorithm2",
    "random_select",
    "fmax_greedy",
    "leaders_needed",
]

F_TOL = 1e-8
TIE_TOL = 1e-12


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LEADERSEL_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SelectionReport:
    """Outcome of a selection run.

    ``leaders`` keeps selection order (``S_0`` first, ascending).
    ``f_trace[0]`` is ``f(S_0)``; each later entry follows one addition.
    """

    leaders: list
    f_trace: list
    gamma_delta: Optional[float]
    gamma_0: Optional[float]
    k_used: int
    params_used: TheoremParams
    status: str
    s0: list = field(default_factory=list)
    gamma_delta_kind: Optional[str] = None
    bound_holds: Optional[bool] = None
    xi: Optional[int] = None
    proposals_tried: int = 0
    certificate: Optional[Certificate] = None
    extra: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.leaders)

    def to_json(self) -> dict:
        out = {
            "leaders": list(self.leaders),
            "s0": list(self.s0),
            "f_trace": [float(v) for v in self.f_trace],
            "gamma_delta": self.gamma_delta,
            "gamma_delta_kind": self.gamma_delta_kind,
            "gamma_0": self.gamma_0,
            "bound_holds": self.bound_holds,
            "k_used": self.k_used,
            "params_used": self.params_used.to_json(),
            "status": self.status,
            "xi": self.xi,
            "proposals_tried": self.proposals_tried,
            "certificate": None if self.certificate is None else self.certificate.to_json(),
        }
        out.update(self.extra)
        return out


def check_nondegenerate(model: SwitchedModel) -> float:
    """Largest spectral abscissa of the shifted open-loop matrices.

    Raises
    ------
    DegenerateInstanceError
        If every shifted open-loop matrix is already Hurwitz: selection is
        then vacuous (``f`` vanishes with no leaders at all).
    """
    worst = max(rightmost_real(shifted_open_loop(model, p)) for p in range(model.m))
    if worst < 0:
        raise DegenerateInstanceError(
            "every shifted open-loop mode is Hurwitz (max Re lambda_r = "
            f"{worst:.4g}); leader selection captures nothing here")
    return worst


def _metric(model_or_metric) -> MetricF:
    if isinstance(model_or_metric, MetricF):
        return model_or_metric
    return MetricF(model_or_metric)


def marginal_gains(model_or_metric, S) -> dict:
    """``f(S) - f(S + v)`` for every agent ``v`` outside ``S``."""
    metric = _metric(model_or_metric)
    S = frozenset(S)
    base = metric(S)
    cands = [v for v in range(1, metric.model.N + 1) if v not in S]
    if _threads() > 1 and len(cands) > 1:
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            vals = list(pool.map(lambda v: metric(S | {v}), cands))
    else:
        vals = [metric(S | {v}) for v in cands]
    return {v: base - fv for v, fv in zip(cands, vals)}


def _argmax_lowest(gains: dict) -> int:
    best = max(gains.values())
    return min(v for v, g in gains.items() if g >= best - TIE_TOL)


def greedy(model_or_metric, S0, k: Optional[int] = None, tol: float = F_TOL):
    """Add best-gain agents to ``S0`` until ``f <= tol`` or ``|S| = k``.

    Returns
    -------
    order : list
        ``sorted(S0)`` followed by the agents in the order added.
    trace : list
        ``f`` after each stage, starting with ``f(S0)``.
    """
    metric = _metric(model_or_metric)
    N = metric.model.N
    limit = N if k is None else min(k, N)
    order = sorted(S0)
    S = frozenset(order)
    trace = [metric(S)]
    while trace[-1] > tol and len(S) < limit:
        v = _argmax_lowest(marginal_gains(metric, S))
        order.append(v)
        S = S | {v}
        trace.append(metric(S))
    return order, trace


# ---------------------------------------------------------------------------
# Optimality certificate


def gamma_delta(model: SwitchedModel, size: int):
    """Lower bound on the submodularity ratio, ``min_p lambda_min(Cbar_p, size)``.

    Returns ``(value, kind)`` with ``kind`` "sparse" when the subset bound
    was enumerable for every mode, "global" when it fell back to the full
    matrix, and ``(None, None)`` when even that is too large.
    """
    vals, kind = [], "sparse"
    for p in range(model.m):
        try:
            glob, sparse = submod_ratio_lower_bounds(model, p, size)
        except CapabilityError:
            return None, None
        if sparse is None:
            kind = "global"
            vals.append(glob)
        else:
            vals.append(sparse)
    return float(min(vals)), kind


def optimality_certificate(f_empty: float, f_penultimate: float, gamma_delta: float,
                           k_min: int, k: int):
    """``(gamma_0, bound_holds)`` for a finished greedy run.

    ``gamma_0 = log(f_empty / f_penultimate) / gamma_delta`` and the bound
    is ``exp(-(k_min / k) gamma_delta) f_empty >= f_penultimate``.
    """
    if not (f_empty > 0 and f_penultimate > 0 and gamma_delta > 0):
        raise DomainError("need f_empty, f_penultimate and gamma_delta all positive")
    if not f_empty > f_penultimate:
        raise DomainError("need f_empty > f_penultimate")
    if k < 1 or k_min < 0:
        raise DomainError("k must be positive and k_min nonnegative")
    g0 = math.log(f_empty / f_penultimate) / gamma_delta
    holds = math.exp(-(k_min / k) * gamma_delta) * f_empty >= f_penultimate - 1e-12
    return g0, bool(holds)


def _attach_optimality(report: SelectionReport, model: SwitchedModel) -> None:
    trace = report.f_trace
    report.extra["f_empty"] = MetricF(model)(()) if report.s0 else float(trace[0])
    report.extra["f_s0"] = float(trace[0])
    gd, kind = gamma_delta(model, max(1, 2 * len(report.leaders)))
    report.gamma_delta, report.gamma_delta_kind = gd, kind
    if gd is None or gd <= 0 or len(trace) < 3:
        return
    f_empty, f_pen = trace[0], trace[-2]
    if not f_empty > f_pen > 0:
        return
    k_min = max(1, len(report.s0 or ()))
    g0, holds = optimality_certificate(f_empty, f_pen, gd, k_min, len(report.leaders))
    report.gamma_0, report.bound_holds = g0, holds


# ---------------------------------------------------------------------------
# The two selection algorithms


def default_proposals(params: TheoremParams, count: int = 5, factor: float = 1.2):
    """Parameter sets for successive retries: growth rates scaled by
    ``factor ** z``; decaying rates and everything else unchanged."""
    out = []
    for z in range(count):
        eta = [e * factor ** z if e > 0 else e for e in params.eta]
        out.append(params.with_eta(eta))
    return out


def _check_inputs(model, k, z_max, proposals):
    if not proposals:
        raise ValueError("at least one parameter proposal is required")
    if k < 1:
        raise ValueError("budget k must be positive")
    if z_max < 1:
        raise ValueError("z_max must be positive")
    for params in proposals[:z_max]:
        if len(params) != model.m:
            raise ValueError("parameter proposal has the wrong number of topologies")


def algorithm1(model: SwitchedModel, k: int, z_max: int,
               param_proposals: Sequence[TheoremParams]) -> SelectionReport:
    """Greedy until ``f`` vanishes, then certify; retry with new parameters.

    Each proposal restarts greedy from ``S_0`` (the metric depends on the
    parameters through the shift).  Returns the first certified set, or
    status ``none_for_tddt`` once ``z_max`` proposals are used up.
    """
    proposals = list(param_proposals)
    _check_inputs(model, k, z_max, proposals)
    check_nondegenerate(model.with_params(proposals[0]))
    S0 = sorted(initial_leader_set(model.topologies))
    last = None
    tried = 0
    for params in proposals[:z_max]:
        tried += 1
        m = model.with_params(params)
        metric = MetricF(m)
        order, trace = greedy(metric, S0)
        report = SelectionReport(order, trace, None, None, k, params, "none_for_tddt",
                                 s0=list(S0), proposals_tried=tried)
        last = report
        if len(order) > k or trace[-1] > F_TOL:
            continue
        cert = full_certificate(m, order, require_margins=True)
        report.certificate = cert
        if cert.passed:
            report.status = "certified"
            _attach_optimality(report, m)
            return report
    _attach_optimality(last, model.with_params(last.params_used))
    return last


def algorithm2(model: SwitchedModel, k: int, z_max: int,
               param_proposals: Sequence[TheoremParams]) -> SelectionReport:
    """Certify the current set before growing it.

    For the current set every proposal (up to ``z_max``) is tried with the
    full certificate, eigenvalue margins reported but not gating.  If none
    passes, the best marginal-gain agent under the first proposal's metric
    is added.  Stops with ``none_for_tddt`` when ``f`` already vanishes and
    with ``uncertified_budget`` when the budget is spent.
    """
    proposals = list(param_proposals)
    _check_inputs(model, k, z_max, proposals)
    base = model.with_params(proposals[0])
    check_nondegenerate(base)
    metric = MetricF(base)
    S0 = sorted(initial_leader_set(model.topologies))
    order = list(S0)
    trace = [metric(order)]
    tried = 0
    best_cert = None
    while True:
        for params in proposals[:z_max]:
            tried += 1
            cert = full_certificate(model.with_params(params), order, require_margins=False)
            if best_cert is None or cert.passed:
                best_cert = cert
            if cert.passed:
                report = SelectionReport(list(order), trace, None, None, k, params,
                                         "certified", s0=list(S0), proposals_tried=tried,
                                         certificate=cert, xi=len(order) - len(S0) + 1)
                _attach_optimality(report, base)
                return report
        status = None
        if trace[-1] <= F_TOL:
            status = "none_for_tddt"
        elif len(order) >= min(k, model.N):
            status = "uncertified_budget"
        if status is not None:
            report = SelectionReport(list(order), trace, None, None, k, proposals[0], status,
                                     s0=list(S0), proposals_tried=tried, certificate=best_cert,
                                     xi=len(order) - len(S0) + 1)
            _attach_optimality(report, base)
            return report
        v = _argmax_lowest(marginal_gains(metric, order))
        order.append(v)
        trace.append(metric(order))


# ---------------------------------------------------------------------------
# Baselines


def random_select(model: SwitchedModel, k: int, trials: int, seed: Optional[int] = None):
    """Mean ``f`` trace of uniformly random growth from ``S_0``.

    Every trial adds random new agents until ``f`` vanishes or ``|S| = k``;
    shorter trials are padded with their final value so that all traces
    have ``k - |S_0| + 1`` entries.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    metric = MetricF(model)
    S0 = sorted(initial_leader_set(model.topologies))
    length = max(1, min(k, model.N) - len(S0) + 1)
    traces = np.empty((trials, length))
    for t in range(trials):
        S = set(S0)
        tr = [metric(S)]
        while tr[-1] > F_TOL and len(S) < min(k, model.N):
            rest = [v for v in range(1, model.N + 1) if v not in S]
            S.add(int(rng.choice(rest)))
            tr.append(metric(S))
        tr += [tr[-1]] * (length - len(tr))
        traces[t] = tr[:length]
    return traces.mean(axis=0).tolist()


def fmax_greedy(model: SwitchedModel, k: int, trial_gains) -> SelectionReport:
    """Greedy on decrements of ``f_max`` with fixed trial gains.

    Stops once every shifted closed loop is Hurwitz (status ``certified``,
    meaning only that; no dwell-time certificate is run) or when the budget
    is spent (``uncertified_budget``).  ``f_trace`` records the metric
    ``f`` of the chosen sets so the baselines can be compared on one scale;
    the ``f_max`` values go to ``extra["fmax_trace"]``.
    """
    check_nondegenerate(model)
    metric = MetricF(model)
    S0 = sorted(initial_leader_set(model.topologies))
    order = list(S0)
    terms = fmax_terms(model, order, trial_gains)
    fmax_trace = [float(sum(terms))]
    trace = [metric(order)]
    limit = min(k, model.N)
    while max(terms) >= 0 and len(order) < limit:
        S = frozenset(order)
        gains = {v: fmax_trace[-1] - sum(fmax_terms(model, S | {v}, trial_gains))
                 for v in range(1, model.N + 1) if v not in S}
        v = _argmax_lowest(gains)
        order.append(v)
        terms = fmax_terms(model, order, trial_gains)
        fmax_trace.append(float(sum(terms)))
        trace.append(metric(order))
    status = "certified" if max(terms) < 0 else "uncertified_budget"
    return SelectionReport(order, trace, None, None, k, model.params, status, s0=list(S0),
                           extra={"fmax_trace": fmax_trace})


def leaders_needed(model: SwitchedModel, k: Optional[int] = None) -> SelectionReport:
    """Smallest prefix of the greedy chain that the full certificate accepts.

    Runs the greedy stage of Algorithm 1 with the model's own parameters,
    then keeps adding agents (best marginal gain, lowest index on ties)
    while the certificate fails.  Used by the dwell-time sweep, where the
    question is how many leaders a dwell window demands rather than when
    the metric vanishes.
    """
    check_nondegenerate(model)
    limit = model.N if k is None else min(k, model.N)
    metric = MetricF(model)
    S0 = sorted(initial_leader_set(model.topologies))
    order, trace = greedy(metric, S0)
    cert = None
    while True:
        if len(order) <= limit:
            cert = full_certificate(model, order, require_margins=True)
            if cert.passed:
                status = "certified"
                break
        if len(order) >= limit:
            status = "uncertified_budget" if len(order) > limit or trace[-1] > F_TOL \
                else "none_for_tddt"
            break
        v = _argmax_lowest(marginal_gains(metric, order))
        order.append(v)
        trace.append(metric(order))
    report = SelectionReport(order, trace, None, None, limit, model.params, status,
                             s0=list(S0), certificate=cert)
    return report
