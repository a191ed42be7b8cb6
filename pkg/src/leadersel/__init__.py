"""Leader selection for multi-agent networks with switching topologies.

Greedy selection on a controllability-distance metric, constructive
dwell-time certificates for the switched tracking-error system, and exact
simulation under admissible switching.
"""
from .certify import Certificate, full_certificate
from .graph import Digraph, initial_leader_set, laplacian, scc, union_graph
from .selection import SelectionReport, algorithm1, algorithm2
from .simulate import gen_signal, propagate
from .spectral import MetricF, metric_f
from .sysmodel import SwitchedModel, TddtSpec, TheoremParams

__all__ = [
    "Certificate",
    "Digraph",
    "MetricF",
    "SelectionReport",
    "SwitchedModel",
    "TddtSpec",
    "TheoremParams",
    "algorithm1",
    "algorithm2",
    "full_certificate",
    "gen_signal",
    "initial_leader_set",
    "laplacian",
    "metric_f",
    "propagate",
    "scc",
    "union_graph",
]
