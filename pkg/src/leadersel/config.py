"""Network configuration files (JSON).

Example::

    {
      "A": [[0.41, -0.41], [0.38, -0.34]],
      "topologies": [[[1, 2], [2, 3]], [[1, 3]]],
      "tddt": [{"tau_min": 1.0, "tau_max": 1.2}, {"tau_min": 0.5, "tau_max": 0.6}],
      "params": {"l": [2, 2], "mu": [0.5, 0.5], "eta": [0.5, 0.8]},
      "k": 3,
      "seed": 7,
      "options": {"horizon": 30.0, "trials": 100}
    }

Validation errors name the offending key and the line it sits on.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import ConfigurationError
from .graph import Digraph
from .sysmodel import SwitchedModel, TddtSpec, TheoremParams

__all__ = ["NetworkConfig", "DEFAULT_OPTIONS", "load_config", "parse_config"]

DEFAULT_OPTIONS = {
    "z_max": 5,
    "eta_factor": 1.2,
    "horizon": 30.0,
    "sample_dt": 0.01,
    "law": "aperiodic",
    "trials": 100,
    "trial_gains": None,
    "increments": [round(0.2 * i, 10) for i in range(13)],
    "sweep_epsilon": 1e-3,
    "stable_eta": None,
    "stable_mu": 2.0,
    "followers_only": False,
}


@dataclass
class NetworkConfig:
    A: np.ndarray
    topologies: list
    tddt: TddtSpec
    params: TheoremParams
    k: int
    seed: int = 0
    options: dict = field(default_factory=dict)
    source: Optional[str] = None

    def model(self) -> SwitchedModel:
        return SwitchedModel(self.A, self.topologies, self.tddt, self.params)

    def option(self, name: str) -> Any:
        return self.options.get(name, DEFAULT_OPTIONS[name])

    def to_json(self) -> dict:
        return {
            "A": self.A.tolist(),
            "topologies": [g.to_json() for g in self.topologies],
            "tddt": [{"tau_min": lo, "tau_max": hi}
                     for lo, hi in zip(self.tddt.tau_min, self.tddt.tau_max)],
            "params": self.params.to_json(),
            "k": self.k,
            "seed": self.seed,
            "options": dict(self.options),
        }


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _fail(text: str, key: str, msg: str):
    line = _line_of(text, key)
    where = f"line {line}, " if line else ""
    raise ConfigurationError(f"{where}'{key}': {msg}")


def parse_config(text: str, source: Optional[str] = None) -> NetworkConfig:
    """Parse and validate configuration text."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("line 1: top level must be an object")
    for key in ("A", "topologies", "tddt", "params"):
        if key not in raw:
            raise ConfigurationError(f"missing required key '{key}'")

    try:
        A = np.array(raw["A"], dtype=float)
    except (TypeError, ValueError) as exc:
        _fail(text, "A", f"not a numeric matrix ({exc})")
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.size == 0:
        _fail(text, "A", f"must be a nonempty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        _fail(text, "A", "entries must be finite")

    tops_raw = raw["topologies"]
    if not isinstance(tops_raw, list) or not tops_raw:
        _fail(text, "topologies", "must be a nonempty list of edge lists")
    N = raw.get("n_agents")
    if N is None:
        ends = [int(v) for edges in tops_raw for e in edges for v in e]
        N = max(ends) if ends else 1
    tops = []
    for idx, edges in enumerate(tops_raw):
        try:
            tops.append(Digraph(int(N), [tuple(e) for e in edges]))
        except (TypeError, ValueError) as exc:
            _fail(text, "topologies", f"topology {idx + 1}: {exc}")

    td = raw["tddt"]
    if not isinstance(td, list) or len(td) != len(tops):
        _fail(text, "tddt", f"need one window per topology ({len(tops)})")
    try:
        tddt = TddtSpec([w["tau_min"] for w in td], [w["tau_max"] for w in td])
    except (KeyError, TypeError, ValueError) as exc:
        _fail(text, "tddt", str(exc))

    pr = raw["params"]
    try:
        params = TheoremParams(l=pr["l"], mu=pr["mu"], eta=pr["eta"], phi=pr.get("phi"),
                               beta_setting=pr.get("beta_setting", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        _fail(text, "params", str(exc))
    if len(params) != len(tops):
        _fail(text, "params", f"need one entry per topology ({len(tops)})")
    if any(e == 0 for e in params.eta):
        _fail(text, "eta", "every eta must be nonzero")

    k = raw.get("k", int(N))
    if not isinstance(k, int) or k < 1:
        _fail(text, "k", "budget must be a positive integer")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        _fail(text, "seed", "must be an integer")
    options = raw.get("options", {})
    if not isinstance(options, dict):
        _fail(text, "options", "must be an object")
    unknown = set(options) - set(DEFAULT_OPTIONS)
    if unknown:
        _fail(text, sorted(unknown)[0], "unknown option")
    tg = options.get("trial_gains")
    if tg is not None and (not isinstance(tg, list) or len(tg) != len(tops)):
        _fail(text, "trial_gains", "need one scalar gain per topology")
    return NetworkConfig(A, tops, tddt, params, k, seed, options, source)


def load_config(path) -> NetworkConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))
