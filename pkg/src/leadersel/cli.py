"""Command-line entry point ``leadersel``.

Exit codes: 0 success, 2 infeasible or uncertified, 3 invalid input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import NetworkConfig, load_config
from .errors import ConfigurationError, DegenerateInstanceError, GenerationError, LeaderSelError
from .graph import initial_leader_set
from .selection import (
    SelectionReport,
    algorithm1,
    algorithm2,
    default_proposals,
    fmax_greedy,
    greedy,
    leaders_needed,
    random_select,
)
from .simulate import gen_signal, propagate, random_initial_state, write_trajectory_csv
from .spectral import MetricF
from .sysmodel import SwitchedModel, TddtSpec

log = logging.getLogger("leadersel")

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID = 0, 2, 3

# Named random substreams derived from the config seed.
STREAM_SIGNAL, STREAM_RANDOM_SELECT, STREAM_INITIAL = 1, 2, 3


def substream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _seed_int(seed: int, stream: int) -> int:
    return int(substream(seed, stream).integers(2 ** 31))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")


def run_select(cfg: NetworkConfig, algorithm: int = 1) -> SelectionReport:
    model = cfg.model()
    proposals = default_proposals(cfg.params, cfg.option("z_max"), cfg.option("eta_factor"))
    run = algorithm1 if algorithm == 1 else algorithm2
    return run(model, cfg.k, cfg.option("z_max"), proposals)


def cmd_select(cfg: NetworkConfig, out: Path, algorithm: int = 1) -> int:
    report = run_select(cfg, algorithm)
    payload = {"config": cfg.to_json(), "algorithm": algorithm, "report": report.to_json()}
    _write_json(out / "report.json", payload)
    print(f"algorithm {algorithm}: status {report.status}, leaders {report.leaders}")
    print("f trace: " + ", ".join(f"{v:.6g}" for v in report.f_trace))
    gd = "n/a" if report.gamma_delta is None else f"{report.gamma_delta:.4g} ({report.gamma_delta_kind})"
    g0 = "n/a" if report.gamma_0 is None else f"{report.gamma_0:.4g}"
    print(f"gamma_delta {gd}, gamma_0 {g0}")
    if report.xi is not None:
        print(f"xi = {report.xi}")
    if report.certificate is not None:
        print(report.certificate.render_text())
        for p, K in enumerate(report.certificate.gains):
            print(f"K_{p + 1} = {np.array2string(np.asarray(K), precision=4)}")
    return EXIT_OK if report.status == "certified" else EXIT_INFEASIBLE


def _simulation_windows(cert: dict) -> list:
    """Requested windows clipped to the certified ones."""
    out = []
    for (lo, hi), (rlo, rhi) in zip(cert["tau_windows"], cert["requested_windows"]):
        hi = math.inf if hi == "inf" else hi
        a, b = max(lo, rlo), min(hi, rhi)
        if a > b:
            raise GenerationError(f"certified window [{lo}, {hi}] misses [{rlo}, {rhi}]")
        out.append((a, b))
    return out


def cmd_simulate(cfg: NetworkConfig, out: Path, report_path: Optional[Path] = None,
                 followers_only: bool = False) -> int:
    if report_path is None:
        report = run_select(cfg).to_json()
    else:
        report = json.loads(Path(report_path).read_text())["report"]
    cert = report.get("certificate")
    if report["status"] != "certified" or cert is None or cert["verdict"] != "pass":
        print("report is not certified; nothing to simulate", file=sys.stderr)
        return EXIT_INFEASIBLE
    model = cfg.model().with_leaders(cert["leaders"]).with_gains(
        [np.array(K) for K in cert["gains"]])
    windows = _simulation_windows(cert)
    horizon = float(cfg.option("horizon"))
    signal = gen_signal(windows, horizon, _seed_int(cfg.seed, STREAM_SIGNAL), cfg.option("law"))
    eps0 = random_initial_state(model.dim, substream(cfg.seed, STREAM_INITIAL))
    traj = propagate(model, signal, eps0, cfg.option("sample_dt"), t_end=horizon)
    exclude = cert["leaders"] if (followers_only or cfg.option("followers_only")) else ()
    write_trajectory_csv(out / "trajectory.csv", traj, exclude=exclude)
    ratio = np.linalg.norm(traj.states[-1]) / np.linalg.norm(eps0)
    print(f"{len(signal.segments)} segments over {horizon:g} s; "
          f"||e(T)|| / ||e(0)|| = {ratio:.3e}")
    return EXIT_OK


def _pad(trace, length):
    trace = list(trace)[:length]
    return trace + [trace[-1]] * (length - len(trace))


def cmd_compare(cfg: NetworkConfig, out: Path) -> int:
    """Greedy on ``f``, greedy on ``f_max`` and random growth, one row per
    leader count starting at ``|S_0|``."""
    model = cfg.model()
    s0 = sorted(initial_leader_set(model.topologies))
    order, g_trace = greedy(MetricF(model), s0, k=cfg.k)
    gains = cfg.option("trial_gains") or [1.0] * model.m
    fm = fmax_greedy(model, cfg.k, gains)
    rnd = random_select(model, cfg.k, cfg.option("trials"),
                        _seed_int(cfg.seed, STREAM_RANDOM_SELECT))
    length = max(1, min(cfg.k, model.N) - len(s0) + 1)
    rows = zip(range(len(s0), len(s0) + length), _pad(g_trace, length),
               _pad(fm.f_trace, length), _pad(rnd, length))
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_leaders", "greedy_f", "fmax_greedy_f", "random_mean_f"])
        for n, a, b, c in rows:
            w.writerow([n, f"{a:.10g}", f"{b:.10g}", f"{c:.10g}"])
    print(f"greedy leaders {order}; f_max greedy leaders {fm.leaders}")
    return EXIT_OK


def sweep_model(model: SwitchedModel, increment: float, eps: float) -> SwitchedModel:
    """Extend every ``tau_max`` by ``increment`` and rescale growth rates so
    that ``log mu + eta tau_max = -eps`` (decaying rates untouched)."""
    tddt = TddtSpec(model.tddt.tau_min, [t + increment for t in model.tddt.tau_max])
    eta = []
    for mu, e, t in zip(model.params.mu, model.params.eta, tddt.tau_max):
        eta.append((-math.log(mu) - eps) / t if e > 0 and mu < 1 else e)
    return model.with_tddt(tddt).with_params(model.params.with_eta(eta))


def cmd_sweep_dwell(cfg: NetworkConfig, out: Path) -> int:
    model = cfg.model()
    rows, archive = [], []
    prev = 0
    for inc in cfg.option("increments"):
        m = sweep_model(model, float(inc), cfg.option("sweep_epsilon"))
        rep = leaders_needed(m, cfg.k)
        if len(rep.leaders) < prev:
            log.warning("leader count dropped at increment %.3g (%d < %d)",
                        inc, len(rep.leaders), prev)
        prev = len(rep.leaders)
        rows.append((inc, len(rep.leaders), rep.status, " ".join(map(str, rep.leaders)),
                     " ".join(f"{e:.6g}" for e in m.params.eta)))
        archive.append({"increment": inc, "report": rep.to_json()})
        print(f"increment {inc:.2f}: |S| = {len(rep.leaders)} ({rep.status})")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["increment", "n_leaders", "status", "leaders", "eta"])
        w.writerows(rows)
    _write_json(out / "sweep_reports.json", {"runs": archive})
    return EXIT_OK


def stable_mode_model(model: SwitchedModel, count: int, stable_eta=None,
                      stable_mu: float = 2.0) -> SwitchedModel:
    """Route the first ``count`` topologies through the decaying-mode
    conditions: negative rate and jump factor above one."""
    eta, mu = list(model.params.eta), list(model.params.mu)
    for p in range(count):
        eta[p] = -abs(eta[p]) if stable_eta is None else -abs(stable_eta[p])
        mu[p] = stable_mu
    return model.with_params(replace(model.params, eta=tuple(eta), mu=tuple(mu)))


def cmd_modes_table(cfg: NetworkConfig, out: Path) -> int:
    model = cfg.model()
    rows = []
    for count in range(model.m + 1):
        m = stable_mode_model(model, count, cfg.option("stable_eta"), cfg.option("stable_mu"))
        rep = leaders_needed(m, cfg.k)
        cert = rep.certificate
        wins = [] if cert is None else cert.tau_windows
        rows.append([count, len(rep.leaders), " ".join(map(str, rep.leaders)), rep.status]
                    + [f"[{lo:.4g}, {hi:.4g}]" for lo, hi in wins])
        print(f"{count} stable modes: S = {rep.leaders} ({rep.status})")
    with open(out / "modes_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stable_modes", "n_leaders", "leaders", "status"]
                   + [f"tau_window_{p + 1}" for p in range(model.m)])
        w.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="leadersel",
                                 description="Leader selection for switched multi-agent networks")
    ap.add_argument("command", choices=["select", "simulate", "compare", "sweep-dwell",
                                        "modes-table"])
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=Path("."))
    ap.add_argument("--algorithm", type=int, choices=[1, 2], default=1)
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--report", type=Path, default=None,
                    help="report.json from a previous select run (simulate only)")
    ap.add_argument("--followers-only", action="store_true",
                    help="drop leader columns from trajectory.csv")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "select":
            return cmd_select(cfg, args.out, args.algorithm)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.report, args.followers_only)
        if args.command == "compare":
            return cmd_compare(cfg, args.out)
        if args.command == "sweep-dwell":
            return cmd_sweep_dwell(cfg, args.out)
        return cmd_modes_table(cfg, args.out)
    except DegenerateInstanceError as exc:
        print(f"error: {exc}. The selection scheme only makes sense when some shifted "
              "mode is unstable; that condition captures the rationality of the "
              "selection scheme.", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except LeaderSelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
