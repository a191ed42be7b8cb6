import csv

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leadersel.certify import full_certificate
from leadersel.errors import DimensionError, GenerationError, ScalingError
from leadersel.simulate import (
    SwitchingSignal,
    error_norms,
    expm,
    gen_signal,
    propagate,
    random_initial_state,
    write_trajectory_csv,
)
from leadersel.sysmodel import mode_matrix


def mp_series_expm(M, t, terms=60):
    mpmath.mp.dps = 40
    A = mpmath.matrix(M.tolist()) * t
    out = mpmath.eye(A.rows)
    term = mpmath.eye(A.rows)
    for k in range(1, terms):
        term = term * A / k
        out += term
    return np.array(out.tolist(), dtype=float)


@pytest.fixture(scope="module")
def certified(ref_model):
    cert = full_certificate(ref_model, {1, 5, 6})
    assert cert.passed
    return ref_model.with_leaders(cert.leaders).with_gains(cert.gains), cert


def test_expm_matches_series(rng):
    M = rng.normal(size=(6, 6))
    np.testing.assert_allclose(expm(M, 0.7), mp_series_expm(M, 0.7), atol=1e-10, rtol=1e-10)


def test_expm_guards():
    with pytest.raises(ScalingError):
        expm(np.eye(2) * 10.0, 100.0)
    with pytest.raises(DimensionError):
        expm(np.ones((2, 3)))


def test_signal_durations_in_windows():
    windows = [(1.0, 1.2), (0.5, 0.6), (0.5, 0.6)]
    sig = gen_signal(windows, 8000.0, seed=1)
    assert len(sig.segments) >= 10 ** 4
    assert sig.admissible(windows)
    assert all(a[0] != b[0] for a, b in zip(sig.segments, sig.segments[1:]))
    assert sig.total_horizon >= 8000.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["aperiodic", "cyclic"]))
def test_signal_properties(seed, law):
    r = np.random.default_rng(seed)
    lo = r.uniform(0.1, 1.0, size=3)
    windows = list(zip(lo, lo * r.uniform(1.0, 2.0, size=3)))
    sig = gen_signal(windows, 10.0, seed, law)
    assert sig.admissible(windows)
    assert sig.total_horizon >= 10.0
    assert sig.mode_at(0.0) == sig.segments[0][0]


def test_signal_single_topology_and_errors():
    sig = gen_signal([(1.0, 2.0)], 5.0)
    assert sig.segments == ((0, 5.0),)
    with pytest.raises(GenerationError):
        gen_signal([(1.0, float("inf"))], 5.0)
    with pytest.raises(GenerationError):
        gen_signal([(2.0, 1.0)], 5.0)
    with pytest.raises(ValueError):
        SwitchingSignal(((0, 1.0), (0, 1.0)), 2.0)


def test_seeded_signals_reproducible():
    w = [(1.0, 1.2), (0.5, 0.6)]
    assert gen_signal(w, 20, 5) == gen_signal(w, 20, 5)


def test_propagation_exact_per_segment(certified):
    model, _ = certified
    sig = SwitchingSignal(((0, 1.1), (1, 0.55)), 1.65)
    x0 = random_initial_state(model.dim, 0)
    traj = propagate(model, sig, x0, sample_dt=0.1)
    want = expm(mode_matrix(model, 1), 0.55) @ expm(mode_matrix(model, 0), 1.1) @ x0
    np.testing.assert_allclose(traj.states[-1], want, rtol=1e-9, atol=1e-9)
    assert 1.1 in np.round(traj.times, 12)


def test_norms_pythagoras(certified):
    model, cert = certified
    sig = gen_signal([w for w in cert.requested_windows], 5.0, 2)
    traj = propagate(model, sig, random_initial_state(model.dim, 3), 0.05)
    np.testing.assert_allclose((error_norms(traj) ** 2).sum(axis=1), traj.norm() ** 2,
                               rtol=1e-12)


def test_contraction_on_reference(certified):
    model, cert = certified
    for seed in range(5):
        sig = gen_signal(cert.requested_windows, 30.0, seed)
        x0 = random_initial_state(model.dim, 100 + seed)
        traj = propagate(model, sig, x0, 0.05, t_end=30.0)
        assert traj.times[-1] == pytest.approx(30.0)
        assert np.linalg.norm(traj.states[-1]) <= 1e-3 * np.linalg.norm(x0)


def test_initial_state_box():
    x = random_initial_state(1000, 0)
    assert np.all(np.abs(x) < 100)


def test_trajectory_csv(tmp_path, certified):
    model, cert = certified
    sig = gen_signal(cert.requested_windows, 2.0, 0)
    traj = propagate(model, sig, random_initial_state(model.dim, 0), 0.5)
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, traj, exclude=cert.leaders)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["time", "topology", "agent_2_norm", "agent_3_norm", "agent_4_norm"]
    assert len(rows) == len(traj.times) + 1


def test_propagate_dimension_check(certified):
    model, _ = certified
    with pytest.raises(DimensionError):
        propagate(model, gen_signal([(1, 1.2), (.5, .6), (.5, .6)], 2.0, 0), np.zeros(3))
