import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leadersel.certify import (
    LMI_TOL,
    PFamily,
    beta_verification_loop,
    check_discretized_lmis,
    classify_modes,
    endpoint_family,
    full_certificate,
    geometric_family,
    log_norm,
    lyapunov_solve,
    min_mean_cycle,
    mu_feasibility,
    px_upper_bound,
    synthesize_gain,
    tddt_window,
)
from leadersel.errors import ConstructionError, SpectralClashError, SynthesisError
from leadersel.graph import Digraph
from leadersel.instances import random_certifiable_model
from leadersel.sysmodel import SwitchedModel, TddtSpec, TheoremParams, mode_matrix, shift_1


def _scalar_model(a, eta=2.0, tau=1.0, l=1):
    return SwitchedModel(np.array([[a]]), [Digraph(1)], TddtSpec([tau], [tau]),
                         TheoremParams([l], [0.5], [eta]))


def _random_pd(r, d):
    X = r.normal(size=(d, d))
    return X @ X.T + 0.1 * np.eye(d)


@pytest.fixture(scope="module")
def ref_cert(ref_model):
    return full_certificate(ref_model, {1, 5, 6})


def test_lyapunov_residual(rng):
    X = rng.normal(size=(6, 6))
    M = X - (np.max(np.linalg.eigvals(X).real) + 1.0) * np.eye(6)
    Q = _random_pd(rng, 6)
    P = lyapunov_solve(M, Q)
    res = M.T @ P + P @ M + Q
    assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(Q)


def test_lyapunov_linearity(rng):
    M = -_random_pd(rng, 4) + 0.3 * rng.normal(size=(4, 4))
    np.testing.assert_allclose(lyapunov_solve(M, 3.5 * np.eye(4)),
                               3.5 * lyapunov_solve(M, np.eye(4)), rtol=1e-10)


def test_lyapunov_clash():
    with pytest.raises(SpectralClashError):
        lyapunov_solve(np.diag([1.0, -1.0]), np.eye(2))


def test_scalar_gain_closed_form():
    a, target = 1.0, 1e-6
    M = _scalar_model(a)
    shift = 0.5 * (1.0 - 2.0)
    g = synthesize_gain(M, {1}, 0, target)
    assert g.structured
    assert g.kappa == pytest.approx(a + shift + target, abs=1e-6)
    assert g.abscissa < -target


def test_gain_needs_controllability(ref_model):
    with pytest.raises(SynthesisError):
        synthesize_gain(ref_model, {1, 6}, 0)


def test_best_effort_gain_does_not_raise(ref_model):
    g = synthesize_gain(ref_model, {1, 6}, 0, best_effort=True)
    assert g.structured and g.kappa is not None


@pytest.mark.parametrize("computed,setting,accepted,final,rerun", [
    (0.45, 0.5, True, 0.4, True),
    (0.55, 0.5, True, 0.5, False),
    (0.9, 1.0, True, 1.0, False),
    (0.05, 0.5, False, 0.1, False),
])
def test_beta_loop(computed, setting, accepted, final, rerun):
    d = beta_verification_loop(computed, setting)
    assert (d.accepted, d.rerun) == (accepted, rerun)
    assert d.setting == pytest.approx(final)


def test_px_bound(rng):
    X = rng.normal(size=(4, 4))
    A1 = -(X @ X.T) - np.eye(4) + 0.2 * (X - X.T)
    P = lyapunov_solve(A1, 2.0 * np.eye(4))
    assert np.linalg.eigvalsh(P)[-1] <= px_upper_bound(A1, 2.0) * (1 + 1e-9)
    assert px_upper_bound(np.eye(2), 1.0) == math.inf


def test_endpoint_family_shape_and_bound(rng):
    X = rng.normal(size=(3, 3))
    Ap = -(X @ X.T) - 5 * np.eye(3)
    params = TheoremParams([2], [0.5], [3.0])
    tddt = TddtSpec([1.0], [1.2])
    fam = endpoint_family(Ap, 0, params, tddt, check=False)
    assert len(fam.matrices) == 3
    np.testing.assert_allclose(fam.matrices[1], 0.5 * (fam.first + fam.last))
    assert np.linalg.eigvalsh(fam.first)[-1] <= fam.meta["px_bound"] * (1 + 1e-9)


def test_geometric_family_exact_identity(rng):
    X = rng.normal(size=(4, 4))
    Ap = X - (np.max(np.linalg.eigvals(X).real) + 0.5) * np.eye(4)
    params = TheoremParams([3], [0.5], [4.0])
    tddt = TddtSpec([1.0], [1.1])
    rate = 0.7
    fam = geometric_family(Ap, 0, params, tddt, rate)
    g = 1 + rate * 1.0 / 3
    for i, P in enumerate(fam.matrices):
        np.testing.assert_allclose(P, g ** i * fam.first, rtol=1e-12)
    margins = check_discretized_lmis(Ap, 0, params, tddt, fam)
    for vals in margins.values():
        assert max(vals) < 0


def test_geometric_family_rejects_unstable_shift():
    Ap = np.diag([1.0, -1.0])
    with pytest.raises(ConstructionError):
        geometric_family(Ap, 0, TheoremParams([1], [0.5], [0.5]), TddtSpec([1.0], [1.0]), 0.0)


def test_log_norm_identity_inner_product(rng):
    M = rng.normal(size=(4, 4))
    assert log_norm(M) == pytest.approx(log_norm(M, np.eye(4)))
    assert log_norm(M) == pytest.approx(np.linalg.eigvalsh(M + M.T)[-1] / 2)


def test_mu_pairs_match_bisection(rng):
    fams = [PFamily((_random_pd(rng, 3), _random_pd(rng, 3)), "test") for _ in range(2)]
    pairs, req = mu_feasibility(fams)
    for q, p in [(0, 1), (1, 0)]:
        lo, hi = 0.0, 1e6
        while hi - lo > 1e-8:
            mid = 0.5 * (lo + hi)
            if np.linalg.eigvalsh(mid * fams[p].last - fams[q].first)[0] >= 0:
                hi = mid
            else:
                lo = mid
        assert pairs[q][p] == pytest.approx(hi, rel=1e-6)
    assert req == [pairs[0][1], pairs[1][0]]


def test_tddt_window_published_parameters():
    params = TheoremParams([3], [0.03], [2.0])
    (lo, hi), = tddt_window(params, [None], TddtSpec([1.6], [1.74]))
    assert hi == pytest.approx(-math.log(0.03) / 2.0, abs=1e-8)
    assert hi == pytest.approx(1.7533, abs=1e-4)
    assert lo <= 1.60 and 1.74 <= hi


def test_tddt_window_decaying():
    (lo, hi), = tddt_window(TheoremParams([1], [2.0], [-1.0]), [None], TddtSpec([0.2], [0.3]))
    assert lo == pytest.approx(math.log(2.0), abs=1e-8) and hi == math.inf


def _brute_min_mean(W):
    m = W.shape[0]
    best = math.inf
    for r in range(2, m + 1):
        for cyc in itertools.permutations(range(m), r):
            s = sum(W[cyc[i], cyc[(i + 1) % r]] for i in range(r))
            best = min(best, s / r)
    return best


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 4))
def test_min_mean_cycle_brute_force(seed, m):
    W = np.random.default_rng(seed).normal(size=(m, m))
    assert min_mean_cycle(W) == pytest.approx(_brute_min_mean(W), abs=1e-12)


def test_reference_certificate_passes(ref_cert, ref_model):
    assert ref_cert.passed, ref_cert.render_text()
    assert len(ref_cert.gains) == ref_model.m
    for lo, hi in ref_cert.tau_windows:
        assert lo <= hi
    text = ref_cert.render_text()
    assert "PASS" in text and "(16)" in text


def test_reference_certificate_lmis_recomputed(ref_cert, ref_model):
    M = ref_model.with_leaders(ref_cert.leaders).with_gains(ref_cert.gains)
    for p, fam in enumerate(ref_cert.families):
        stable = ref_cert.modes[p].route == "decaying"
        Ap = mode_matrix(M, p)
        for vals in check_discretized_lmis(Ap, p, M.params, M.tddt, fam, stable).values():
            assert max(vals) <= -LMI_TOL


def test_scaled_family_leaves_unit_box(ref_cert):
    hi = ref_cert.families[0].eig_range()[1]
    bad = ref_cert.families[0].scaled(1.5 / hi)
    assert bad.eig_range()[1] > 1


def test_margin_implication(ref_cert):
    # (7) holding implies (6) up to the phi slack
    for r in ref_cert.modes:
        if r.route == "growing" and r.margin_7 < 0:
            assert r.margin_6 < r.margin_7


def test_certificate_json_roundtrip(ref_cert):
    import json
    js = json.loads(json.dumps(ref_cert.to_json(), allow_nan=False))
    assert js["verdict"] == "pass"
    assert len(js["modes"]) == 3


def test_classify_modes_matches_eigenvalues(ref_cert, ref_model):
    cls = classify_modes(ref_model.with_leaders(ref_cert.leaders), ref_cert.gains)
    M = ref_model.with_leaders(ref_cert.leaders).with_gains(ref_cert.gains)
    for p, c in enumerate(cls):
        assert (c == "stable") == (np.max(np.linalg.eigvals(mode_matrix(M, p)).real) < 0)


def test_uncontrollable_set_fails(ref_model):
    cert = full_certificate(ref_model, {1, 6})
    assert not cert.passed and cert.failed_condition == "synthesis"


def test_random_certifiable_passes():
    M = random_certifiable_model(3)
    cert = full_certificate(M, range(1, M.N + 1))
    assert cert.passed, cert.render_text()
