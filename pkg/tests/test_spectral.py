import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm

from leadersel.errors import CapabilityError, SingularityError
from leadersel.instances import PUBLISHED_A, random_model
from leadersel.spectral import (
    MetricF,
    SpanBasis,
    beta_of,
    c_bar,
    controllable_basis,
    ctrb,
    dist2,
    eig,
    exact_submodularity_ratio,
    metric_f,
    metric_fmax,
    rightmost_real,
    span_basis,
    sparse_lambda_min,
    unstable_subspaces,
)
from leadersel.sysmodel import input_matrix, shifted_open_loop


def test_published_matrix_eigenvalues():
    vals = sorted((p.value for p in eig(PUBLISHED_A)), key=lambda z: (z.real, z.imag))
    want = [-0.50, 0.30 - 0.10j, 0.30 + 0.10j]
    for v, w in zip(vals, want):
        assert abs(v - w) < 5e-3


def test_eig_sorted_and_residuals(rng):
    M = rng.normal(size=(8, 8))
    pairs = eig(M)
    re = [p.value.real for p in pairs]
    assert re == sorted(re, reverse=True)
    nrm = np.linalg.norm(M, 2)
    for p in pairs:
        assert np.linalg.norm(M @ p.vector - p.value * p.vector) <= 1e-8 * nrm
        assert np.linalg.norm(p.vector) == pytest.approx(1.0)


def test_ctrb_rank_equals_gramian_rank(rng):
    A = rng.normal(size=(6, 6)) * 0.5
    B = np.zeros((6, 2))
    B[0, 0] = B[3, 1] = 1.0
    A[np.ix_([4, 5], [0, 1, 2, 3])] = 0.0     # decouple the last two states
    W, _ = quad_vec(lambda t: expm(A * t) @ B @ B.T @ expm(A.T * t), 0.0, 1.0)
    rank_w = np.linalg.matrix_rank(W, tol=1e-10 * np.linalg.norm(W))
    assert span_basis(ctrb(A, B)).rank == rank_w == 4
    assert controllable_basis(A, B).rank == 4


def test_span_basis_constructed_rank(rng):
    M = rng.normal(size=(6, 3)) @ rng.normal(size=(3, 10))
    sb = span_basis(M)
    assert sb.rank == 3
    np.testing.assert_allclose(sb.basis.T @ sb.basis, np.eye(3), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(0, 5))
def test_dist2_pythagoras(seed, k):
    r = np.random.default_rng(seed)
    v = r.normal(size=6) + 1j * r.normal(size=6)
    v /= np.linalg.norm(v)
    Q = np.linalg.qr(r.normal(size=(6, 6)))[0][:, :k]
    got = dist2(v, SpanBasis(Q, k, 0.0))
    assert got == pytest.approx(1 - np.linalg.norm(Q.T @ v) ** 2, abs=1e-12)


def _rank_containment_ok(model, leaders):
    B = input_matrix(model.N, model.n, leaders)
    for p in range(model.m):
        Ahat = shifted_open_loop(model, p)
        C = ctrb(Ahat, B) if B.shape[1] else np.zeros((model.dim, 1))
        C = C / np.maximum(np.linalg.norm(C, axis=0), 1e-300)
        r = np.linalg.matrix_rank(C, tol=1e-8 * max(1, np.linalg.norm(C)))
        w, V = np.linalg.eig(Ahat)
        for lam, v in zip(w, V.T):
            if lam.real >= -1e-9:
                r2 = np.linalg.matrix_rank(np.column_stack([C, v]),
                                           tol=1e-8 * max(1, np.linalg.norm(C)))
                if r2 != r:
                    return False
    return True


@pytest.mark.parametrize("seed", range(6))
def test_metric_zero_iff_rank_containment(seed):
    M = random_model(seed, N=4, n=2, m=2)
    mf = MetricF(M)
    for r in range(5):
        for S in itertools.combinations(range(1, 5), r):
            assert (mf(S) <= 1e-8) == _rank_containment_ok(M, S)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_metric_nonincreasing_in_leaders(seed):
    M = random_model(seed, N=4, n=1, m=2)
    mf = MetricF(M)
    for S in itertools.combinations(range(1, 5), 2):
        for extra in set(range(1, 5)) - set(S):
            assert mf(set(S) | {extra}) <= mf(S) + 1e-10
    assert mf(range(1, 5)) == pytest.approx(0.0, abs=1e-10)
    assert mf(()) == pytest.approx(mf.unstable_count())


def test_metric_function_wrapper(ref_model):
    assert metric_f(ref_model, {1, 6}) == pytest.approx(MetricF(ref_model)({1, 6}))


def test_unstable_subspaces_repeated_eigenvalue():
    subs = unstable_subspaces(np.eye(3))
    assert len(subs) == 1 and subs[0].vectors.shape[1] == 3


def test_fmax_scalar_gains(ref_model):
    big = metric_fmax(ref_model, range(1, 7), [50.0] * 3)
    none = metric_fmax(ref_model, [], [1.0] * 3)
    assert big < 0 < none


def test_c_bar_psd_unit_diagonal(rng):
    M = random_model(rng, N=2, n=2, m=1)
    C, flagged = c_bar(M, 0)
    assert C.shape == (16, 16)
    assert np.linalg.eigvalsh(C)[0] >= -1e-10
    np.testing.assert_allclose(np.diag(C)[~flagged], 1.0)


def test_c_bar_capability_guard():
    M = random_model(0, N=21, n=2, m=1)
    with pytest.raises(CapabilityError):
        c_bar(M, 0)


def test_sparse_lambda_min_exhaustive(rng):
    X = rng.normal(size=(5, 8))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    C = X @ X.T
    want = min(np.linalg.eigvalsh(C[np.ix_(S, S)])[0]
               for S in itertools.combinations(range(5), 2))
    assert sparse_lambda_min(C, 2) == pytest.approx(want, abs=1e-12)
    assert sparse_lambda_min(C, 5) == pytest.approx(np.linalg.eigvalsh(C)[0])
    assert sparse_lambda_min(C, 3, max_subsets=5) is None


def test_coverage_is_submodular():
    sets = {1: {1, 2}, 2: {2, 3}, 3: {3, 4, 5}, 4: {1, 5}}

    def f(X):   # decrement g(X) = f({}) - f(X) is the coverage count
        return 5 - len(set().union(*(sets[i] for i in X)))

    assert exact_submodularity_ratio(f, sets, sets, 4) >= 1.0


def test_theorem2_bound_on_random_instance():
    M = random_model(3, N=4, n=1, m=2)
    mf = MetricF(M)
    U = [1]
    k = 2
    ratio = exact_submodularity_ratio(mf, range(1, 5), U, k)
    bound = min(np.linalg.eigvalsh(c_bar(M, p)[0])[0] for p in range(M.m))
    assert ratio is None or ratio >= bound - 1e-8


def test_beta_symmetric_is_one(rng):
    X = rng.normal(size=(4, 4))
    S = -(X @ X.T) - np.eye(4)
    assert beta_of(S) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_beta_range_when_symmetric_part_negative(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(5, 5))
    Sk = r.normal(size=(5, 5))
    M = -(X @ X.T) - 0.1 * np.eye(5) + (Sk - Sk.T)
    b = beta_of(M)
    assert 0 < b <= 1 + 1e-9


def test_beta_singular():
    with pytest.raises(SingularityError):
        beta_of(np.zeros((2, 2)))


def test_rightmost_real():
    assert rightmost_real(np.diag([-1.0, 2.0, 0.5])) == 2.0
