import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfmimo.errors import ConfigurationError
from cfmimo.pilots import assign_pilots
from cfmimo.precoding import ConnectivityMatrix, cp_mmse, fractional_dl_power
from cfmimo.sleep_controller import cellular_associate, dcf_associate

from conftest import estimates_for, make_state

NOISE = 3.16e-12


def dense_precoder(est, C, alloc, noise_var, k):
    """Full-dimensional masked partial MMSE for UE k, before normalization."""
    g = est.g_hat
    B, M, K, N, _ = g.shape
    counts = est.stats.stream_counts
    mask = np.repeat(C.C[:, k], N).astype(float)
    D = np.diag(mask)
    partial = [i for i in range(K) if np.any(C.C[:, i] & C.C[:, k])]
    out = []
    for b in range(B):
        omega = noise_var * np.eye(M * N, dtype=complex)
        for i in partial:
            for n in range(counts[i]):
                v = g[b, :, i, :, n].reshape(-1)
                Ain = np.zeros((M * N, M * N), dtype=complex)
                for m in range(M):
                    Ain[m * N:(m + 1) * N, m * N:(m + 1) * N] = \
                        est.stats.A[i][m][n * N:(n + 1) * N, n * N:(n + 1) * N]
                omega += alloc.p_ul[i] / counts[i] * D @ (np.outer(v, np.conj(v)) + Ain) @ D
        rhs = np.stack([D @ g[b, :, k, :, n].reshape(-1) for n in range(counts[k])], -1)
        out.append(alloc.p_ul[k] / counts[k] * np.linalg.solve(omega, rhs))
    w = np.array(out)
    norm2 = (np.abs(w) ** 2).sum(axis=1).mean(axis=0)
    return w * np.sqrt(alloc.p_dl[k] / counts[k] / norm2)


@pytest.fixture(scope="module")
def setup():
    ls = make_state(K=6, L=1, n_h=2, n_v=2, n_ue=2, seed=11)
    plan = assign_pilots(ls.beta, 4, [1, 2, 1, 1, 2, 1])
    G, est = estimates_for(ls, plan, 200, seed=1)
    C = dcf_associate(ls, np.arange(3), 3)
    alloc = fractional_dl_power(ls, C)
    return ls, plan, est, C, alloc


def test_single_link_full_power():
    ls = make_state(K=1, L=1, S=1, seed=2)
    C = ConnectivityMatrix(np.ones((1, 1)), np.array([0]), 1)
    assert fractional_dl_power(ls, C, p_trp=240.0).p_dl[0] == pytest.approx(240.0)


def test_zero_exponent_splits_evenly():
    ls = make_state(K=6, seed=3)
    C = ConnectivityMatrix(np.array([[1, 1, 1, 0, 0, 0], [0, 0, 1, 1, 0, 0], [0, 0, 0, 0, 1, 1]]),
                           np.arange(3), 3)
    p = fractional_dl_power(ls, C, upsilon=0.0, p_trp=240.0).p_dl
    np.testing.assert_allclose(p, [80, 80, 80, 120, 120, 120])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(-1, 1), st.integers(1, 6))
def test_per_trp_budget_and_homogeneity(seed, ups, k_trp):
    rng = np.random.default_rng(seed)
    beta = 10 ** rng.uniform(-14, -8, size=(3, 6))
    ls = make_state(K=6, seed=seed % 50)
    ls.beta = beta
    C = dcf_associate(beta, np.arange(3), max(k_trp, 2))
    a = fractional_dl_power(ls, C, ups, 240.0)
    assert np.all(a.p_dl > 0)
    load = C.C @ a.p_dl
    assert np.all(load <= 240.0 * (1 + 1e-12))
    ls.beta = 1e3 * beta
    b = fractional_dl_power(ls, C, ups, 240.0)
    np.testing.assert_allclose(a.p_dl, b.p_dl, rtol=1e-9)
    assert np.all(a.p_ul <= 0.2 * (1 + 1e-12))


def test_orphan_rejected(small_state):
    C = ConnectivityMatrix(np.zeros((3, small_state.K)), np.arange(3), 6)
    with pytest.raises(ConfigurationError):
        fractional_dl_power(small_state, C)


def test_matches_dense_oracle(setup):
    ls, plan, est, C, alloc = setup
    W = cp_mmse(est, C, alloc, NOISE)
    for k in range(ls.K):
        ref = dense_precoder(est, C, alloc, NOISE, k)
        got = W.W[:, :, W.columns(k)]
        assert np.abs(got - ref).max() <= 1e-8 * np.abs(ref).max()


def test_masking_zero_rows(setup):
    ls, plan, est, _, alloc = setup
    C = ConnectivityMatrix(np.array([[1, 1, 0, 0, 1, 0], [0, 1, 1, 0, 0, 1], [1, 0, 0, 1, 0, 0]]),
                           np.arange(3), 4)
    W = cp_mmse(est, C, fractional_dl_power(ls, C), NOISE)
    N = ls.n_ant
    for k in range(ls.K):
        for m in np.flatnonzero(C.C[:, k] == 0):
            assert np.all(W.W[:, m * N:(m + 1) * N, W.columns(k)] == 0)


def test_normalization_and_trp_power(setup):
    ls, plan, est, C, alloc = setup
    W = cp_mmse(est, C, alloc, NOISE)
    target = np.repeat(alloc.p_dl / plan.stream_counts, plan.stream_counts)
    np.testing.assert_allclose(W.stream_power(), target, rtol=1e-9)
    assert np.all(W.per_trp_power() <= 1.03 * 240.0)


def test_noise_limit_is_matched_filter(setup):
    ls, plan, est, C, alloc = setup
    W = cp_mmse(est, C, alloc, 1e6)
    N = ls.n_ant
    for k in range(ls.K):
        rows = np.repeat(C.C[:, k], N).astype(bool)
        g = est.g_hat[:, :, k, :, 0].reshape(est.g_hat.shape[0], -1)[:, rows]
        w = W.W[:, rows, W.columns(k)][:, :, 0]
        cos = np.abs(np.sum(np.conj(g) * w, axis=1)) / (np.linalg.norm(g, axis=1) * np.linalg.norm(w, axis=1))
        assert cos.min() > 1 - 1e-6


def test_cellular_ignores_other_cells(setup):
    ls, plan, est, _, _ = setup
    C = cellular_associate(ls)
    alloc = fractional_dl_power(ls, C)
    W = cp_mmse(est, C, alloc, NOISE)
    cell = np.argmax(C.C, axis=0)
    for k in range(ls.K):
        other = cell != cell[k]
        est2 = copy.deepcopy(est)
        est2.g_hat[:, :, other] *= 3.0
        est2.stats.abar[:, other] *= 5.0
        W2 = cp_mmse(est2, C, alloc, NOISE)
        np.testing.assert_array_equal(W2.W[:, :, W.columns(k)], W.W[:, :, W.columns(k)])
