import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfmimo.errors import InfeasiblePlanError
from cfmimo.pilots import PilotPlan, assign_pilots, make_pilot_book, random_pilots

from conftest import make_state


def test_book_unitary():
    np.testing.assert_allclose(make_pilot_book(1), [[1.0]])
    B = make_pilot_book(20)
    np.testing.assert_allclose(np.conj(B.T) @ B, np.eye(20), atol=1e-12)


def test_orthogonal_when_enough_pilots():
    beta = np.random.default_rng(0).uniform(size=(21, 10))
    plan = assign_pilots(beta, 20, [1] * 10)
    cols = [c[0] for c in plan.columns]
    assert len(set(cols)) == 10
    for k in range(10):
        assert plan.co_pilot_users(k) == [k]


def test_reuse_ratio():
    beta = np.random.default_rng(1).uniform(size=(21, 84))
    plan = assign_pilots(beta, 20, [1] * 84)
    assert plan.users_per_column().sum() == 84
    assert plan.users_per_column().mean() == pytest.approx(4.2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 12), st.integers(1, 3), st.integers(0, 10**6))
def test_per_ue_orthonormal(K, tau_p, n_max, seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, min(n_max, tau_p) + 1, size=K)
    plan = assign_pilots(rng.uniform(size=(5, K)), tau_p, counts)
    book = make_pilot_book(tau_p)
    assert plan.n_str == counts.sum()
    for k in range(K):
        assert len(set(plan.columns[k])) == counts[k]
        phi = plan.phi(k, book)
        np.testing.assert_allclose(np.conj(phi.T) @ phi, np.eye(counts[k]), atol=1e-12)


def test_groups_disjoint_and_respected():
    rng = np.random.default_rng(3)
    beta = rng.uniform(size=(21, 30))
    groups = [list(range(0, 8)), list(range(8, 20))]
    ue_group = np.array([0] * 12 + [1] * 18)
    counts = np.array([1] * 12 + [2] * 18)
    plan = assign_pilots(beta, 20, counts, groups, ue_group)
    for k in range(30):
        assert set(plan.columns[k]) <= set(groups[ue_group[k]])
    with pytest.raises(InfeasiblePlanError):
        assign_pilots(beta, 20, [3] * 30, [[0, 1], list(range(2, 20))], [0] * 30)
    with pytest.raises(InfeasiblePlanError):
        assign_pilots(beta, 20, [1] * 30, [[0, 1], [1, 2]], [0] * 30)


def test_too_many_streams():
    with pytest.raises(InfeasiblePlanError):
        assign_pilots(np.ones((2, 2)), 2, [3, 1])


def test_deterministic_and_json():
    beta = np.random.default_rng(4).uniform(size=(21, 50))
    a = assign_pilots(beta, 20, [1] * 50)
    b = assign_pilots(beta, 20, [1] * 50)
    assert a == b
    assert PilotPlan.from_json(a.to_json()) == a


def worst_copilot_gain(ls, plan):
    cross = ls.beta.T @ ls.beta
    out = 0.0
    for k in range(plan.K):
        others = [kp for kp in plan.co_pilot_users(k) if kp != k]
        if others:
            out = max(out, max(cross[k, kp] for kp in others) / cross[k, k])
    return out


def test_fingerprint_beats_random():
    # mean over drops of the worst normalized cross-gain between co-pilot UEs
    greedy, rand = [], []
    for d in range(100):
        ls = make_state(K=42, L=7, n_h=1, seed=d)
        greedy.append(worst_copilot_gain(ls, assign_pilots(ls.beta, 20, [1] * 42)))
        rp = random_pilots(42, 20, [1] * 42, np.random.default_rng(1000 + d))
        rand.append(worst_copilot_gain(ls, rp))
    assert np.mean(greedy) < np.mean(rand)
