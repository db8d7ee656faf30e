import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfmimo.errors import ConfigurationError, InfeasiblePlanError
from cfmimo.harness.config import ScenarioConfig
from cfmimo.pipeline import DropContext
from cfmimo.sleep_controller import (
    EvalResult,
    RateConstraint,
    cellular_associate,
    dcf_associate,
    exhaustive_search,
    greedy_switch_off,
    kmeans_removal,
    random_switch_off,
    rate_greedy_switch_off,
)


def random_beta(rng, M, K):
    return 10 ** rng.uniform(-14, -8, (M, K))


class TableEvaluator:
    """EE and rates looked up from a random table keyed by the active set."""

    def __init__(self, n_trp, K, seed, infeasible=()):
        self.rng = np.random.default_rng(seed)
        self.table = {}
        self.K = K
        self.infeasible = {frozenset(s) for s in infeasible}

    def __call__(self, C):
        key = frozenset(C.active_trps.tolist())
        if key not in self.table:
            ee = float(self.rng.uniform(1, 10))
            rate = 0.0 if key in self.infeasible else 200e6
            self.table[key] = EvalResult(ee=ee, sum_rate=self.K * rate, p_total=1.0,
                                         rates_bps=np.full(self.K, rate))
        return self.table[key]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 30), st.integers(1, 12), st.integers(0, 10**6))
def test_dcf_constraints(M, K, k_trp, seed):
    rng = np.random.default_rng(seed)
    beta = random_beta(rng, M, K)
    if M * k_trp < K:
        with pytest.raises(InfeasiblePlanError):
            dcf_associate(beta, np.arange(M), k_trp)
        return
    C = dcf_associate(beta, np.arange(M), k_trp)
    assert np.all(C.served_counts() <= k_trp)
    assert np.all(C.serving_counts() >= 1)
    # without orphans the plain top-k choice stands
    top = np.zeros((M, K), dtype=np.int8)
    for m in range(M):
        top[m, np.argsort(-beta[m])[:min(k_trp, K)]] = 1
    if np.all(top.sum(axis=0) >= 1):
        np.testing.assert_array_equal(C.C, top)


def test_dcf_orphan_goes_to_strongest():
    # UE 2 is nobody's top pick but TRP 1 is its best one
    beta = np.array([[9.0, 8.0, 1.0], [7.0, 6.0, 5.0]])
    C = dcf_associate(beta, np.arange(2), 2)
    np.testing.assert_array_equal(C.C, [[1, 1, 0], [1, 0, 1]])


def test_dcf_subset_rows_follow_active_order():
    beta = random_beta(np.random.default_rng(1), 5, 6)
    C = dcf_associate(beta, [3, 1], 4)
    np.testing.assert_array_equal(C.active_trps, [3, 1])
    ref = dcf_associate(beta[[3, 1]], np.arange(2), 4)
    np.testing.assert_array_equal(C.C, ref.C)


def test_cellular_single_strongest():
    beta = random_beta(np.random.default_rng(2), 6, 20)
    C = cellular_associate(beta, [0, 2, 4])
    assert np.all(C.serving_counts() == 1)
    np.testing.assert_array_equal(np.argmax(C.C, axis=0), np.argmax(beta[[0, 2, 4]], axis=0))


def test_kmeans_removes_idle_trp():
    rng = np.random.default_rng(3)
    beta = np.full((3, 12), 1e-14)
    beta[0, :6] = 1e-8 * rng.uniform(0.5, 1, 6)
    beta[1, 6:] = 1e-8 * rng.uniform(0.5, 1, 6)
    beta[2] *= rng.uniform(0.5, 1, 12)
    assert kmeans_removal(beta, np.arange(3), seed=0) == 2


def test_kmeans_few_ues_fallback():
    beta = np.array([[3.0, 1.0], [0.5, 0.2], [2.0, 1.5]])
    assert kmeans_removal(beta, np.arange(3), seed=0) == 1
    assert kmeans_removal(beta, np.array([0, 2]), seed=0) == 2
    with pytest.raises(ConfigurationError):
        kmeans_removal(beta, np.array([0]), seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_kmeans_deterministic_and_active(M, seed):
    rng = np.random.default_rng(seed)
    beta = random_beta(rng, 10, 25)
    active = np.sort(rng.choice(10, M, replace=False))
    a = kmeans_removal(beta, active, seed=5)
    assert a in active and a == kmeans_removal(beta, active, seed=5)


POLICIES = ("greedy", "random", "rate_greedy")


def run_policy(name, beta, k_trp, ev, **kw):
    cons = RateConstraint(threshold=100e6)
    if name == "greedy":
        return greedy_switch_off(beta, cons, k_trp, ev, np.random.default_rng(0), **kw)
    if name == "random":
        return random_switch_off(beta, cons, k_trp, ev, np.random.default_rng(0), **kw)
    return rate_greedy_switch_off(beta, cons, k_trp, ev, **kw)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(POLICIES), st.integers(2, 7), st.integers(3, 12), st.integers(0, 10**6),
       st.booleans())
def test_loop_invariants(policy, M, K, seed, stop):
    rng = np.random.default_rng(seed)
    beta = random_beta(rng, M, K)
    k_trp = int(rng.integers(int(np.ceil(K / M)), K + 1))
    ev = TableEvaluator(M, K, seed)
    tr = run_policy(policy, beta, k_trp, ev, stop_on_decrease=stop)
    Ms = [s.M for s in tr.steps]
    assert Ms == list(range(M, M - len(Ms), -1))
    assert all(s.M * k_trp >= K for s in tr.steps)
    best = max(range(len(tr.steps)), key=lambda i: (tr.steps[i].ee, -i))
    assert tr.chosen_step == best
    assert tr.chosen.M == tr.steps[best].M
    for s in tr.steps:
        assert s.C.is_valid()
    if stop:
        ees = [s.ee for s in tr.steps]
        # only the last step may drop below its predecessor
        assert all(b >= a for a, b in zip(ees[:-2], ees[1:-1]))
    else:
        assert tr.steps[-1].M == max(1, int(np.ceil(K / k_trp)))


def test_rate_greedy_picks_best_removal():
    beta = random_beta(np.random.default_rng(4), 4, 6)
    ev = TableEvaluator(4, 6, 0)
    tr = run_policy("rate_greedy", beta, 6, ev, stop_on_decrease=False)
    s1 = tr.steps[1]
    alts = {m: ev(dcf_associate(beta, [x for x in range(4) if x != m], 6)).ee for m in range(4)}
    assert s1.removed == max(alts, key=alts.get)


def test_initial_infeasible_is_outage():
    beta = random_beta(np.random.default_rng(5), 3, 4)
    ev = TableEvaluator(3, 4, 0, infeasible=[range(3)])
    tr = run_policy("greedy", beta, 4, ev)
    assert tr.outage and len(tr.steps) == 1 and tr.chosen_step == 0


def test_infeasible_step_never_chosen():
    beta = random_beta(np.random.default_rng(6), 4, 4)
    subsets = [s for n in (1, 2, 3) for s in itertools.combinations(range(4), n)]
    ev = TableEvaluator(4, 4, 1, infeasible=subsets)
    tr = run_policy("random", beta, 4, ev, stop_on_infeasible=False, stop_on_decrease=False)
    assert len(tr.steps) == 4 and tr.chosen_step == 0
    tr = run_policy("random", beta, 4, ev, stop_on_decrease=False)
    assert len(tr.steps) == 2


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(POLICIES), st.integers(2, 5), st.integers(2, 8), st.integers(0, 10**6))
def test_exhaustive_dominates(policy, M, K, seed):
    rng = np.random.default_rng(seed)
    beta = random_beta(rng, M, K)
    ev = TableEvaluator(M, K, seed)
    best = exhaustive_search(beta, RateConstraint(threshold=100e6), K, ev)
    # brute force over the same table
    ref = max(ev(dcf_associate(beta, list(s), K)).ee
              for n in range(1, M + 1) for s in itertools.combinations(range(M), n))
    assert best[1].ee == ref
    tr = run_policy(policy, beta, K, ev, stop_on_decrease=False)
    assert tr.chosen_ee <= best[1].ee


def test_exhaustive_none_when_all_infeasible():
    beta = random_beta(np.random.default_rng(7), 2, 2)
    ev = TableEvaluator(2, 2, 0, infeasible=[(0,), (1,), (0, 1)])
    assert exhaustive_search(beta, RateConstraint(), 2, ev) is None


def test_rate_constraint():
    r = np.array([1.0, 2.0, 3.0, 10.0])
    assert RateConstraint("mean", 4.0).satisfied(r)
    assert not RateConstraint("min", 1.5).satisfied(r)
    assert RateConstraint("percentile", 1.2, 10.0).value(r) == pytest.approx(1.3)
    with pytest.raises(ConfigurationError):
        RateConstraint("median")


def test_trace_csv_on_real_drop():
    cfg = ScenarioConfig(L=1, S=3, K=6, n_trp_h=2, n_trp_v=1, n_blocks=4, n_blocks_search=4,
                         drops=1, rate_threshold=1e6)
    ctx = DropContext(cfg, 0)
    tr = greedy_switch_off(ctx.ls, cfg.constraint(), cfg.k_trp_eff, ctx.evaluator(),
                           ctx.rngs["policy"], associate=ctx.associate, stop_on_decrease=False)
    lines = tr.to_csv().strip().split("\n")
    assert lines[0] == "step,M,removed,ee,sum_rate,p_total,feasible"
    assert len(lines) == len(tr.steps) + 1 == 4
