"""TRP association (DCF, cellular) and EE-driven TRP switch-off policies."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import io
import itertools
from typing import Callable, Protocol
import warnings

import numpy as np

from .errors import ConfigurationError, InfeasiblePlanError
from .precoding import ConnectivityMatrix

__all__ = [
    "RateConstraint",
    "EvalResult",
    "TraceStep",
    "SwitchOffTrace",
    "dcf_associate",
    "cellular_associate",
    "kmeans_removal",
    "greedy_switch_off",
    "random_switch_off",
    "rate_greedy_switch_off",
    "exhaustive_search",
]


@dataclass(frozen=True)
class RateConstraint:
    """``f({R_k}) >= threshold`` with rates in bit/s."""

    statistic: str = "mean"
    threshold: float = 100e6
    percentile: float = 10.0

    def __post_init__(self):
        if self.statistic not in ("mean", "min", "percentile"):
            raise ConfigurationError(f"unknown rate statistic {self.statistic!r}")
        if self.threshold < 0:
            raise ConfigurationError("rate threshold must be non-negative")

    def value(self, rates_bps: np.ndarray) -> float:
        r = np.asarray(rates_bps, dtype=float)
        if self.statistic == "mean":
            return float(r.mean())
        if self.statistic == "min":
            return float(r.min())
        return float(np.percentile(r, self.percentile))

    def satisfied(self, rates_bps: np.ndarray) -> bool:
        return self.value(rates_bps) >= self.threshold


@dataclass
class EvalResult:
    ee: float
    sum_rate: float  # bit/s
    p_total: float
    rates_bps: np.ndarray
    extra: dict = field(default_factory=dict)


class Evaluator(Protocol):
    def __call__(self, C: ConnectivityMatrix) -> EvalResult: ...


@dataclass
class TraceStep:
    step: int
    M: int
    removed: int | None
    ee: float
    sum_rate: float
    p_total: float
    feasible: bool
    active: tuple
    C: ConnectivityMatrix | None = None


@dataclass
class SwitchOffTrace:
    steps: list
    chosen: ConnectivityMatrix
    chosen_step: int
    outage: bool = False

    @property
    def chosen_ee(self) -> float:
        return self.steps[self.chosen_step].ee

    def ee_by_m(self) -> dict:
        return {s.M: s.ee for s in self.steps}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "M", "removed", "ee", "sum_rate", "p_total", "feasible"])
        for s in self.steps:
            w.writerow([s.step, s.M, "" if s.removed is None else s.removed,
                        repr(s.ee), repr(s.sum_rate), repr(s.p_total), int(s.feasible)])
        return buf.getvalue()


def _beta(ls_or_beta) -> np.ndarray:
    return np.asarray(getattr(ls_or_beta, "beta", ls_or_beta), dtype=float)


def dcf_associate(ls, active, k_trp: int) -> ConnectivityMatrix:
    """Top-``k_trp`` UEs per active TRP, then orphan repair.

    An orphan is adopted by its strongest TRP, which drops its weakest UE not
    itself adopted earlier. If every slot of that TRP is held by adopted UEs
    the next-strongest TRP is tried.
    """
    beta = _beta(ls)
    active = np.asarray(active, dtype=int)
    if active.size == 0:
        raise ConfigurationError("no active TRP")
    b = beta[active]
    M, K = b.shape
    if k_trp < 1 or M * k_trp < K:
        raise InfeasiblePlanError(f"{M} TRPs x {k_trp} slots cannot serve {K} UEs")
    C = np.zeros((M, K), dtype=np.int8)
    n = min(k_trp, K)
    for m in range(M):
        top = np.lexsort((np.arange(K), -b[m]))[:n]
        C[m, top] = 1
    pinned = np.zeros((M, K), dtype=bool)
    orphans = list(np.flatnonzero(C.sum(axis=0) == 0))
    while orphans:
        k = orphans.pop(0)
        for m in np.lexsort((np.arange(M), -b[:, k])):
            if C[m].sum() < k_trp:
                C[m, k] = 1
                pinned[m, k] = True
                break
            victims = np.flatnonzero((C[m] == 1) & ~pinned[m])
            if victims.size == 0:
                continue
            i = victims[np.argmin(b[m, victims])]
            C[m, i] = 0
            C[m, k] = 1
            pinned[m, k] = True
            if C[:, i].sum() == 0:
                orphans.append(int(i))
            break
        else:
            raise InfeasiblePlanError(f"UE {k} cannot be attached")
    return ConnectivityMatrix(C=C, active_trps=active, k_trp_cap=k_trp)


def cellular_associate(ls, active=None) -> ConnectivityMatrix:
    """Each UE served only by its strongest (active) TRP."""
    beta = _beta(ls)
    active = np.arange(beta.shape[0]) if active is None else np.asarray(active, dtype=int)
    b = beta[active]
    M, K = b.shape
    C = np.zeros((M, K), dtype=np.int8)
    C[np.argmax(b, axis=0), np.arange(K)] = 1
    return ConnectivityMatrix(C=C, active_trps=active, k_trp_cap=max(K, 1))


def kmeans_removal(beta: np.ndarray, active: np.ndarray, seed: int,
                   n_init: int = 20, max_iter: int = 100) -> int:
    """TRP that the clustering heuristic switches off next.

    UEs are clustered on their log-gain signatures into ``M`` clusters.
    Centroids, largest cluster first, take turns claiming their strongest
    still-unclaimed TRP until ``M - 1`` are kept; the unclaimed one goes.
    With ``K <= M`` the TRP with the smallest total gain goes instead.
    """
    from sklearn.cluster import KMeans

    active = np.asarray(active, dtype=int)
    b = beta[active]
    M, K = b.shape
    if M < 2:
        raise ConfigurationError("cannot remove the last TRP")
    if K <= M:
        total = b.sum(axis=1)
        return int(active[np.lexsort((np.arange(M), total))[0]])
    sig = 10.0 * np.log10(b.T)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=M, init="k-means++", n_init=n_init,
                    max_iter=max_iter, random_state=seed).fit(sig)
    sizes = np.bincount(km.labels_, minlength=M)
    order = np.lexsort((np.arange(M), -sizes))
    cent = km.cluster_centers_
    free = np.ones(M, dtype=bool)
    kept = 0
    while kept < M - 1:
        for c in order:
            if kept == M - 1:
                break
            cand = np.flatnonzero(free)
            j = cand[np.argmax(cent[c, cand])]
            free[j] = False
            kept += 1
    return int(active[np.flatnonzero(free)[0]])


Chooser = Callable[[np.ndarray], tuple]


def _run_loop(n_trp: int, K: int, k_trp: int, constraint: RateConstraint,
              evaluate: Evaluator, associate, choose: Chooser,
              stop_on_decrease: bool, stop_on_infeasible: bool) -> SwitchOffTrace:
    active = np.arange(n_trp)
    C = associate(active)
    res = evaluate(C)
    ok = constraint.satisfied(res.rates_bps)
    steps = [TraceStep(0, n_trp, None, res.ee, res.sum_rate, res.p_total, ok,
                       tuple(active.tolist()), C)]
    if not ok:
        return SwitchOffTrace(steps=steps, chosen=C, chosen_step=0, outage=True)
    prev_ee = res.ee
    while active.size > 1 and (active.size - 1) * k_trp >= K:
        removed, cached = choose(active)
        nxt = active[active != removed]
        if cached is None:
            C = associate(nxt)
            res = evaluate(C)
        else:
            C, res = cached
        ok = constraint.satisfied(res.rates_bps)
        steps.append(TraceStep(len(steps), nxt.size, int(removed), res.ee, res.sum_rate,
                               res.p_total, ok, tuple(nxt.tolist()), C))
        if not ok and stop_on_infeasible:
            break
        if stop_on_decrease and res.ee < prev_ee:
            break
        active = nxt
        prev_ee = res.ee
    feasible = [i for i, s in enumerate(steps) if s.feasible]
    best = max(feasible, key=lambda i: (steps[i].ee, -i))
    return SwitchOffTrace(steps=steps, chosen=steps[best].C, chosen_step=best)


def _default_associate(ls, k_trp):
    return lambda active: dcf_associate(ls, active, k_trp)


def greedy_switch_off(ls, constraint: RateConstraint, k_trp: int, evaluate: Evaluator,
                      rng: np.random.Generator, associate=None,
                      stop_on_decrease: bool = True,
                      stop_on_infeasible: bool = True) -> SwitchOffTrace:
    beta = _beta(ls)
    seed = int(rng.integers(2**31 - 1))
    associate = associate or _default_associate(ls, k_trp)

    def choose(active):
        return kmeans_removal(beta, active, seed), None

    return _run_loop(beta.shape[0], beta.shape[1], k_trp, constraint, evaluate,
                     associate, choose, stop_on_decrease, stop_on_infeasible)


def random_switch_off(ls, constraint: RateConstraint, k_trp: int, evaluate: Evaluator,
                      rng: np.random.Generator, associate=None,
                      stop_on_decrease: bool = True,
                      stop_on_infeasible: bool = True) -> SwitchOffTrace:
    beta = _beta(ls)
    associate = associate or _default_associate(ls, k_trp)

    def choose(active):
        return int(rng.choice(active)), None

    return _run_loop(beta.shape[0], beta.shape[1], k_trp, constraint, evaluate,
                     associate, choose, stop_on_decrease, stop_on_infeasible)


def rate_greedy_switch_off(ls, constraint: RateConstraint, k_trp: int,
                           evaluate: Evaluator, associate=None,
                           stop_on_decrease: bool = True,
                           stop_on_infeasible: bool = True) -> SwitchOffTrace:
    """Tries every remaining TRP and removes the one leaving the best EE."""
    beta = _beta(ls)
    associate = associate or _default_associate(ls, k_trp)

    def choose(active):
        best = None
        for m in active:
            C = associate(active[active != m])
            res = evaluate(C)
            if best is None or res.ee > best[2].ee:
                best = (int(m), C, res)
        return best[0], (best[1], best[2])

    return _run_loop(beta.shape[0], beta.shape[1], k_trp, constraint, evaluate,
                     associate, choose, stop_on_decrease, stop_on_infeasible)


def exhaustive_search(ls, constraint: RateConstraint, k_trp: int, evaluate: Evaluator,
                      associate=None) -> tuple[ConnectivityMatrix, EvalResult] | None:
    """Best feasible EE over every TRP subset able to host all UEs."""
    beta = _beta(ls)
    M_T, K = beta.shape
    associate = associate or _default_associate(ls, k_trp)
    best = None
    for size in range(1, M_T + 1):
        if size * k_trp < K:
            continue
        for subset in itertools.combinations(range(M_T), size):
            C = associate(np.array(subset))
            res = evaluate(C)
            if not constraint.satisfied(res.rates_bps):
                continue
            if best is None or res.ee > best[1].ee:
                best = (C, res)
    return best
