"""Orthonormal pilot book and location-aware (fingerprint) pilot reuse."""

from __future__ import annotations

from dataclasses import dataclass
import json
from typing import Sequence

import numpy as np

from .errors import InfeasiblePlanError

__all__ = ["PilotPlan", "make_pilot_book", "assign_pilots", "random_pilots"]


def make_pilot_book(tau_p: int) -> np.ndarray:
    """Unitary DFT basis; column ``c`` is the ``c``-th orthogonal pilot."""
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    n = np.arange(tau_p)
    return np.exp(-2j * np.pi * np.outer(n, n) / tau_p) / np.sqrt(tau_p)


@dataclass(frozen=True)
class PilotPlan:
    tau_p: int
    columns: tuple  # per UE, tuple of pilot column indices (one per stream)
    groups: tuple | None = None  # pilot-column groups P_1..P_G

    @property
    def K(self) -> int:
        return len(self.columns)

    @property
    def stream_counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.columns], dtype=int)

    @property
    def n_str(self) -> int:
        return int(self.stream_counts.sum())

    def phi(self, k: int, book: np.ndarray | None = None) -> np.ndarray:
        book = make_pilot_book(self.tau_p) if book is None else book
        return book[:, list(self.columns[k])]

    def overlap(self, k: int, kp: int) -> np.ndarray:
        """``Phi_k^H Phi_kp`` as an exact 0/1 matrix."""
        a = np.asarray(self.columns[k])
        b = np.asarray(self.columns[kp])
        return (a[:, None] == b[None, :]).astype(float)

    def co_pilot_users(self, k: int) -> list[int]:
        mine = set(self.columns[k])
        return [kp for kp, cols in enumerate(self.columns) if mine.intersection(cols)]

    def users_per_column(self) -> np.ndarray:
        cnt = np.zeros(self.tau_p, dtype=int)
        for cols in self.columns:
            for c in cols:
                cnt[c] += 1
        return cnt

    def to_json(self) -> str:
        return json.dumps({
            "tau_p": self.tau_p,
            "columns": [list(map(int, c)) for c in self.columns],
            "groups": None if self.groups is None else [list(map(int, g)) for g in self.groups],
        })

    @classmethod
    def from_json(cls, text: str) -> "PilotPlan":
        d = json.loads(text)
        groups = d.get("groups")
        return cls(tau_p=int(d["tau_p"]),
                   columns=tuple(tuple(c) for c in d["columns"]),
                   groups=None if groups is None else tuple(tuple(g) for g in groups))


def assign_pilots(beta: np.ndarray, tau_p: int, stream_counts: Sequence[int],
                  pilot_groups: Sequence[Sequence[int]] | None = None,
                  ue_group: Sequence[int] | None = None) -> PilotPlan:
    """Greedy fingerprint assignment.

    UEs are served in decreasing aggregate gain ``sum_m beta[m, k]``. For each
    stream the UE takes the allowed column minimising the worst contamination
    proxy ``max_{k' on c} sum_m beta[m,k] * beta[m,k']`` (unused columns score
    zero, so the plan is fully orthogonal whenever enough columns exist).
    Ties go to the lowest column index. With ``pilot_groups``, UE ``k`` only
    draws from ``pilot_groups[ue_group[k]]``.
    """
    beta = np.asarray(beta, dtype=float)
    counts = np.asarray(stream_counts, dtype=int)
    K = counts.size
    if beta.shape[1] != K:
        raise ValueError("beta and stream_counts disagree on K")
    if np.any(counts > tau_p):
        raise InfeasiblePlanError("a UE needs more streams than tau_p")
    if pilot_groups is None:
        allowed = [np.arange(tau_p)] * K
        groups = None
    else:
        if ue_group is None:
            raise ValueError("ue_group is required with pilot_groups")
        groups = tuple(tuple(int(c) for c in g) for g in pilot_groups)
        seen = set()
        for g in groups:
            if seen.intersection(g):
                raise InfeasiblePlanError("pilot groups overlap")
            seen.update(g)
        allowed = [np.asarray(groups[int(ue_group[k])], dtype=int) for k in range(K)]
        for k in range(K):
            if counts[k] > allowed[k].size:
                raise InfeasiblePlanError(
                    f"UE {k} needs {counts[k]} pilots, its group has {allowed[k].size}")

    strength = beta.sum(axis=0)
    order = np.argsort(-strength, kind="stable")
    cross = beta.T @ beta  # (K, K)
    # worst cross-gain currently present on each column; -1 marks unused
    worst = np.full((K, tau_p), -1.0)
    used = np.zeros(tau_p, dtype=bool)
    columns: list[tuple] = [()] * K
    for k in order:
        cand = allowed[k]
        score = np.where(used[cand], worst[k, cand], 0.0)
        pick = cand[np.lexsort((cand, score))][: counts[k]]
        pick = tuple(int(c) for c in np.sort(pick))
        columns[k] = pick
        for c in pick:
            used[c] = True
            # every other UE's score for column c now includes UE k
            worst[:, c] = np.maximum(worst[:, c], cross[:, k])
    return PilotPlan(tau_p=int(tau_p), columns=tuple(columns), groups=groups)


def random_pilots(K: int, tau_p: int, stream_counts: Sequence[int],
                  rng: np.random.Generator) -> PilotPlan:
    """Uniformly random per-UE columns (baseline for comparisons)."""
    cols = tuple(tuple(int(c) for c in np.sort(rng.choice(tau_p, size=int(n), replace=False)))
                 for n in stream_counts)
    return PilotPlan(tau_p=int(tau_p), columns=cols)
