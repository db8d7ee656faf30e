"""Large-scale stream selection: which UEs get more than one data stream and
how the pilot book is partitioned among the resulting groups."""

from __future__ import annotations

from dataclasses import dataclass
import json
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NumericalError
from .large_scale import LargeScaleState

__all__ = [
    "UEMetrics",
    "StreamPlan",
    "ue_metrics",
    "select_streams",
    "percentile_ranks",
    "default_stream_cap",
]

COND_FLOOR = 1e-12


@dataclass(frozen=True)
class UEMetrics:
    strength: np.ndarray  # trace of the collective covariance
    conditioning: np.ndarray  # lambda_max / lambda_min, inf when rank deficient


@dataclass(frozen=True)
class StreamPlan:
    groups: tuple  # groups[g] = UEs with g+1 streams
    stream_counts: np.ndarray
    pilot_groups: tuple  # pilot_groups[g] = columns reserved for groups[g]
    n_str_cap: int

    @property
    def n_str(self) -> int:
        return int(self.stream_counts.sum())

    @property
    def ue_group(self) -> np.ndarray:
        return self.stream_counts - 1

    def to_json(self) -> str:
        return json.dumps({
            "stream_counts": self.stream_counts.tolist(),
            "pilot_groups": [list(map(int, p)) for p in self.pilot_groups],
            "n_str_cap": int(self.n_str_cap),
        })

    @classmethod
    def from_json(cls, text: str) -> "StreamPlan":
        d = json.loads(text)
        counts = np.asarray(d["stream_counts"], dtype=int)
        n = len(d["pilot_groups"])
        groups = tuple(tuple(np.flatnonzero(counts == g + 1).tolist()) for g in range(n))
        return cls(groups=groups, stream_counts=counts,
                   pilot_groups=tuple(tuple(p) for p in d["pilot_groups"]),
                   n_str_cap=int(d["n_str_cap"]))


def default_stream_cap(K: int) -> int:
    """Stream budget scaled from the 84-UE reference (135 streams)."""
    return max(K, int(np.floor(K * 135 / 84)))


def ue_metrics(ls: LargeScaleState, trps=None) -> UEMetrics:
    """Strength and conditioning of ``blockdiag_m(R_ue[m,k] kron R_trp[m,k])``.

    The eigenvalues of a Kronecker block are the pairwise products of the
    factor eigenvalues, so the full matrix is never formed.
    """
    trps = np.arange(ls.n_trp) if trps is None else np.asarray(trps, dtype=int)
    lt = np.linalg.eigvalsh(ls.r_trp[trps])  # (M, K, N)
    lu = np.linalg.eigvalsh(ls.r_ue[trps])  # (M, K, Nu)
    prod = lu[..., :, None] * lt[..., None, :]
    prod = prod.reshape(prod.shape[:2] + (-1,))
    lmax = prod.max(axis=(0, 2))
    lmin = prod.min(axis=(0, 2))
    if np.any(lmax <= 0):
        raise NumericalError("covariance with no positive eigenvalue")
    cond = np.where(lmin <= COND_FLOOR * lmax, np.inf, lmax / np.maximum(lmin, 1e-300))
    strength = ls.n_ant * ls.n_ue_max * ls.beta[trps].sum(axis=0)
    return UEMetrics(strength=strength, conditioning=cond)


def percentile_ranks(values: np.ndarray) -> np.ndarray:
    """``(rank + 0.5) / K`` in ascending order; ties resolved by UE index."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    rank = np.empty(values.size)
    rank[order] = np.arange(values.size)
    return (rank + 0.5) / max(values.size, 1)


def _thresholds(theta, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.size == 1 and n > 1:
        arr = np.repeat(arr, n)
    if arr.size != n:
        raise ConfigurationError(f"{name} needs {n} thresholds, got {arr.size}")
    return arr


def select_streams(metrics: UEMetrics, K: int, tau_p: int, n_ue_max: int,
                   n_str_cap: int, theta_beta: Sequence[float] | float = 0.5,
                   theta_xi: Sequence[float] | float = 0.9) -> StreamPlan:
    """Recursive split of the UEs into stream groups.

    Thresholds act on drop-normalized percentiles: UE ``k`` is a candidate
    for group ``g+1`` when its strength percentile exceeds ``theta_beta[g-1]``
    and its conditioning percentile is below ``theta_xi[g-1]``. Candidates
    move on to more streams; the others stay at ``g`` streams with pilot
    group ``P_g``. Leftover UEs end with the pilots not yet handed out.
    """
    if K < 1:
        raise ConfigurationError("K must be positive")
    if n_ue_max < 1:
        raise ConfigurationError("n_ue_max must be >= 1")
    if K > n_str_cap:
        raise ConfigurationError("stream cap below one stream per UE")
    strength = np.asarray(metrics.strength, dtype=float)
    nb = max(n_ue_max - 1, 1)
    tb = _thresholds(theta_beta, nb, "theta_beta")
    tx = _thresholds(theta_xi, nb, "theta_xi")
    pb = percentile_ranks(strength)
    # inf conditioning sorts last, i.e. worst
    px = percentile_ranks(metrics.conditioning)

    counts = np.ones(K, dtype=int)
    groups: list[list[int]] = [[] for _ in range(n_ue_max)]
    pilot_groups: list[list[int]] = [[] for _ in range(n_ue_max)]
    rest = list(range(K))
    pilots_rest = list(range(tau_p))
    prev_k, prev_p = K, tau_p
    L = K
    g = 1
    while g < n_ue_max and L < n_str_cap:
        cand = [k for k in rest if pb[k] > tb[g - 1] and px[k] < tx[g - 1]]
        budget = n_str_cap - L
        if len(cand) > budget:
            # strongest first, lower index on ties
            keep = sorted(cand, key=lambda k: (-strength[k], k))[:budget]
            cand = sorted(keep)
        stay = [k for k in rest if k not in set(cand)]
        size = int(round(len(stay) * prev_p / prev_k)) if prev_k else 0
        if size == 0 or not cand:
            # nothing to split off (or no pilots left for the stayers): the
            # current rest keeps g streams and the remaining pilots
            break
        # g streams per stayer need g distinct columns
        size = max(size, g)
        if size > len(pilots_rest):
            break
        groups[g - 1] = stay
        pilot_groups[g - 1] = pilots_rest[:size]
        pilots_rest = pilots_rest[size:]
        L += len(cand)
        rest = cand
        prev_k, prev_p = len(stay), size
        g += 1

    # finalize the surviving rest at g streams
    while rest:
        if len(pilots_rest) >= g:
            groups[g - 1] = rest
            pilot_groups[g - 1] = pilots_rest
            break
        # not enough columns for g distinct pilots: fold back one level
        g -= 1
        if g == 0:
            raise ConfigurationError("no pilots left for the remaining UEs")
        pilots_rest = pilot_groups[g - 1] + pilots_rest
        rest = sorted(groups[g - 1] + rest)
        groups[g - 1], pilot_groups[g - 1] = [], []
    for gi, members in enumerate(groups):
        counts[members] = gi + 1
    return StreamPlan(groups=tuple(tuple(m) for m in groups), stream_counts=counts,
                      pilot_groups=tuple(tuple(p) for p in pilot_groups),
                      n_str_cap=int(n_str_cap))
