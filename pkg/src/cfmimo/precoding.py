"""Centralized partial-MMSE precoding and fractional power allocation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .estimation import ChannelEstimates
from .large_scale import LargeScaleState

__all__ = [
    "ConnectivityMatrix",
    "PowerAllocation",
    "PrecodingMatrix",
    "fractional_dl_power",
    "cp_mmse",
]


@dataclass(frozen=True)
class ConnectivityMatrix:
    """Binary ``C`` (rows = active TRPs, in the order of ``active_trps``)."""

    C: np.ndarray
    active_trps: np.ndarray
    k_trp_cap: int

    def __post_init__(self):
        C = np.asarray(self.C).astype(np.int8)
        active = np.asarray(self.active_trps, dtype=int)
        if C.ndim != 2 or C.shape[0] != active.size:
            raise ConfigurationError("C must have one row per active TRP")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "active_trps", active)

    @property
    def M(self) -> int:
        return int(self.active_trps.size)

    @property
    def K(self) -> int:
        return int(self.C.shape[1])

    def served_counts(self) -> np.ndarray:
        return self.C.sum(axis=1)

    def serving_counts(self) -> np.ndarray:
        return self.C.sum(axis=0)

    def is_valid(self) -> bool:
        return bool(np.all(self.served_counts() <= self.k_trp_cap)
                    and np.all(self.serving_counts() >= 1))

    def full(self, n_trp: int) -> np.ndarray:
        """``C`` embedded in all ``n_trp`` rows (zeros for shutdown TRPs)."""
        out = np.zeros((n_trp, self.K), dtype=np.int8)
        out[self.active_trps] = self.C
        return out


@dataclass(frozen=True)
class PowerAllocation:
    p_dl: np.ndarray
    p_ul: np.ndarray
    upsilon: float
    p_trp_max: float


@dataclass
class PrecodingMatrix:
    """``W[b]`` is ``(M*N, N_str)``; rows are TRP-major, columns are the
    streams of UE 0, then UE 1, and so on."""

    W: np.ndarray
    stream_counts: np.ndarray
    n_ant: int

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.stream_counts)])

    def columns(self, k: int) -> slice:
        o = self.offsets
        return slice(int(o[k]), int(o[k + 1]))

    def per_trp_power(self) -> np.ndarray:
        """Sample mean of ``||W^m||_F^2`` for each active TRP."""
        B, D, _ = self.W.shape
        M = D // self.n_ant
        w2 = np.abs(self.W.reshape(B, M, self.n_ant, -1)) ** 2
        return w2.sum(axis=(2, 3)).mean(axis=0)

    def stream_power(self) -> np.ndarray:
        """Sample mean of ``||w_kn||^2`` per stream column."""
        return (np.abs(self.W) ** 2).sum(axis=1).mean(axis=0)


def _aggregate_gain(ls: LargeScaleState, C: ConnectivityMatrix) -> np.ndarray:
    beta = ls.beta[C.active_trps]
    agg = (C.C * beta).sum(axis=0)
    if np.any(C.serving_counts() < 1):
        raise ConfigurationError("every UE needs at least one serving TRP")
    return agg


def fractional_dl_power(ls: LargeScaleState, C: ConnectivityMatrix,
                        upsilon: float = -0.5, p_trp: float = 240.0,
                        p_ue_max: float = 0.2) -> PowerAllocation:
    agg = _aggregate_gain(ls, C)
    weight = agg ** upsilon
    load = C.C @ weight  # per TRP
    # busiest TRP among those serving each UE
    denom = np.where(C.C > 0, load[:, None], -np.inf).max(axis=0)
    p_dl = p_trp * weight / denom
    root = np.sqrt(agg)
    p_ul = p_ue_max * root.min() / root
    return PowerAllocation(p_dl=p_dl, p_ul=p_ul, upsilon=float(upsilon),
                           p_trp_max=float(p_trp))


def cp_mmse(estimates: ChannelEstimates, C: ConnectivityMatrix,
            alloc: PowerAllocation, noise_var: float) -> PrecodingMatrix:
    """Per-UE partial MMSE precoders with sample-average normalization.

    Each UE's problem is solved on its serving TRPs only: outside that
    support ``Omega_k`` is ``noise_var * I`` and ``C^[k] g_hat`` vanishes,
    so the full-dimensional solution is zero there anyway.
    """
    g_hat = estimates.g_hat
    abar = estimates.stats.abar
    counts = np.asarray(estimates.stats.stream_counts, dtype=int)
    B, M, K, N, _ = g_hat.shape
    if C.M != M or C.K != K:
        raise ConfigurationError("connectivity does not match estimates")
    offsets = np.concatenate([[0], np.cumsum(counts)])
    W = np.zeros((B, M * N, int(offsets[-1])), dtype=complex)
    wl = alloc.p_ul / counts  # p_i^UL / N_UE^i
    Cb = C.C.astype(bool)
    for k in range(K):
        S = np.flatnonzero(Cb[:, k])
        partial = np.flatnonzero(Cb[S].any(axis=0))
        d = S.size * N
        gs = g_hat[:, S]  # (B, |S|, K, N, Nu)
        cols = [np.sqrt(wl[i]) * gs[:, :, i, :, n].reshape(B, d)
                for i in partial for n in range(counts[i])]
        X = np.stack(cols, axis=-1)  # (B, d, n)
        err = np.einsum("i,sixy->sxy", wl[partial], abar[S][:, partial])
        D = err + noise_var * np.eye(N)
        # Omega = X X^H + blockdiag(D), and the right-hand side is a slice of
        # X, so Omega^-1 X = D^-1 X (I + X^H D^-1 X)^-1 needs only small solves
        try:
            Dinv = np.linalg.inv(D)
            Y = np.einsum("sxy,bsyn->bsxn", Dinv, X.reshape(B, S.size, N, -1))
            Y = Y.reshape(B, d, -1)
            gram = np.conj(np.swapaxes(X, -1, -2)) @ Y
            gram = 0.5 * (gram + np.conj(np.swapaxes(gram, -1, -2)))
            gram += np.eye(gram.shape[-1])
            sel = np.zeros((gram.shape[-1], counts[k]))
            first = int(np.sum(counts[partial[partial < k]]))
            sel[first + np.arange(counts[k]), np.arange(counts[k])] = 1.0
            w = np.sqrt(wl[k]) * (Y @ np.linalg.solve(gram, np.broadcast_to(sel, (B,) + sel.shape)))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Omega singular for UE {k}") from exc
        norm2 = (np.abs(w) ** 2).sum(axis=1).mean(axis=0)  # (N_k,)
        if np.any(norm2 <= 0) or not np.all(np.isfinite(norm2)):
            raise NumericalError(f"degenerate precoder norm for UE {k}")
        w *= np.sqrt(alloc.p_dl[k] / counts[k] / norm2)
        rows = (S[:, None] * N + np.arange(N)).ravel()
        W[:, rows, offsets[k]:offsets[k + 1]] = w
    return PrecodingMatrix(W=W, stream_counts=counts, n_ant=N)
