"""Statistical-CSI downlink reception: effective-channel statistics and rates."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import io

import numpy as np

from .errors import NumericalError, StatisticsError
from .precoding import PrecodingMatrix

__all__ = [
    "ReceiveStatistics",
    "RateReport",
    "accumulate_statistics",
    "prelog",
    "rate_mmse",
    "rate_mmse_sic",
    "rate_report",
]


@dataclass
class ReceiveStatistics:
    xi_bar: list  # per UE (N_k, N_k): mean of G_k^H W_k
    E_cov: list  # per UE (N_k, N_k)
    n_blocks: int

    @property
    def K(self) -> int:
        return len(self.xi_bar)

    def B_cov(self, k: int, n: int) -> np.ndarray:
        X = self.xi_bar[k]
        others = np.delete(X, n, axis=1)
        return self.E_cov[k] + others @ np.conj(others.T)


@dataclass
class RateReport:
    rate_mmse: np.ndarray
    rate_sic: np.ndarray
    sinr: list = field(default_factory=list)
    prelog: float = 0.0

    def to_csv(self, drop_id: int = 0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["drop", "ue", "streams", "rate_mmse", "rate_sic", "sinr"])
        for k, (a, b) in enumerate(zip(self.rate_mmse, self.rate_sic)):
            s = self.sinr[k] if self.sinr else []
            w.writerow([drop_id, k, len(s), repr(float(a)), repr(float(b)),
                        ";".join(repr(float(x)) for x in s)])
        return buf.getvalue()


def accumulate_statistics(G: np.ndarray, precoder: PrecodingMatrix,
                          noise_var: float) -> ReceiveStatistics:
    """Sample statistics of the effective channels ``G_k^H W``.

    ``G`` holds the true (uplink) channels of the active TRPs,
    ``(B, M, K, N, Nu)``, in the same block order as ``precoder.W``. The
    downlink channel is the reciprocal one, so a precoder built along
    ``g_hat`` adds up coherently through ``G^H``.
    """
    W = precoder.W
    B, M, K, N, Nu = G.shape
    if B < 2:
        raise StatisticsError("at least two blocks are needed")
    if W.shape[0] != B or W.shape[1] != M * N:
        raise ValueError("channel and precoder blocks disagree")
    counts = precoder.stream_counts
    offsets = precoder.offsets
    # (B, K, Nu, M*N) @ (B, 1, M*N, S) -> (B, K, Nu, S)
    Gt = np.moveaxis(G, 2, 1).reshape(B, K, M * N, Nu)
    H = np.conj(np.swapaxes(Gt, -1, -2)) @ W[:, None]
    xi_bar, E_cov = [], []
    for k in range(K):
        nk = int(counts[k])
        Hk = H[:, k, :nk]
        xb = Hk[:, :, offsets[k]:offsets[k + 1]].mean(axis=0)
        second = np.einsum("bis,bjs->ij", Hk, np.conj(Hk)) / B
        E = second - xb @ np.conj(xb.T) + noise_var * np.eye(nk)
        E_cov.append(0.5 * (E + np.conj(E.T)))
        xi_bar.append(xb)
    return ReceiveStatistics(xi_bar=xi_bar, E_cov=E_cov, n_blocks=B)


def prelog(tau_p: int, tau_c: int) -> float:
    return (1.0 - tau_p / tau_c) / 2.0


def _quad(Bmat: np.ndarray, x: np.ndarray, rel: float = 1e-12) -> float:
    """``x^H B^-1 x`` with a small trace-scaled jitter."""
    d = Bmat.shape[0]
    eps = rel * np.real(np.trace(Bmat)) / d
    try:
        y = np.linalg.solve(Bmat + eps * np.eye(d), x)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("interference covariance is singular") from exc
    val = float(np.real(np.vdot(x, y)))
    if not np.isfinite(val):
        raise NumericalError("interference covariance is singular")
    return max(val, 0.0)


def stream_sinr(stats: ReceiveStatistics, k: int) -> np.ndarray:
    X = stats.xi_bar[k]
    return np.array([_quad(stats.B_cov(k, n), X[:, n]) for n in range(X.shape[1])])


def rate_mmse(stats: ReceiveStatistics, tau_p: int, tau_c: int) -> np.ndarray:
    pl = prelog(tau_p, tau_c)
    return np.array([pl * np.log2(1.0 + stream_sinr(stats, k)).sum()
                     for k in range(stats.K)])


def _sic_terms(stats: ReceiveStatistics, k: int) -> np.ndarray:
    # chain rule of log det(I + X^H E^-1 X), decoding the last stream first:
    # stream n still sees streams 0..n-1 on top of E
    X = stats.xi_bar[k]
    acc = stats.E_cov[k].copy()
    out = np.empty(X.shape[1])
    for n in range(X.shape[1]):
        out[n] = _quad(acc, X[:, n])
        acc = acc + np.outer(X[:, n], np.conj(X[:, n]))
    return out


def rate_mmse_sic(stats: ReceiveStatistics, tau_p: int, tau_c: int) -> np.ndarray:
    pl = prelog(tau_p, tau_c)
    return np.array([pl * np.log2(1.0 + _sic_terms(stats, k)).sum()
                     for k in range(stats.K)])


def rate_report(stats: ReceiveStatistics, tau_p: int, tau_c: int) -> RateReport:
    pl = prelog(tau_p, tau_c)
    sinr = [stream_sinr(stats, k) for k in range(stats.K)]
    return RateReport(rate_mmse=np.array([pl * np.log2(1.0 + s).sum() for s in sinr]),
                      rate_sic=rate_mmse_sic(stats, tau_p, tau_c), sinr=sinr, prelog=pl)
