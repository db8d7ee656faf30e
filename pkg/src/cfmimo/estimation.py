"""Uplink pilot reception and MMSE channel estimation at the TRPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .large_scale import LargeScaleState
from .pilots import PilotPlan, make_pilot_book
from .small_scale import complex_normal

__all__ = [
    "EstimatorStats",
    "ChannelEstimates",
    "estimator_statistics",
    "receive_pilots",
    "project_pilots",
    "mmse_estimate",
]


@dataclass
class EstimatorStats:
    """Large-scale quantities of the estimator for the active TRPs.

    Per UE ``k`` (lists indexed by UE), arrays are stacked over active TRPs:
    ``psi[k]``, ``filt[k]`` (= sqrt(tau P / N_k) R Psi^-1), ``ghat_cov[k]`` and
    ``A[k]`` are ``(M, N*N_k, N*N_k)``. ``abar[a, k]`` is the error covariance
    summed over the UE's antennas, ``(N, N)``.
    """

    trps: np.ndarray
    stream_counts: np.ndarray
    psi: list
    filt: list
    ghat_cov: list
    A: list
    abar: np.ndarray


@dataclass
class ChannelEstimates:
    g_hat: np.ndarray  # (B, M, K, N, Nu) zero beyond N_k
    stats: EstimatorStats

    @property
    def A(self) -> list:
        return self.stats.A

    @property
    def psi(self) -> list:
        return self.stats.psi


def _regularized_inverse(P: np.ndarray, rel: float = 1e-10) -> np.ndarray:
    d = P.shape[-1]
    tr = np.real(np.trace(P, axis1=-2, axis2=-1))
    eps = rel * tr / d
    P = P + eps[..., None, None] * np.eye(d)
    try:
        inv = np.linalg.inv(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("pilot covariance Psi is singular") from exc
    if not np.all(np.isfinite(inv)):
        raise NumericalError("pilot covariance Psi is singular")
    return inv


def estimator_statistics(ls: LargeScaleState, plan: PilotPlan, p_pilot: float,
                         noise_var: float, trps=None) -> EstimatorStats:
    trps = np.arange(ls.n_trp) if trps is None else np.asarray(trps, dtype=int)
    tau = plan.tau_p
    counts = plan.stream_counts
    N = ls.n_ant
    r_trp = ls.r_trp[trps]  # (M, K, N, N)
    r_ue = ls.r_ue[trps]
    psi_l, filt_l, cov_l, A_l = [], [], [], []
    abar = np.zeros((trps.size, plan.K, N, N), dtype=complex)
    for k in range(plan.K):
        nk = int(counts[k])
        d = N * nk
        psi = np.zeros((trps.size, d, d), dtype=complex)
        for kp in plan.co_pilot_users(k):
            P = plan.overlap(k, kp)  # (nk, nkp)
            nkp = int(counts[kp])
            ue_part = P @ r_ue[:, kp, :nkp, :nkp] @ P.T  # (M, nk, nk)
            psi += (tau * p_pilot / nkp) * _batched_kron(ue_part, r_trp[:, kp])
        psi += noise_var * np.eye(d)
        Rk = _batched_kron(r_ue[:, k, :nk, :nk], r_trp[:, k])
        RPinv = Rk @ _regularized_inverse(psi)
        scale = tau * p_pilot / nk
        cov = scale * RPinv @ Rk
        cov = 0.5 * (cov + np.conj(np.swapaxes(cov, -1, -2)))
        A = Rk - cov
        A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
        psi_l.append(psi)
        filt_l.append(np.sqrt(scale) * RPinv)
        cov_l.append(cov)
        A_l.append(A)
        for n in range(nk):
            abar[:, k] += A[:, n * N:(n + 1) * N, n * N:(n + 1) * N]
    return EstimatorStats(trps=trps, stream_counts=counts, psi=psi_l, filt=filt_l,
                          ghat_cov=cov_l, A=A_l, abar=abar)


def _batched_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product over the trailing two axes."""
    lead = a.shape[:-2]
    p, q = a.shape[-2:]
    r, s = b.shape[-2:]
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(lead + (p * r, q * s))


def receive_pilots(G: np.ndarray, plan: PilotPlan, p_pilot: float, noise_var: float,
                   rng: np.random.Generator | None = None,
                   noise: np.ndarray | None = None) -> np.ndarray:
    """Received training samples ``Y_m`` of shape ``(..., M, N, tau_p)``.

    ``G`` is ``(..., M, K, N, Nu)``. ``noise`` (standard CN(0,1) samples of
    the output shape) may be supplied to reuse draws across configurations.
    """
    book = make_pilot_book(plan.tau_p)
    lead = G.shape[:-4]
    M, K, N = G.shape[-4:-1]
    Y = np.zeros(lead + (M, N, plan.tau_p), dtype=complex)
    tau = plan.tau_p
    for k in range(K):
        nk = len(plan.columns[k])
        phiT = plan.phi(k, book).T  # (nk, tau)
        Y += np.sqrt(tau * p_pilot / nk) * (G[..., k, :, :nk] @ phiT)
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise must be given")
        noise = complex_normal(rng, Y.shape)
    return Y + np.sqrt(noise_var) * noise


def project_pilots(Y: np.ndarray, plan: PilotPlan, k: int,
                   book: np.ndarray | None = None) -> np.ndarray:
    """``vec(Y_m Phi_k^*)`` for every TRP: shape ``(..., M, N*N_k)``."""
    phi = plan.phi(k, book)
    Z = Y @ np.conj(phi)  # (..., M, N, nk)
    Z = np.swapaxes(Z, -1, -2)  # column-major vec
    return Z.reshape(Z.shape[:-2] + (-1,))


def mmse_estimate(Y: np.ndarray, plan: PilotPlan, ls: LargeScaleState,
                  p_pilot: float, noise_var: float, trps=None,
                  stats: EstimatorStats | None = None) -> ChannelEstimates:
    """MMSE estimates from received pilots ``Y`` (``(..., M, N, tau_p)``)."""
    if stats is None:
        stats = estimator_statistics(ls, plan, p_pilot, noise_var, trps)
    book = make_pilot_book(plan.tau_p)
    lead = Y.shape[:-3]
    M, N = Y.shape[-3:-1]
    Nu = ls.n_ue_max
    g_hat = np.zeros(lead + (M, plan.K, N, Nu), dtype=complex)
    for k in range(plan.K):
        nk = int(stats.stream_counts[k])
        y = project_pilots(Y, plan, k, book)  # (..., M, N*nk)
        g = np.einsum("mij,...mj->...mi", stats.filt[k], y)
        g_hat[..., k, :, :nk] = np.swapaxes(g.reshape(lead + (M, nk, N)), -1, -2)
    return ChannelEstimates(g_hat=g_hat, stats=stats)
