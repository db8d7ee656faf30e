"""Kronecker-correlated Rayleigh fading realizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .large_scale import LargeScaleState

__all__ = ["ChannelRealization", "draw_channel", "draw_blocks", "complex_normal"]


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass
class ChannelRealization:
    """``G[m, k]`` is the ``N_TRP x N_UE`` channel of link (m, k). Only the
    first ``N_UE^k`` columns are used for a UE with fewer active antennas;
    a column subset of a Kronecker draw has the sliced Kronecker covariance."""

    G: np.ndarray  # (M_T, K, N, Nu)
    drop_id: int = 0
    block_id: int = 0


def draw_blocks(ls: LargeScaleState, rng: np.random.Generator,
                n_blocks: int) -> np.ndarray:
    """``(n_blocks, M_T, K, N, Nu)`` channels ``R_trp^1/2 X R_ue^T/2``."""
    A = ls.sqrt_trp
    Bt = np.swapaxes(ls.sqrt_ue, -1, -2)
    M, K, N, _ = A.shape
    Nu = Bt.shape[-1]
    X = complex_normal(rng, (n_blocks, M, K, N, Nu))
    return A[None] @ X @ Bt[None]


def draw_channel(ls: LargeScaleState, rng: np.random.Generator,
                 drop_id: int = 0, block_id: int = 0) -> ChannelRealization:
    return ChannelRealization(G=draw_blocks(ls, rng, 1)[0], drop_id=drop_id,
                              block_id=block_id)
