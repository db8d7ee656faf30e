"""AAU, fronthaul and CPU power model and network energy efficiency."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "PowerModelParams",
    "EnergyReport",
    "aau_power",
    "fronthaul_power",
    "cpu_power",
    "energy_efficiency",
]


@dataclass(frozen=True)
class PowerModelParams:
    p_bline: float = 500.0
    eta: float = 0.4
    varpi: float = 0.3
    p_fh_fix: float = 0.825
    p_fh_var: float = 0.01
    p_cpu_fix: float = 5.0
    p_cpu_pre: float = 0.1  # W per Gbps
    p_trp_max: float = 240.0

    def __post_init__(self):
        if not 0.0 <= self.varpi <= 1.0:
            raise ConfigurationError("varpi must lie in [0, 1]")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigurationError("eta must lie in (0, 1]")


@dataclass
class EnergyReport:
    p_aau: np.ndarray
    p_fh: np.ndarray
    p_cpu: float
    p_total: float
    ee: float
    sum_rate: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_aau"] = self.p_aau.tolist()
        d["p_fh"] = self.p_fh.tolist()
        return d


def aau_power(active: bool, p_tx: float, params: PowerModelParams,
              rtol: float = 0.0) -> float:
    """``rtol`` admits Monte Carlo overshoot of a statistically normalized
    transmit power; the pure model check uses zero."""
    if p_tx < 0 or p_tx > params.p_trp_max * (1.0 + rtol):
        raise ValueError(f"transmit power {p_tx} outside [0, {params.p_trp_max}]")
    if active:
        return params.p_bline + p_tx / params.eta
    return (1.0 - params.varpi) * params.p_bline


def fronthaul_power(active: bool, k_trp: int, tau_d: float, tau_c: float,
                    params: PowerModelParams) -> float:
    if k_trp < 0:
        raise ValueError("k_trp must be non-negative")
    if active:
        return params.p_fh_fix + (tau_d / tau_c) * k_trp * params.p_fh_var
    return params.p_fh_fix


def cpu_power(sum_rate: float, params: PowerModelParams) -> float:
    """``sum_rate`` in bit/s."""
    if sum_rate < 0:
        raise ValueError("sum_rate must be non-negative")
    return params.p_cpu_fix + sum_rate / 1e9 * params.p_cpu_pre


def energy_efficiency(rates: np.ndarray, active: np.ndarray, tx_powers: np.ndarray,
                      params: PowerModelParams, bandwidth: float, k_trp: int,
                      tau_p: int, tau_c: int, tx_rtol: float = 0.05) -> EnergyReport:
    """EE over all ``M_T`` TRPs.

    ``rates`` are per-UE spectral efficiencies (bit/s/Hz), ``active`` a
    boolean mask over all TRPs and ``tx_powers`` the per-TRP transmit power
    (ignored where inactive).
    """
    active = np.asarray(active, dtype=bool)
    tx = np.asarray(tx_powers, dtype=float)
    if tx.shape != active.shape:
        raise ValueError("tx_powers and active must cover the same TRPs")
    tau_d = (tau_c - tau_p) / 2.0
    p_aau = np.array([aau_power(bool(a), float(t) if a else 0.0, params, tx_rtol)
                      for a, t in zip(active, tx)])
    p_fh = np.array([fronthaul_power(bool(a), k_trp, tau_d, tau_c, params)
                     for a in active])
    sum_rate = float(bandwidth * np.sum(rates))
    p_cpu = cpu_power(sum_rate, params)
    p_total = float(p_aau.sum() + p_fh.sum() + p_cpu)
    return EnergyReport(p_aau=p_aau, p_fh=p_fh, p_cpu=p_cpu, p_total=p_total,
                        ee=sum_rate / p_total, sum_rate=sum_rate)
