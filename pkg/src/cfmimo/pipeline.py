"""One Monte Carlo drop: placement, large-scale state, stream and pilot plans,
and a cached evaluator mapping a connectivity matrix to rates and EE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyReport, energy_efficiency
from .estimation import estimator_statistics, mmse_estimate, receive_pilots
from .large_scale import LargeScaleState, build_large_scale_state
from .pilots import PilotPlan, assign_pilots, random_pilots
from .precoding import ConnectivityMatrix, PrecodingMatrix, cp_mmse, fractional_dl_power
from .receiver import RateReport, accumulate_statistics, rate_report
from .sleep_controller import EvalResult, cellular_associate, dcf_associate
from .small_scale import complex_normal, draw_blocks
from .stream_manager import StreamPlan, default_stream_cap, select_streams, ue_metrics
from .topology import NetworkLayout, UESet, build_hex_layout, place_ues

__all__ = ["DropContext", "Evaluation", "drop_seeds"]

# substreams spawned from each drop's seed, in this order
_STREAMS = ("placement", "large_scale", "channels", "noise", "policy")


def drop_seeds(seed: int, drop: int) -> dict:
    """Independent per-drop generators derived from ``(seed, drop)`` only."""
    root = np.random.SeedSequence([int(seed), int(drop)])
    return {name: np.random.default_rng(s)
            for name, s in zip(_STREAMS, root.spawn(len(_STREAMS)))}


@dataclass
class Evaluation:
    C: ConnectivityMatrix
    rates: RateReport
    energy: EnergyReport
    tx_power: np.ndarray  # per active TRP
    p_dl: np.ndarray
    precoder: PrecodingMatrix


class DropContext:
    """Everything that is fixed within a drop.

    Channels and pilot noise are drawn once for all ``M_T`` TRPs, so any two
    connectivity matrices are compared on the same fading realizations.
    """

    def __init__(self, cfg, drop: int, layout: NetworkLayout | None = None):
        self.cfg = cfg
        self.drop = drop
        self.rngs = drop_seeds(cfg.seed, drop)
        self.layout = layout or build_hex_layout(cfg.L, cfg.S, cfg.isd, cfg.h_trp)
        self.ues: UESet = place_ues(self.layout, cfg.K, cfg.placement_spec(),
                                    self.rngs["placement"], cfg.h_ue)
        self.ls: LargeScaleState = build_large_scale_state(
            self.layout, self.ues, cfg.propagation(), cfg.trp_array(), cfg.ue_array(),
            self.rngs["large_scale"], shadowing=cfg.shadowing)
        self.stream_plan: StreamPlan | None = None
        self.pilot_plan: PilotPlan = self._plan_pilots()
        nb = max(cfg.n_blocks, cfg.n_blocks_search)
        self.G = draw_blocks(self.ls, self.rngs["channels"], nb)
        shape = (nb, self.ls.n_trp, self.ls.n_ant, cfg.tau_p)
        self.pilot_noise = complex_normal(self.rngs["noise"], shape)
        self._stats_cache: dict = {}
        self._eval_cache: dict = {}
        self.n_evaluations = 0

    def _plan_pilots(self) -> PilotPlan:
        cfg = self.cfg
        beta = self.ls.beta
        if cfg.streams == "adaptive" and cfg.n_ue > 1:
            cap = cfg.n_str_cap or default_stream_cap(cfg.K)
            self.stream_plan = select_streams(
                ue_metrics(self.ls), cfg.K, cfg.tau_p, cfg.n_ue, cap,
                cfg.theta_beta, cfg.theta_xi)
            counts = self.stream_plan.stream_counts
            if cfg.pilot_policy == "random":
                return random_pilots(cfg.K, cfg.tau_p, counts, self.rngs["placement"])
            return assign_pilots(beta, cfg.tau_p, counts, self.stream_plan.pilot_groups,
                                 self.stream_plan.ue_group)
        counts = np.full(cfg.K, cfg.n_streams_eff, dtype=int)
        if cfg.pilot_policy == "random":
            return random_pilots(cfg.K, cfg.tau_p, counts, self.rngs["placement"])
        return assign_pilots(beta, cfg.tau_p, counts)

    # association ----------------------------------------------------------
    def associate(self, active) -> ConnectivityMatrix:
        active = np.asarray(active, dtype=int)
        if self.cfg.mode == "cellular":
            return cellular_associate(self.ls, active)
        return dcf_associate(self.ls, active, self.cfg.k_trp_eff)

    # evaluation -----------------------------------------------------------
    def _stats(self, active: np.ndarray):
        key = tuple(active.tolist())
        if key not in self._stats_cache:
            self._stats_cache[key] = estimator_statistics(
                self.ls, self.pilot_plan, self.cfg.p_pilot, self.cfg.noise_var, active)
        return self._stats_cache[key]

    def evaluate(self, C: ConnectivityMatrix, n_blocks: int | None = None) -> Evaluation:
        cfg = self.cfg
        nb = cfg.n_blocks if n_blocks is None else n_blocks
        key = (C.active_trps.tobytes(), C.C.tobytes(), nb)
        if key in self._eval_cache:
            return self._eval_cache[key]
        self.n_evaluations += 1
        active = C.active_trps
        G = self.G[:nb, active]
        Y = receive_pilots(G, self.pilot_plan, cfg.p_pilot, cfg.noise_var,
                           noise=self.pilot_noise[:nb, active])
        est = mmse_estimate(Y, self.pilot_plan, self.ls, cfg.p_pilot, cfg.noise_var,
                            stats=self._stats(active))
        alloc = fractional_dl_power(self.ls, C, cfg.upsilon, cfg.p_trp, cfg.p_pilot)
        W = cp_mmse(est, C, alloc, cfg.noise_var)
        stats = accumulate_statistics(G, W, cfg.noise_var)
        rates = rate_report(stats, cfg.tau_p, cfg.tau_c)
        tx = W.per_trp_power()
        mask = np.zeros(self.ls.n_trp, dtype=bool)
        mask[active] = True
        tx_all = np.zeros(self.ls.n_trp)
        tx_all[active] = tx
        se = rates.rate_sic if cfg.detector == "mmse_sic" else rates.rate_mmse
        energy = energy_efficiency(se, mask, tx_all, cfg.power_model(), cfg.bandwidth,
                                   cfg.k_trp_eff, cfg.tau_p, cfg.tau_c)
        out = Evaluation(C=C, rates=rates, energy=energy, tx_power=tx, p_dl=alloc.p_dl,
                         precoder=W)
        self._eval_cache[key] = out
        return out

    def rates_bps(self, ev: Evaluation) -> np.ndarray:
        se = ev.rates.rate_sic if self.cfg.detector == "mmse_sic" else ev.rates.rate_mmse
        return self.cfg.bandwidth * se

    def evaluator(self, n_blocks: int | None = None):
        """Callable ``C -> EvalResult`` for the switch-off controllers."""

        def run(C: ConnectivityMatrix) -> EvalResult:
            ev = self.evaluate(C, n_blocks)
            return EvalResult(ee=ev.energy.ee, sum_rate=ev.energy.sum_rate,
                              p_total=ev.energy.p_total, rates_bps=self.rates_bps(ev),
                              extra={"evaluation": ev})

        return run
