"""Monte Carlo orchestration over drops, aggregation and CSV/JSON output."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import io
import json
import logging
import os
from pathlib import Path

import numpy as np

from ..errors import CfmimoError, ConfigurationError
from ..pipeline import DropContext
from ..sleep_controller import (
    SwitchOffTrace,
    greedy_switch_off,
    kmeans_removal,
    random_switch_off,
    rate_greedy_switch_off,
)
from .config import ScenarioConfig, field_names

__all__ = ["DropResult", "AggregateResult", "run_drop", "run_scenario", "sweep",
           "write_outputs", "default_workers"]

log = logging.getLogger(__name__)

WORKERS_ENV = "CFMIMO_WORKERS"


@dataclass
class DropResult:
    drop: int
    streams: np.ndarray | None = None
    rate_mmse: np.ndarray | None = None  # bit/s/Hz
    rate_sic: np.ndarray | None = None
    trace: list = field(default_factory=list)  # (step, M, removed, ee, sum_rate, p_total, feasible)
    chosen_m: int | None = None
    ee: float | None = None
    sum_rate: float | None = None
    p_total: float | None = None
    outage: bool = False
    error: str | None = None


@dataclass
class AggregateResult:
    config: ScenarioConfig
    drops: list

    @property
    def ok_drops(self) -> list:
        return [d for d in self.drops if d.error is None]

    @property
    def errors(self) -> list:
        return [{"drop": d.drop, "error": d.error} for d in self.drops if d.error]

    def rates(self, detector: str | None = None) -> np.ndarray:
        """Pooled per-UE rates in bit/s over all successful drops."""
        det = detector or self.config.detector
        key = "rate_sic" if det == "mmse_sic" else "rate_mmse"
        parts = [getattr(d, key) for d in self.ok_drops]
        if not parts:
            return np.zeros(0)
        return self.config.bandwidth * np.concatenate(parts)

    def percentile(self, q: float, detector: str | None = None) -> float:
        r = self.rates(detector)
        return float(np.percentile(r, q)) if r.size else float("nan")

    def cdf(self, grid: np.ndarray | None = None, detector: str | None = None):
        r = np.sort(self.rates(detector))
        if grid is None:
            grid = r
        return grid, np.searchsorted(r, grid, side="right") / max(r.size, 1)

    def curve(self) -> dict:
        """Drop-averaged EE, sum rate, power and feasibility per active count M."""
        acc: dict[int, list] = {}
        for d in self.ok_drops:
            for step, M, _, ee, sr, pt, ok in d.trace:
                acc.setdefault(M, []).append((ee, sr, pt, float(ok)))
        out = {}
        for M in sorted(acc, reverse=True):
            a = np.array(acc[M])
            out[M] = {"ee": float(a[:, 0].mean()), "sum_rate": float(a[:, 1].mean()),
                      "p_total": float(a[:, 2].mean()), "feasible": float(a[:, 3].mean()),
                      "n": int(a.shape[0])}
        return out

    @property
    def outage_fraction(self) -> float:
        ok = self.ok_drops
        return float(np.mean([d.outage for d in ok])) if ok else float("nan")

    def summary(self) -> dict:
        r = self.rates()
        ok = self.ok_drops
        return {
            "config": self.config.to_dict(),
            "n_drops": len(self.drops),
            "n_ok": len(ok),
            "n_samples": int(r.size),
            "rate_bps": {
                "mean": float(r.mean()) if r.size else None,
                "p10": self.percentile(10) if r.size else None,
                "p50": self.percentile(50) if r.size else None,
                "p90": self.percentile(90) if r.size else None,
            },
            "ee_mean": float(np.mean([d.ee for d in ok])) if ok else None,
            "sum_rate_mean": float(np.mean([d.sum_rate for d in ok])) if ok else None,
            "p_total_mean": float(np.mean([d.p_total for d in ok])) if ok else None,
            "chosen_m_mean": float(np.mean([d.chosen_m for d in ok])) if ok else None,
            "outage_fraction": self.outage_fraction if ok else None,
            "errors": self.errors,
        }


def _trace_rows(trace: SwitchOffTrace) -> list:
    return [(s.step, s.M, s.removed, s.ee, s.sum_rate, s.p_total, bool(s.feasible))
            for s in trace.steps]


def _forced_active(ctx: DropContext, cfg: ScenarioConfig) -> np.ndarray:
    """Active set after switching off down to ``m_forced`` TRPs with the
    configured policy (greedy when none is set), ignoring EE and rates."""
    rng = ctx.rngs["policy"]
    seed = int(rng.integers(2**31 - 1))
    active = np.arange(ctx.ls.n_trp)
    while active.size > cfg.m_forced:
        if cfg.switch_off == "random":
            m = int(rng.choice(active))
        else:
            m = kmeans_removal(ctx.ls.beta, active, seed)
        active = active[active != m]
    return active


def run_drop(cfg: ScenarioConfig, drop: int) -> DropResult:
    try:
        ctx = DropContext(cfg, drop)
        streams = ctx.pilot_plan.stream_counts
        if cfg.m_forced is not None:
            C = ctx.associate(_forced_active(ctx, cfg))
            ev = ctx.evaluate(C)
            res = ctx.evaluator()(C)
            trace = [(0, C.M, None, res.ee, res.sum_rate, res.p_total,
                      cfg.constraint().satisfied(res.rates_bps))]
            outage = False
        elif cfg.switch_off == "none":
            C = ctx.associate(np.arange(ctx.ls.n_trp))
            ev = ctx.evaluate(C)
            res = ctx.evaluator()(C)
            trace = [(0, C.M, None, res.ee, res.sum_rate, res.p_total,
                      cfg.constraint().satisfied(res.rates_bps))]
            outage = not trace[0][-1]
        else:
            search = ctx.evaluator(cfg.n_blocks_search)
            common = dict(associate=ctx.associate, stop_on_decrease=cfg.stop_on_decrease,
                          stop_on_infeasible=cfg.stop_on_infeasible)
            # cellular association has no per-TRP cap
            k = cfg.k_trp_eff if cfg.mode == "cellfree" else cfg.K
            if cfg.switch_off == "greedy":
                tr = greedy_switch_off(ctx.ls, cfg.constraint(), k, search,
                                       ctx.rngs["policy"], **common)
            elif cfg.switch_off == "random":
                tr = random_switch_off(ctx.ls, cfg.constraint(), k, search,
                                       ctx.rngs["policy"], **common)
            else:
                tr = rate_greedy_switch_off(ctx.ls, cfg.constraint(), k, search, **common)
            trace = _trace_rows(tr)
            outage = tr.outage
            # final figures at full resolution
            C = tr.chosen
            ev = ctx.evaluate(C)
        return DropResult(drop=drop, streams=np.asarray(streams),
                          rate_mmse=ev.rates.rate_mmse, rate_sic=ev.rates.rate_sic,
                          trace=trace, chosen_m=C.M, ee=ev.energy.ee,
                          sum_rate=ev.energy.sum_rate, p_total=ev.energy.p_total,
                          outage=outage)
    except CfmimoError as exc:
        log.warning("drop %d failed: %s", drop, exc)
        return DropResult(drop=drop, error=f"{type(exc).__name__}: {exc}")


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_scenario(cfg: ScenarioConfig, workers: int | None = None,
                 out_dir: str | Path | None = None) -> AggregateResult:
    workers = default_workers() if workers is None else max(1, workers)
    drops = range(cfg.drops)
    if workers == 1:
        results = [run_drop(cfg, d) for d in drops]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_drop, [cfg] * cfg.drops, drops))
    agg = AggregateResult(config=cfg, drops=results)
    if out_dir is not None:
        write_outputs(agg, out_dir)
    return agg


def sweep(cfg: ScenarioConfig, axis: str, values, workers: int | None = None,
          out_dir: str | Path | None = None) -> list:
    """One independent run per value; every run keeps the base seed."""
    if axis not in field_names():
        raise ConfigurationError(f"unknown sweep axis {axis!r}")
    out = []
    for v in values:
        c = cfg.with_overrides(**{axis: v})
        sub = None if out_dir is None else Path(out_dir) / f"{axis}={v}"
        out.append(run_scenario(c, workers=workers, out_dir=sub))
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def rates_csv(agg: AggregateResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["drop", "ue", "streams", "rate_mmse", "rate_sic"])
    B = agg.config.bandwidth
    for d in agg.ok_drops:
        for k in range(d.rate_mmse.size):
            w.writerow([d.drop, k, int(d.streams[k]), _fmt(B * d.rate_mmse[k]),
                        _fmt(B * d.rate_sic[k])])
    return buf.getvalue()


def trace_csv(agg: AggregateResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "M", "ee", "sum_rate", "p_total", "feasible"])
    M_T = agg.config.n_trp
    for M, row in agg.curve().items():
        w.writerow([M_T - M, M, _fmt(row["ee"]), _fmt(row["sum_rate"]),
                    _fmt(row["p_total"]), _fmt(row["feasible"])])
    return buf.getvalue()


def trace_drops_csv(agg: AggregateResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["drop", "step", "M", "removed", "ee", "sum_rate", "p_total", "feasible"])
    for d in agg.ok_drops:
        for row in d.trace:
            w.writerow([d.drop] + [_fmt(x) for x in row])
    return buf.getvalue()


def write_outputs(agg: AggregateResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rates.csv").write_text(rates_csv(agg))
    (out / "trace.csv").write_text(trace_csv(agg))
    (out / "trace_drops.csv").write_text(trace_drops_csv(agg))
    (out / "summary.json").write_text(json.dumps(agg.summary(), indent=2, sort_keys=True))


def is_infeasible(agg: AggregateResult) -> bool:
    return bool(agg.errors) or any(d.outage for d in agg.ok_drops)

