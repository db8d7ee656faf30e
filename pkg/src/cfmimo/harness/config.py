"""Scenario configuration: defaults, YAML loading, overrides and validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
import math
from pathlib import Path
from typing import Any

import yaml

from ..energy import PowerModelParams
from ..errors import ConfigurationError
from ..large_scale import ArrayGeometry, PropagationParams
from ..sleep_controller import RateConstraint
from ..topology import PlacementSpec

__all__ = ["ScenarioConfig", "load_config", "dump_config"]

MODES = ("cellular", "cellfree")
DETECTORS = ("mmse", "mmse_sic")
STREAM_POLICIES = ("fixed", "adaptive")
SWITCH_OFF = ("none", "random", "greedy", "rate_greedy")
PILOT_POLICIES = ("greedy", "random")


@dataclass(frozen=True)
class ScenarioConfig:
    # layout and deployment
    L: int = 7
    S: int = 3
    isd: float = 200.0
    h_trp: float = 25.0
    h_ue: float = 1.65
    n_trp_h: int = 4
    n_trp_v: int = 2
    n_ue: int = 1
    K: int = 21
    p_indoor: float = 0.0
    placement: str = "uniform_per_cell"
    hotspot_centers: tuple = ()
    hotspot_radius: float = 40.0
    hotspot_fraction: float = 2.0 / 3.0
    # propagation
    fc: float = 2e9
    iota0: float = 30.0
    alpha: float = 3.67
    delta_indoor: float = 20.0
    sigma_chi: float = 4.0
    d_dcorr: float = 9.0
    inter_trp_shadow_corr: float = 0.5
    sigma_zeta_az: float = 15.0
    sigma_zeta_el: float = 10.0
    shadowing: bool = True
    # radio resources
    bandwidth: float = 100e6
    noise_figure: float = 9.0
    tau_c: int = 200
    tau_p: int = 20
    p_pilot: float = 0.2
    p_trp: float = 240.0
    upsilon: float = -0.5
    k_trp: int | None = None  # defaults to tau_p
    # processing
    mode: str = "cellfree"
    detector: str = "mmse"
    streams: str = "fixed"
    n_streams: int | None = None  # fixed policy; defaults to n_ue
    theta_beta: tuple = (0.5,)
    theta_xi: tuple = (0.9,)
    n_str_cap: int | None = None
    pilot_policy: str = "greedy"
    # switch-off
    switch_off: str = "none"
    stop_on_decrease: bool = True
    stop_on_infeasible: bool = True
    m_forced: int | None = None
    rate_statistic: str = "mean"
    rate_threshold: float = 100e6
    rate_percentile: float = 10.0
    # power model
    p_bline: float = 500.0
    eta: float = 0.4
    varpi: float = 0.3
    p_fh_fix: float = 0.825
    p_fh_var: float = 0.01
    p_cpu_fix: float = 5.0
    p_cpu_pre: float = 0.1
    # Monte Carlo
    drops: int = 20
    n_blocks: int = 50
    n_blocks_search: int = 25
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hotspot_centers",
                           tuple(tuple(float(v) for v in c) for c in self.hotspot_centers))
        object.__setattr__(self, "theta_beta", _as_tuple(self.theta_beta))
        object.__setattr__(self, "theta_xi", _as_tuple(self.theta_xi))
        self.validate()

    # derived quantities -------------------------------------------------
    @property
    def n_trp(self) -> int:
        return self.L * self.S

    @property
    def noise_var(self) -> float:
        dbm = -174.0 + 10.0 * math.log10(self.bandwidth) + self.noise_figure
        return 10.0 ** ((dbm - 30.0) / 10.0)

    @property
    def k_trp_eff(self) -> int:
        return self.tau_p if self.k_trp is None else self.k_trp

    @property
    def n_streams_eff(self) -> int:
        return self.n_ue if self.n_streams is None else self.n_streams

    def propagation(self) -> PropagationParams:
        return PropagationParams(
            iota0=self.iota0, alpha=self.alpha, delta_indoor=self.delta_indoor,
            sigma_chi=self.sigma_chi, d_dcorr=self.d_dcorr,
            inter_trp_shadow_corr=self.inter_trp_shadow_corr,
            sigma_zeta_az=self.sigma_zeta_az, sigma_zeta_el=self.sigma_zeta_el,
            fc=self.fc)

    def power_model(self) -> PowerModelParams:
        return PowerModelParams(p_bline=self.p_bline, eta=self.eta, varpi=self.varpi,
                                p_fh_fix=self.p_fh_fix, p_fh_var=self.p_fh_var,
                                p_cpu_fix=self.p_cpu_fix, p_cpu_pre=self.p_cpu_pre,
                                p_trp_max=self.p_trp)

    def placement_spec(self) -> PlacementSpec:
        mode = "hotspot" if self.placement == "hotspot" else "uniform_per_cell"
        return PlacementSpec(mode=mode, hotspot_centers=self.hotspot_centers,
                             hotspot_radius=self.hotspot_radius,
                             hotspot_fraction=self.hotspot_fraction,
                             p_indoor=self.p_indoor)

    def trp_array(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_trp_h, self.n_trp_v)

    def ue_array(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_ue, 1)

    def constraint(self) -> RateConstraint:
        return RateConstraint(statistic=self.rate_statistic,
                              threshold=self.rate_threshold,
                              percentile=self.rate_percentile)

    # validation ---------------------------------------------------------
    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigurationError(msg)

        need(self.mode in MODES, f"mode must be one of {MODES}")
        need(self.detector in DETECTORS, f"detector must be one of {DETECTORS}")
        need(self.streams in STREAM_POLICIES, f"streams must be one of {STREAM_POLICIES}")
        need(self.switch_off in SWITCH_OFF, f"switch_off must be one of {SWITCH_OFF}")
        need(self.pilot_policy in PILOT_POLICIES,
             f"pilot_policy must be one of {PILOT_POLICIES}")
        need(self.placement in ("uniform_per_cell", "hotspot"),
             "placement must be uniform_per_cell or hotspot")
        for name in ("isd", "h_trp", "h_ue", "fc", "bandwidth", "p_pilot", "p_trp",
                     "p_bline", "hotspot_radius", "alpha"):
            need(getattr(self, name) > 0, f"{name} must be positive")
        for name in ("K", "n_trp_h", "n_trp_v", "n_ue", "tau_c", "tau_p", "drops",
                     "n_blocks", "n_blocks_search"):
            need(int(getattr(self, name)) >= 1, f"{name} must be >= 1")
        need(self.n_blocks >= 2 and self.n_blocks_search >= 2,
             "at least two blocks are needed for statistics")
        need(self.tau_p < self.tau_c, "tau_p must be shorter than tau_c")
        need(0.0 <= self.p_indoor <= 1.0, "p_indoor must lie in [0, 1]")
        need(0.0 <= self.varpi <= 1.0, "varpi must lie in [0, 1]")
        need(0.0 < self.eta <= 1.0, "eta must lie in (0, 1]")
        need(-1.0 <= self.upsilon <= 1.0, "upsilon must lie in [-1, 1]")
        need(1 <= self.n_streams_eff <= self.n_ue, "n_streams must lie in [1, n_ue]")
        need(self.n_streams_eff <= self.tau_p, "more streams than pilots")
        need(self.k_trp_eff >= 1, "k_trp must be >= 1")
        need(self.k_trp_eff * self.n_trp >= self.K, "k_trp too small to serve every UE")
        if self.m_forced is not None:
            need(1 <= self.m_forced <= self.n_trp, "m_forced must lie in [1, L*S]")
            need(self.m_forced * self.k_trp_eff >= self.K or self.mode == "cellular",
                 "m_forced TRPs cannot serve every UE")
        if self.n_str_cap is not None:
            need(self.n_str_cap >= self.K, "n_str_cap must be >= K")
        if self.placement == "hotspot":
            need(len(self.hotspot_centers) > 0, "hotspot placement needs centers")
        self.constraint()
        self.propagation()

    # io -----------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["hotspot_centers"] = [list(c) for c in self.hotspot_centers]
        d["theta_beta"] = list(self.theta_beta)
        d["theta_xi"] = list(self.theta_xi)
        return d

    def with_overrides(self, **kw) -> "ScenarioConfig":
        unknown = set(kw) - field_names()
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return replace(self, **{k: _coerce(k, v) for k, v in kw.items()})

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        flat = _flatten(data or {})
        unknown = set(flat) - field_names()
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**{k: _coerce(k, v) for k, v in flat.items()})


def field_names() -> set:
    return {f.name for f in fields(ScenarioConfig)}


def _as_tuple(v) -> tuple:
    if isinstance(v, (int, float)):
        return (float(v),)
    return tuple(float(x) for x in v)


def _flatten(data: dict) -> dict:
    """Sections (nested mappings) are merged into one flat namespace."""
    out: dict[str, Any] = {}
    for k, v in data.items():
        if isinstance(v, dict):
            for kk, vv in _flatten(v).items():
                if kk in out:
                    raise ConfigurationError(f"duplicate config key {kk!r}")
                out[kk] = vv
        else:
            if k in out:
                raise ConfigurationError(f"duplicate config key {k!r}")
            out[k] = v
    return out


_INT_FIELDS = {"L", "S", "n_trp_h", "n_trp_v", "n_ue", "K", "tau_c", "tau_p", "drops",
               "n_blocks", "n_blocks_search", "seed"}
_OPT_INT_FIELDS = {"k_trp", "n_streams", "n_str_cap", "m_forced"}
_BOOL_FIELDS = {"shadowing", "stop_on_decrease", "stop_on_infeasible"}
_STR_FIELDS = {"placement", "mode", "detector", "streams", "switch_off", "pilot_policy",
               "rate_statistic"}


def _coerce(name: str, value):
    """Turn YAML or command-line values into the field's type."""
    try:
        if name in _BOOL_FIELDS:
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return low in ("true", "1", "yes")
            return bool(value)
        if name in _OPT_INT_FIELDS:
            if value is None or (isinstance(value, str) and value.lower() in ("none", "null")):
                return None
            return _to_int(value)
        if name in _INT_FIELDS:
            return _to_int(value)
        if name in _STR_FIELDS:
            return str(value)
        if name in ("theta_beta", "theta_xi"):
            if isinstance(value, str):
                value = yaml.safe_load(value)
            return _as_tuple(value)
        if name == "hotspot_centers":
            if isinstance(value, str):
                value = yaml.safe_load(value)
            return tuple(tuple(float(v) for v in c) for c in value)
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {name}: {value!r}") from exc


def _to_int(value) -> int:
    f = float(value)
    if not f.is_integer():
        raise ValueError(value)
    return int(f)


def load_config(path: str | Path, overrides: dict | None = None) -> ScenarioConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    cfg = ScenarioConfig.from_dict(data or {})
    return cfg.with_overrides(**overrides) if overrides else cfg


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
