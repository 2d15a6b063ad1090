"""Flat ``key = value`` run configuration.

Defaults reproduce the reference parameter table: 15 min dispatch step,
40 % dispatch ramp, 10 % SoE-mean ramp, gamma = beta = 1 %, 8 % statism,
0.2 Hz maximum deviation, 5 % PFR failure budget (mu = 1.96) and a 0.3 %
reduced budget for the hourly planner.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..core import DataError, RiskBudget
from ..harness import ScenarioConfig
from .formats import read_kv, write_kv


@dataclass
class RunConfig:
    case: str = "A"
    mode: str = "dap"
    seed: int = 0
    day_count: int = 21
    train_days: int = 40
    pv_rated: float | None = None
    bess_capacity: float | None = None
    bess_rated_power: float | None = None
    statism_pct: float = 8.0
    soe_min: float = 0.0
    soe_max: float = 1.0
    max_freq_deviation: float = 0.2
    dispatch_step: int = 900
    lambda_f_max: float = 0.05
    beta: float = 0.01
    gamma: float = 0.01
    lambda_bar_f_max: float = 0.003
    max_dispatch_ramp_pct: float = 40.0
    max_soe_ramp: float = 0.10
    energy_price: float = 0.06
    intraday_price: float = 0.055
    penalty_price: float = 0.05
    pfr_price: float = 20.0
    rho: float = 0.1
    hysteresis: float = 0.0
    initial_soe: float = 0.5
    battery: str = "default"
    backend: str = "highs"
    forecast_error_pct: float = 2.0
    hour_ahead_error_pct: float = 1.0
    freq_sigma: float = 0.05
    terminal: bool = True
    loss_feedback: bool = True
    on_infeasible: str = "degrade"
    freq_csv: str | None = None
    pv_csv: str | None = None
    energy_price_csv: str | None = None
    intraday_price_csv: str | None = None
    penalty_price_csv: str | None = None

    def risk(self) -> RiskBudget:
        return RiskBudget(self.lambda_f_max, self.beta, self.gamma, self.lambda_bar_f_max)

    def to_scenario(self, **overrides) -> ScenarioConfig:
        kw = {f.name: getattr(self, f.name) for f in fields(ScenarioConfig)
              if hasattr(self, f.name) and f.name != "risk"}
        kw["risk"] = self.risk()
        kw.update(overrides)
        try:
            return ScenarioConfig(**kw)
        except ValueError as exc:
            raise DataError(f"invalid configuration: {exc}") from None


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(name: str, kind: str, text: str):
    if text.lower() == "none" and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            return _BOOL[text.lower()]
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except (KeyError, ValueError):
        raise DataError(f"config key {name}: cannot read {text!r} as {kind}") from None
    return text


def load_config(path, **overrides) -> RunConfig:
    """Read a config file; unknown keys are rejected. ``overrides`` win over the file."""
    kinds = {f.name: str(f.type) for f in fields(RunConfig)}
    values = {}
    if path is not None:
        if not Path(path).exists():
            raise DataError(f"{path}: no such config file")
        for k, v in read_kv(path).items():
            if k not in kinds:
                raise DataError(f"{path}: unknown config key {k!r}")
            values[k] = _coerce(k, kinds[k], v)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def dump_config(cfg: RunConfig, path) -> None:
    write_kv(path, dataclasses.asdict(cfg))
