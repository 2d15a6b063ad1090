"""Domain types and SoE bookkeeping for the integrated BESS + PV plant.

Units: powers in kW, energies in kWh, SoE in p.u. of the battery capacity,
frequency in Hz, time steps in seconds. Sign convention follows the grid
connection point: positive power is exported (battery discharging).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erfinv


class PlanningError(Exception):
    """Base class for errors raised by the planning toolkit."""


class DataError(PlanningError, ValueError):
    """Malformed or insufficient input data."""


class InfeasiblePlanError(PlanningError):
    """Raised when a planning problem has no feasible solution.

    ``family`` names the constraint family whose removal restores
    feasibility (``"droop_floor"``, ``"soe_box"``, ``"power_box"``,
    ``"smoothness"``) or ``"multiple"`` when no single family does.
    """

    def __init__(self, message: str, family: str = "unknown", context: str = ""):
        self.family = family
        self.context = context
        full = message if not context else f"{context}: {message}"
        super().__init__(f"{full} [binding family: {family}]")


def gauss_quantile(p: float) -> float:
    """Return sqrt(2) * erfinv(p), the coefficient used by every chance constraint."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"argument must lie in [0, 1), got {p}")
    return math.sqrt(2.0) * float(erfinv(p))


@dataclass(frozen=True)
class PlantConfig:
    pv_rated_power: float
    bess_rated_power: float
    bess_capacity: float
    soe_min: float = 0.0
    soe_max: float = 1.0
    nominal_frequency: float = 50.0
    max_freq_deviation: float = 0.2
    min_droop: float = 0.0
    dispatch_step: int = 900

    def __post_init__(self):
        if not 0.0 <= self.soe_min < self.soe_max <= 1.0:
            raise ValueError("SoE security interval must satisfy 0 <= soe_min < soe_max <= 1")
        for name in ("pv_rated_power", "bess_rated_power", "bess_capacity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_freq_deviation <= 0 or self.nominal_frequency <= 0:
            raise ValueError("frequency parameters must be positive")
        if self.min_droop < 0:
            raise ValueError("min_droop must be non-negative")
        if self.dispatch_step <= 0 or 3600 % self.dispatch_step:
            raise ValueError("dispatch_step must divide 3600")

    @classmethod
    def from_ratings(cls, pv_rated_power: float, bess_capacity: float,
                     bess_rated_power: float | None = None, statism_pct: float = 8.0,
                     **kwargs) -> "PlantConfig":
        """Build a config with the droop floor derived from the PV rating.

        The BESS power rating defaults to a 1C rating (kW = kWh / 1 h).
        """
        if bess_rated_power is None:
            bess_rated_power = bess_capacity
        f_n = kwargs.get("nominal_frequency", 50.0)
        alpha_min = min_droop_from_statism(statism_pct, pv_rated_power, f_n)
        return cls(pv_rated_power=pv_rated_power, bess_rated_power=bess_rated_power,
                   bess_capacity=bess_capacity, min_droop=alpha_min, **kwargs)

    @property
    def total_rated_power(self) -> float:
        return self.pv_rated_power + self.bess_rated_power

    @property
    def usable_capacity(self) -> float:
        """Equivalent capacity E_n (S^max - S^min) in kWh."""
        return self.bess_capacity * (self.soe_max - self.soe_min)

    @property
    def steps_per_hour(self) -> int:
        return 3600 // self.dispatch_step

    @property
    def steps_per_day(self) -> int:
        return 24 * self.steps_per_hour

    @property
    def soe_per_kw_step(self) -> float:
        """SoE change (p.u.) caused by 1 kW held for one dispatch step."""
        return self.dispatch_step / (3600.0 * self.bess_capacity)


@dataclass(frozen=True)
class PowerProfile:
    values: np.ndarray
    step: int
    start_step_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("power profile must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("power profile contains non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def energy_kwh(self) -> np.ndarray:
        return self.values * self.step / 3600.0


@dataclass(frozen=True)
class ForecastProfile:
    mean: np.ndarray
    sigma: np.ndarray
    step: int

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        if m.shape != s.shape or m.ndim != 1:
            raise ValueError("forecast mean and sigma must be 1-D arrays of equal length")
        if np.any(s < 0) or np.any(m < 0):
            raise ValueError("forecast mean and sigma must be non-negative")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ValueError("forecast contains non-finite values")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def from_confidence(cls, mean, confidence, step: int) -> "ForecastProfile":
        """Gaussian model with sigma = confidence / 3."""
        return cls(np.asarray(mean, float), np.asarray(confidence, float) / 3.0, step)

    def __len__(self):
        return len(self.mean)

    def slice(self, start: int, stop: int | None = None) -> "ForecastProfile":
        return ForecastProfile(self.mean[start:stop], self.sigma[start:stop], self.step)


@dataclass(frozen=True)
class PriceSet:
    """Market prices: energy prices in EUR/kWh per step, PFR capacity in EUR/(kW/Hz)/day."""

    energy_day_ahead: np.ndarray
    pfr_capacity: float
    intraday: np.ndarray
    penalty: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in ("energy_day_ahead", "intraday", "penalty"):
            a = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, a)
            arrays.append(a)
        if len({a.shape for a in arrays}) != 1:
            raise ValueError("price profiles must have equal lengths")
        if np.any(self.penalty < 0):
            raise ValueError("penalty prices must be non-negative")

    @classmethod
    def flat(cls, n: int, energy: float, pfr: float, intraday: float, penalty: float) -> "PriceSet":
        return cls(np.full(n, energy), pfr, np.full(n, intraday), np.full(n, penalty))

    def __len__(self):
        return len(self.energy_day_ahead)

    def slice(self, start: int, stop: int | None = None) -> "PriceSet":
        return PriceSet(self.energy_day_ahead[start:stop], self.pfr_capacity,
                        self.intraday[start:stop], self.penalty[start:stop])


@dataclass(frozen=True)
class RiskBudget:
    lambda_f_max: float = 0.05
    beta: float = 0.01
    gamma: float = 0.01
    lambda_bar_f_max: float = 0.003
    theta_h_override: float | None = None
    theta_r_override: float | None = None

    def __post_init__(self):
        for name in ("lambda_f_max", "beta", "gamma", "lambda_bar_f_max"):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.gamma >= 0.5:
            raise ValueError("gamma must be below 0.5")
        if not self.lambda_bar_f_max < self.lambda_f_max:
            raise ValueError("lambda_bar_f_max must be smaller than lambda_f_max")

    @property
    def lambda_max(self) -> float:
        return compose_failure(self.lambda_f_max, self.beta)

    @property
    def mu(self) -> float:
        return gauss_quantile(1.0 - self.lambda_f_max)

    @property
    def mu_max(self) -> float:
        return gauss_quantile(1.0 - self.lambda_bar_f_max)

    @property
    def theta_s(self) -> float:
        return gauss_quantile(1.0 - self.beta)

    @property
    def theta_b(self) -> float:
        return gauss_quantile(1.0 - 2.0 * self.gamma)

    @property
    def theta_h(self) -> float:
        return self.theta_s if self.theta_h_override is None else self.theta_h_override

    @property
    def theta_r(self) -> float:
        return self.theta_s if self.theta_r_override is None else self.theta_r_override


def compose_failure(lambda_f: float, beta: float) -> float:
    """Failure-rate bound of the whole battery from its PV and PFR shares."""
    return lambda_f + beta - lambda_f * beta


@dataclass(frozen=True)
class SoeState:
    value: float
    step_index: int = 0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("SoE must be finite")


def soe_step(s: SoeState, p_bess: float, cfg: PlantConfig) -> SoeState:
    """Advance the unitary-efficiency SoE model by one dispatch step."""
    new = s.value - cfg.dispatch_step / (3600.0 * cfg.bess_capacity) * p_bess
    return SoeState(new, s.step_index + 1)


def bess_power(p_market: float, p_pv: float, droop: float, delta_f: float) -> float:
    if droop < 0:
        raise ValueError("droop must be non-negative")
    return p_market - p_pv - droop * delta_f


def gcp_power(p_market: float, droop: float, delta_f: float) -> float:
    return p_market - droop * delta_f


def failure_rate(soe_trace: Iterable[SoeState] | Sequence[float] | np.ndarray,
                 cfg: PlantConfig) -> float:
    """Fraction of samples lying strictly outside [soe_min, soe_max]."""
    values = np.asarray([s.value if isinstance(s, SoeState) else s for s in soe_trace], dtype=float)
    if values.size == 0:
        raise ValueError("failure rate of an empty trace is undefined")
    outside = (values < cfg.soe_min) | (values > cfg.soe_max)
    return float(outside.mean())


def min_droop_from_statism(statism_pct: float, rated_power: float, f_n: float) -> float:
    """Droop floor (kW/Hz) implied by a maximum statism in percent."""
    if statism_pct <= 0:
        raise ValueError("statism must be positive")
    return 100.0 * rated_power / (statism_pct * f_n)


def soe_to_kwh(soe: float, capacity: float) -> float:
    return soe * capacity


def kwh_to_soe(energy: float, capacity: float) -> float:
    return energy / capacity


@dataclass(frozen=True)
class Smoothness:
    """Ramp limits: dispatch (kW per step) and planned SoE mean (p.u. per step)."""

    max_dispatch_ramp: float
    max_soe_ramp: float = 0.10

    @classmethod
    def table_defaults(cls, cfg: PlantConfig) -> "Smoothness":
        return cls(0.4 * cfg.total_rated_power, 0.10)


@dataclass(frozen=True)
class Alarm:
    day: int
    hour: int | None
    kind: str
    detail: str = field(default="")
