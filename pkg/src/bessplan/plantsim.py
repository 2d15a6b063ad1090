"""Second-by-second plant simulation with a resistive battery model.

The battery is an EMF source in series with an SoE-dependent resistance, so
discharging drains more energy than it delivers and charging stores less
than it absorbs. The droop law sets the battery request every second; while
the SoE sits on or outside the security limits the droop term is dropped
(PFR suspended) until the SoE is back inside the interval.
"""

from __future__ import annotations

import functools
import gzip
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .core import DataError, PlantConfig, PowerProfile
from .freqmodel import FreqTrace

V_NOMINAL = 800.0          # V, only sets the current scale
ROUND_TRIP_TARGET = 0.92   # at C/2, between 10% and 90% SoE
_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class BatteryCircuit:
    """EMF (V) and resistance (ohm) tabulated on an SoE grid; ``ideal`` skips the losses."""

    soe_grid: np.ndarray
    emf: np.ndarray
    resistance: np.ndarray
    capacity: float
    rated_power: float
    ideal: bool = False

    def __post_init__(self):
        g = np.asarray(self.soe_grid, float)
        e = np.asarray(self.emf, float)
        r = np.asarray(self.resistance, float)
        if not (g.shape == e.shape == r.shape) or g.ndim != 1 or len(g) < 2:
            raise ValueError("circuit curves must be 1-D and share the SoE grid")
        if g[0] > 0.0 or g[-1] < 1.0 or np.any(np.diff(g) <= 0):
            raise ValueError("SoE grid must be increasing and cover [0, 1]")
        if np.any(np.diff(e) < 0) or np.any(e <= 0):
            raise ValueError("EMF must be positive and non-decreasing in SoE")
        if not self.ideal and np.any(r <= 0):
            raise ValueError("resistance must be positive")
        if self.capacity <= 0 or self.rated_power <= 0:
            raise ValueError("capacity and rated power must be positive")
        for name, v in (("soe_grid", g), ("emf", e), ("resistance", r)):
            object.__setattr__(self, name, v)

    @classmethod
    def ideal_for(cls, cfg: PlantConfig) -> "BatteryCircuit":
        return cls(_GRID, np.full_like(_GRID, V_NOMINAL), np.zeros_like(_GRID),
                   cfg.bess_capacity, cfg.bess_rated_power, ideal=True)

    def with_resistance_scale(self, k: float) -> "BatteryCircuit":
        return BatteryCircuit(self.soe_grid, self.emf, self.resistance * k, self.capacity,
                              self.rated_power, self.ideal)


@njit(cache=True)
def _step(s, p_req, dt, cap, rated, ideal, grid, emf, res):
    """One battery step. Returns (new_soe, delivered_kw, loss_kw, saturated)."""
    sat = False
    p = p_req
    if p > rated:
        p, sat = rated, True
    elif p < -rated:
        p, sat = -rated, True
    cap_j = cap * 3.6e6
    if ideal:
        drain = p  # kW leaving the store
        loss = 0.0
    else:
        e = np.interp(s, grid, emf)
        r = np.interp(s, grid, res)
        p_w = p * 1000.0
        p_max = e * e / (4.0 * r)
        if p_w > p_max:
            p_w, sat = p_max, True
        # conjugate root form stays accurate as r -> 0
        cur = 2.0 * p_w / (e + np.sqrt(max(e * e - 4.0 * r * p_w, 0.0)))
        drain = e * cur / 1000.0
        loss = r * cur * cur / 1000.0
        p = drain - loss
    s_new = s - drain * 1000.0 * dt / cap_j
    if s_new < 0.0 or s_new > 1.0:
        # hard stop: deliver only what brings the store exactly to the limit
        bound = 0.0 if s_new < 0.0 else 1.0
        drain = (s - bound) * cap_j / (1000.0 * dt)
        if ideal:
            p, loss = drain, 0.0
        else:
            e = np.interp(s, grid, emf)
            r = np.interp(s, grid, res)
            cur = drain * 1000.0 / e
            loss = r * cur * cur / 1000.0
            p = drain - loss
        s_new = bound
        sat = True
    return s_new, p, loss, sat


def battery_step(circ: BatteryCircuit, s: float, p_terminal_request: float,
                 dt: float) -> tuple[float, float, float]:
    """Advance the battery by ``dt`` seconds at a terminal power request (kW, discharge positive).

    Returns ``(new_soe, delivered_kw, loss_kw)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not 0.0 <= s <= 1.0:
        raise ValueError("SoE must lie in [0, 1]")
    s_new, p, loss, _ = _step(float(s), float(p_terminal_request), float(dt), circ.capacity,
                              circ.rated_power, circ.ideal, circ.soe_grid, circ.emf, circ.resistance)
    return float(s_new), float(p), float(loss)


def round_trip_efficiency(circ: BatteryCircuit, c_rate: float = 0.5, lo: float = 0.1,
                          hi: float = 0.9, dt: float = 10.0) -> float:
    """Energy out over energy in for a constant-power charge lo->hi then discharge hi->lo."""
    p = c_rate * circ.capacity
    s, e_in = lo, 0.0
    while s < hi:
        s, d, _ = battery_step(circ, s, -p, dt)
        e_in -= d * dt
    e_out = 0.0
    while s > lo:
        s, d, _ = battery_step(circ, s, p, dt)
        e_out += d * dt
    return e_out / e_in


@functools.lru_cache(maxsize=1)
def _calibrated_ratio() -> float:
    """Resistance scale (ohm per V^2/W) giving the target round trip; size independent."""
    ref = BatteryCircuit(_GRID, _default_emf(), _shape(), 1000.0, 1000.0)
    base = V_NOMINAL ** 2 / (1000.0 * 1000.0)

    def err(k):
        return round_trip_efficiency(ref.with_resistance_scale(k * base)) - ROUND_TRIP_TARGET

    return brentq(err, 1e-4, 0.5, xtol=1e-7)


def _default_emf() -> np.ndarray:
    return V_NOMINAL * (0.9 + 0.2 * _GRID)


def _shape() -> np.ndarray:
    return 1.0 + (2.0 * _GRID - 1.0) ** 2


def default_circuit(cfg: PlantConfig) -> BatteryCircuit:
    """Linear EMF from 0.9 to 1.1 V_nom, U-shaped resistance, about 92 % round trip at C/2."""
    r0 = _calibrated_ratio() * V_NOMINAL ** 2 / (1000.0 * cfg.bess_rated_power)
    return BatteryCircuit(_GRID, _default_emf(), r0 * _shape(), cfg.bess_capacity, cfg.bess_rated_power)


@dataclass(frozen=True)
class SimTrace:
    """Per-second records. ``soe`` is the state at the start of each second."""

    delta_f: np.ndarray
    p_pv: np.ndarray
    p_request: np.ndarray
    p_delivered: np.ndarray
    losses: np.ndarray
    soe: np.ndarray
    in_failure: np.ndarray
    pfr_suspended: np.ndarray
    final_soe: float

    def __len__(self):
        return len(self.soe)

    @property
    def failure_rate(self) -> float:
        return float(np.mean(self.in_failure)) if len(self) else 0.0

    def concat(self, other: "SimTrace") -> "SimTrace":
        return SimTrace(*(np.concatenate([getattr(self, f), getattr(other, f)])
                          for f in ("delta_f", "p_pv", "p_request", "p_delivered", "losses", "soe",
                                    "in_failure", "pfr_suspended")), other.final_soe)

    def to_csv(self, path, start_s: int = 0) -> None:
        """Write ``t_s,delta_f_hz,p_pv_kw,p_b_kw,soe,failure``; gzip when the name ends in .gz."""
        opener = gzip.open if str(path).endswith(".gz") else open
        t = start_s + np.arange(len(self))
        with opener(path, "wt") as fh:
            fh.write("t_s,delta_f_hz,p_pv_kw,p_b_kw,soe,failure\n")
            for row in zip(t, self.delta_f, self.p_pv, self.p_delivered, self.soe, self.in_failure):
                fh.write(f"{row[0]},{row[1]:.6g},{row[2]:.6g},{row[3]:.6g},{row[4]:.9f},{int(row[5])}\n")


def read_trace_csv(path) -> dict:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {h: data[:, i] for i, h in enumerate(header)}


@njit(cache=True)
def _run(setpoint, pv, df, droop, s0, suspended0, dt, cap, rated, ideal, grid, emf, res,
         s_min, s_max, hyst, out_req, out_del, out_loss, out_soe, out_fail, out_susp):
    s = s0
    susp = suspended0
    for t in range(len(setpoint)):
        fail = s >= s_max or s <= s_min
        if fail:
            susp = True
        elif susp and s_min + hyst < s < s_max - hyst:
            susp = False
        req = setpoint[t] - pv[t]
        if not susp:
            req -= droop * df[t]
        s_new, p, loss, _ = _step(s, req, dt, cap, rated, ideal, grid, emf, res)
        out_req[t] = req
        out_del[t] = p
        out_loss[t] = loss
        out_soe[t] = s
        out_fail[t] = fail
        out_susp[t] = susp
        s = s_new
    return s, susp


def simulate(setpoint_per_s: np.ndarray, pv_per_s: np.ndarray, delta_f: np.ndarray, droop: float,
             circ: BatteryCircuit, cfg: PlantConfig, initial_soe: float, dt: float = 1.0,
             suspended: bool = False, hysteresis: float = 0.0) -> tuple[SimTrace, bool]:
    """Run the closed loop over aligned per-second arrays.

    Returns the trace and whether PFR is still suspended at the end (so a
    following segment can continue seamlessly).
    """
    n = len(setpoint_per_s)
    if len(pv_per_s) != n or len(delta_f) != n:
        raise DataError("setpoint, PV and frequency series must have equal length")
    if droop < 0:
        raise ValueError("droop must be non-negative")
    if not 0.0 <= initial_soe <= 1.0:
        raise ValueError("initial SoE must lie in [0, 1]")
    if hysteresis < 0 or 2 * hysteresis >= cfg.soe_max - cfg.soe_min:
        raise ValueError("hysteresis must be non-negative and smaller than half the interval")
    out = [np.empty(n) for _ in range(4)] + [np.empty(n, np.bool_) for _ in range(2)]
    sp = np.ascontiguousarray(setpoint_per_s, float)
    pv = np.ascontiguousarray(pv_per_s, float)
    df = np.ascontiguousarray(delta_f, float)
    s_end, susp = _run(sp, pv, df, float(droop), float(initial_soe), bool(suspended), float(dt),
                       circ.capacity, circ.rated_power, circ.ideal, circ.soe_grid, circ.emf,
                       circ.resistance, cfg.soe_min, cfg.soe_max, float(hysteresis), *out)
    req, dlv, loss, soe, fail, sus = out
    return SimTrace(df.copy(), pv.copy(), req, dlv, loss, soe, fail, sus, float(s_end)), bool(susp)


def expand_setpoints(values: np.ndarray, step: int, dt: float = 1.0) -> np.ndarray:
    """Hold each dispatch set-point over its step at the simulation resolution."""
    reps = step / dt
    if abs(reps - round(reps)) > 1e-9:
        raise ValueError("dispatch step must be a multiple of the simulation step")
    return np.repeat(np.asarray(values, float), int(round(reps)))


def run_day(plan_source, freq: FreqTrace, pv_actual: PowerProfile, circ: BatteryCircuit,
            cfg: PlantConfig, initial_soe: float, droop: float | None = None,
            hysteresis: float = 0.0) -> SimTrace:
    """Simulate one day at the frequency-trace resolution.

    ``plan_source`` is a ``DayPlan`` (its dispatch and droop are used), a
    ``PowerProfile`` of dispatch set-points (``droop`` required), or a list of
    24 hourly set-point arrays.
    """
    dt = freq.sample_period
    n = int(round(86400 / dt))
    if len(freq.samples) != n or len(pv_actual) * pv_actual.step != 86400 or pv_actual.step != dt:
        raise DataError(f"frequency and PV traces must cover one day at {dt} s without gaps")
    if hasattr(plan_source, "dispatch"):
        values = plan_source.dispatch.values
        droop = plan_source.droop if droop is None else droop
    elif isinstance(plan_source, PowerProfile):
        values = plan_source.values
    else:
        values = np.concatenate([np.asarray(h, float) for h in plan_source])
    if droop is None:
        raise ValueError("droop is required when the plan source carries none")
    if len(values) != cfg.steps_per_day:
        raise DataError("dispatch set-points must cover the whole day")
    sp = expand_setpoints(values, cfg.dispatch_step, dt)
    trace, _ = simulate(sp, pv_actual.values, freq.deviation(cfg.nominal_frequency), droop, circ, cfg,
                        initial_soe, dt, hysteresis=hysteresis)
    return trace
