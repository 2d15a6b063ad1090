"""Multi-day closed-loop experiments: plan, simulate, settle, repeat.

Each day starts from the SoE the simulator left at the previous midnight.
In ``dap`` mode the day-ahead plan runs unchanged; in ``dap-hap`` mode the
hourly planner corrects it every hour from the measured SoE and only the
first hour of each correction is executed.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import (DataError, InfeasiblePlanError, PlantConfig, PowerProfile, PriceSet,
                   RiskBudget, Smoothness)
from .dap import DapInput, DayPlan, plan_day
from .freqmodel import FreqTrace, WfForecaster, sigma_table
from .hap import HapInput, normalize_weights, plan_hour
from .io.synth import PvData, synth_freq, synth_pv_data
from .plantsim import BatteryCircuit, SimTrace, default_circuit, expand_setpoints, simulate

MODES = ("dap", "dap-hap")

# (PV kW, BESS kWh); the BESS is rated 1C
CASES = {
    "A": (500.0, 1500.0),
    "B": (500.0, 1000.0),
    "C": (1000.0, 1000.0),
    "D": (1500.0, 500.0),
    "E": (1500.0, 320.0),
}

DEFAULT_PRICES = dict(energy=0.06, intraday=0.055, penalty=0.05, pfr=20.0)
DEGRADE_LADDER = (0.10, 0.20, 0.35, 0.50)


@dataclass(frozen=True)
class ScenarioData:
    """Inputs covering ``train_days`` of frequency history followed by the simulated days."""

    pv: PvData
    freq: FreqTrace
    train_days: int
    prices: list | None = None   # one PriceSet per simulated day


@dataclass(frozen=True)
class ScenarioConfig:
    case: str = "A"
    mode: str = "dap"
    day_count: int = 21
    seed: int = 0
    pv_rated: float | None = None
    bess_capacity: float | None = None
    bess_rated_power: float | None = None
    statism_pct: float = 8.0
    soe_min: float = 0.0
    soe_max: float = 1.0
    max_freq_deviation: float = 0.2
    dispatch_step: int = 900
    train_days: int = 40
    battery: str = "default"            # "default" (lossy circuit) or "ideal"
    backend: str = "highs"
    risk: RiskBudget = field(default_factory=RiskBudget)
    max_dispatch_ramp_pct: float = 40.0
    max_soe_ramp: float = 0.10
    rho: float = 0.1
    hysteresis: float = 0.0
    initial_soe: float = 0.5
    forecast_error_pct: float = 2.0
    hour_ahead_error_pct: float = 1.0
    freq_sigma: float = 0.05
    energy_price: float = DEFAULT_PRICES["energy"]
    intraday_price: float = DEFAULT_PRICES["intraday"]
    penalty_price: float = DEFAULT_PRICES["penalty"]
    pfr_price: float = DEFAULT_PRICES["pfr"]
    on_infeasible: str = "degrade"      # or "raise"
    terminal: bool = True               # end-of-day recentring in both planners
    loss_feedback: bool = True          # feed measured battery losses into the planners' SoE means
    keep_traces: bool = False

    def __post_init__(self):
        if self.day_count < 1:
            raise ValueError("day_count must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.battery not in ("default", "ideal"):
            raise ValueError("battery must be 'default' or 'ideal'")
        if self.on_infeasible not in ("degrade", "raise"):
            raise ValueError("on_infeasible must be 'degrade' or 'raise'")
        if self.pv_rated is None or self.bess_capacity is None:
            if self.case not in CASES:
                raise ValueError(f"unknown case {self.case!r}; presets are {sorted(CASES)}")
            pv, e = CASES[self.case]
            object.__setattr__(self, "pv_rated", self.pv_rated if self.pv_rated is not None else pv)
            object.__setattr__(self, "bess_capacity",
                               self.bess_capacity if self.bess_capacity is not None else e)
        if not 0.0 <= self.initial_soe <= 1.0:
            raise ValueError("initial_soe must lie in [0, 1]")

    @classmethod
    def preset(cls, case: str, **kw) -> "ScenarioConfig":
        if case not in CASES:
            raise ValueError(f"unknown case {case!r}; presets are {sorted(CASES)}")
        return cls(case=case, **kw)

    def plant(self) -> PlantConfig:
        return PlantConfig.from_ratings(self.pv_rated, self.bess_capacity, self.bess_rated_power,
                                        self.statism_pct, soe_min=self.soe_min, soe_max=self.soe_max,
                                        max_freq_deviation=self.max_freq_deviation,
                                        dispatch_step=self.dispatch_step)

    def smoothness(self, cfg: PlantConfig) -> Smoothness:
        return Smoothness(self.max_dispatch_ramp_pct / 100.0 * cfg.total_rated_power, self.max_soe_ramp)

    def day_prices(self, cfg: PlantConfig) -> PriceSet:
        return PriceSet.flat(cfg.steps_per_day, self.energy_price, self.pfr_price,
                             self.intraday_price, self.penalty_price)


@dataclass
class DayRecord:
    day: int
    droop: float
    min_droop: float
    initial_soe: float
    final_soe: float
    failure_rate: float
    pcr: float
    dispatch: float
    penalty: float
    dap_status: str
    hap_statuses: dict = field(default_factory=dict)
    soe_thresholds: tuple = (0.0, 1.0)

    @property
    def total(self) -> float:
        return self.pcr + self.dispatch + self.penalty


@dataclass
class SimReport:
    case: str
    mode: str
    failure_rate_pct: float
    total: float
    pcr: float
    dispatch: float
    penalty: float
    days: list
    figure_data: dict = field(default_factory=dict)
    alarms: list = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def droops(self) -> np.ndarray:
        return np.array([d.droop for d in self.days])

    def summary_row(self) -> dict:
        return dict(case=self.case, mode=self.mode, lambda_pct=self.failure_rate_pct, total=self.total,
                    pcr=self.pcr, dispatch=self.dispatch, penalty=self.penalty)

    def fingerprint(self) -> tuple:
        """Everything that must repeat bit for bit under identical seeds."""
        per_day = tuple(tuple(sorted(asdict(d).items(), key=lambda kv: kv[0])).__repr__() for d in self.days)
        figs = tuple((k, np.asarray(v).tobytes()) for k, v in sorted(self.figure_data.items()) if k != "traces")
        return tuple(self.summary_row().values()), per_day, figs


def synth_scenario_data(sc: ScenarioConfig) -> ScenarioData:
    """Seeded synthetic PV and frequency for the scenario (frequency includes the training days)."""
    ss = np.random.SeedSequence(sc.seed)
    pv_seed, f_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    pv = synth_pv_data(pv_seed, sc.day_count, sc.pv_rated, sc.forecast_error_pct, sc.hour_ahead_error_pct,
                       step=sc.dispatch_step)
    freq = synth_freq(f_seed, sc.train_days + sc.day_count, sigma_target=sc.freq_sigma,
                      max_dev=sc.max_freq_deviation)
    return ScenarioData(pv, freq, sc.train_days)


def fit_frequency_models(freq: FreqTrace, f_n: float, train_days: int) -> dict:
    """AR models of the window integral for every horizon 1..24 h, fitted on the training days."""
    train = freq.window(0.0, train_days * 86400.0)
    models = {}
    sigma_table(train, f_n, range(1, 25), models=models)
    return models


def _emergency_plan(inp: DapInput) -> DayPlan:
    """Minimum droop, dispatch following the forecast inside the power limits."""
    cfg = inp.cfg
    reserve = cfg.min_droop * cfg.max_freq_deviation
    lo = np.maximum(0.0, inp.forecast.mean - cfg.bess_rated_power + reserve)
    hi = np.minimum(cfg.total_rated_power, inp.forecast.mean + cfg.bess_rated_power - reserve)
    pm = np.clip(inp.forecast.mean, lo, np.maximum(lo, hi))
    tau_h = cfg.dispatch_step / 3600.0
    gain = float(np.sum(inp.prices.energy_day_ahead * tau_h * pm) + inp.prices.pfr_capacity * cfg.min_droop)
    mean = np.full(len(pm) + 1, inp.initial_soe)
    return DayPlan(PowerProfile(pm, cfg.dispatch_step, 0), cfg.min_droop, (cfg.soe_min, cfg.soe_max), gain,
                   (cfg.usable_capacity, 0.0), mean, np.zeros(len(pm) + 1))


def _plan_with_recovery(inp: DapInput, sc: ScenarioConfig, context: str, alarms: list) -> tuple[DayPlan, str]:
    """Nominal plan; else drop the end-of-day target; else widen the PFR risk budget step by step."""
    try:
        return plan_day(inp, sc.backend, context), "optimal"
    except InfeasiblePlanError as exc:
        if sc.on_infeasible == "raise":
            raise
        first = exc
    if inp.terminal:
        try:
            plan = plan_day(replace(inp, terminal=False), sc.backend, context)
            alarms.append(f"{context}: end-of-day recentring dropped ({first.family})")
            return plan, "no_terminal"
        except InfeasiblePlanError:
            pass
    for lam in DEGRADE_LADDER:
        if lam <= inp.risk.lambda_f_max:
            continue
        risk = replace(inp.risk, lambda_f_max=lam)
        try:
            plan = plan_day(replace(inp, risk=risk, terminal=False), sc.backend, context)
        except InfeasiblePlanError:
            continue
        alarms.append(f"{context}: day-ahead plan degraded to lambda_f={lam} ({first.family})")
        return plan, f"degraded:{lam}"
    alarms.append(f"{context}: day-ahead plan infeasible at every risk level; emergency plan")
    return _emergency_plan(inp), "emergency"


def run_scenario(sc: ScenarioConfig, data: ScenarioData | None = None, models: dict | None = None,
                 circuit: BatteryCircuit | None = None) -> SimReport:
    t_start = time.perf_counter()
    cfg = sc.plant()
    if data is None:
        data = synth_scenario_data(sc)
    steps = cfg.steps_per_day
    n_h = cfg.steps_per_hour
    day_s = 86400
    dt = data.freq.sample_period
    if dt != 1.0 or data.pv.actual.step != 1:
        raise DataError("the closed loop runs at 1 s; resample frequency and PV to 1 s")
    if len(data.freq.samples) < (data.train_days + sc.day_count) * day_s:
        raise DataError("frequency trace does not cover training plus simulated days")
    if len(data.pv.day_ahead) < sc.day_count * steps or len(data.pv.actual) < sc.day_count * day_s:
        raise DataError("PV data does not cover the simulated days")
    if models is None:
        models = fit_frequency_models(data.freq, cfg.nominal_frequency, data.train_days)
    fc = WfForecaster(data.freq, cfg.nominal_frequency, models)
    circ = circuit or (default_circuit(cfg) if sc.battery == "default" else BatteryCircuit.ideal_for(cfg))
    sm = sc.smoothness(cfg)
    dev = data.freq.deviation(cfg.nominal_frequency)
    tau_h = cfg.dispatch_step / 3600.0

    soe = sc.initial_soe
    suspended = False
    days, alarms = [], []
    fig = {k: [] for k in ("planned_pm", "executed_pm", "planned_soe", "realized_soe",
                           "pv_actual", "p_bess", "droop")}
    fail_count = 0
    last_setpoint = None
    loss_rate = 0.0    # p.u. per dispatch step, from the last simulated day
    traces = []
    for d in range(sc.day_count):
        ctx = f"day {d}"
        prices = data.prices[d] if data.prices is not None else sc.day_prices(cfg)
        t0 = (data.train_days + d) * day_s
        w_day, _ = fc.predict(24, t0)
        s0 = float(np.clip(soe, cfg.soe_min, cfg.soe_max))
        inp = DapInput(data.pv.day_ahead.slice(d * steps, (d + 1) * steps), w_day, models[24].sigma_w,
                       prices, s0, cfg, sc.risk, sm, sc.terminal, loss_rate)
        plan, dap_status = _plan_with_recovery(inp, sc, ctx, alarms)
        pv_s = data.pv.actual.values[d * day_s:(d + 1) * day_s]
        df_s = dev[t0:t0 + day_s]

        if sc.mode == "dap":
            executed = plan.dispatch.values.copy()
            trace, suspended = simulate(expand_setpoints(executed, cfg.dispatch_step), pv_s, df_s, plan.droop,
                                        circ, cfg, soe, suspended=suspended, hysteresis=sc.hysteresis)
            hap_statuses = {}
        else:
            weights = normalize_weights(prices, cfg, sc.risk, sc.rho)
            executed = np.empty(steps)
            hap_statuses = {}
            parts = []
            for j in range(24):
                now = t0 + j * 3600
                wf_h = fc.predict(1, now)
                wf_r = fc.predict(23 - j, now) if j < 23 else (0.0, 1.0)
                k0 = d * steps + j * n_h
                hin = HapInput(plan, j, soe, data.pv.hour_ahead.slice(k0, (d + 1) * steps), wf_h, wf_r,
                               prices.slice(j * n_h), cfg, weights, sc.risk, sm, last_setpoint,
                               loss_rate, None if sc.terminal else 0.0)
                hp = plan_hour(hin, sc.backend, f"{ctx} hour {j}")
                hap_statuses[hp.status] = hap_statuses.get(hp.status, 0) + 1
                if hp.alarm and hp.status == "fallback":
                    alarms.append(hp.alarm)
                executed[j * n_h:(j + 1) * n_h] = hp.executable
                last_setpoint = float(hp.executable[-1])
                seg = slice(j * 3600, (j + 1) * 3600)
                part, suspended = simulate(expand_setpoints(hp.executable, cfg.dispatch_step), pv_s[seg],
                                           df_s[seg], plan.droop, circ, cfg, soe, suspended=suspended,
                                           hysteresis=sc.hysteresis)
                soe = part.final_soe
                parts.append(part)
            trace = parts[0]
            for p in parts[1:]:
                trace = trace.concat(p)

        delta = executed - plan.dispatch.values
        pcr = prices.pfr_capacity * plan.droop
        dispatch = float(np.sum(prices.energy_day_ahead * tau_h * plan.dispatch.values)
                         + np.sum(prices.intraday * tau_h * np.maximum(delta, 0.0)))
        penalty = -float(np.sum(prices.penalty * tau_h * np.abs(delta)))
        fail_count += int(trace.in_failure.sum())
        days.append(DayRecord(d, plan.droop, cfg.min_droop, s0, trace.final_soe, trace.failure_rate, pcr,
                              dispatch, penalty, dap_status, hap_statuses, tuple(plan.soe_thresholds)))
        soe = trace.final_soe
        if sc.loss_feedback:
            loss_rate = float(trace.losses.sum()) / 3600.0 / cfg.bess_capacity / steps

        step_s = cfg.dispatch_step
        fig["planned_pm"].append(plan.dispatch.values)
        fig["executed_pm"].append(executed)
        fig["planned_soe"].append(plan.soe_mean)
        fig["realized_soe"].append(np.append(trace.soe[::step_s], trace.final_soe))
        fig["pv_actual"].append(pv_s.reshape(steps, step_s).mean(axis=1))
        fig["p_bess"].append(trace.p_delivered.reshape(steps, step_s).mean(axis=1))
        fig["droop"].append(plan.droop)
        if sc.keep_traces:
            traces.append(trace)

    figure_data = {k: np.asarray(v) for k, v in fig.items()}
    if sc.keep_traces:
        figure_data["traces"] = traces
    pcr = sum(r.pcr for r in days)
    disp = sum(r.dispatch for r in days)
    pen = sum(r.penalty for r in days)
    lam = 100.0 * fail_count / (sc.day_count * day_s)
    return SimReport(sc.case, sc.mode, lam, pcr + disp + pen, pcr, disp, pen, days, figure_data, alarms,
                     time.perf_counter() - t_start)


@dataclass
class ModeComparison:
    case: str
    droop_dap: np.ndarray
    droop_hap: np.ndarray
    lambda_dap_pct: float
    lambda_hap_pct: float
    total_delta: float
    pcr_delta: float
    dispatch_delta: float
    penalty_delta: float

    @property
    def hap_not_worse(self) -> bool:
        return self.lambda_hap_pct <= self.lambda_dap_pct

    @property
    def dap_total_higher(self) -> bool:
        """The usual pattern: hourly corrections trade revenue for reliability (reported, not enforced)."""
        return self.total_delta <= 0


def compare_modes(dap_report: SimReport, hap_report: SimReport) -> ModeComparison:
    if dap_report.mode != "dap" or hap_report.mode != "dap-hap":
        raise ValueError("expected a dap report followed by a dap-hap report")
    if len(dap_report.days) != len(hap_report.days):
        raise ValueError("reports cover different numbers of days")
    return ModeComparison(dap_report.case, dap_report.droops, hap_report.droops,
                          dap_report.failure_rate_pct, hap_report.failure_rate_pct,
                          hap_report.total - dap_report.total, hap_report.pcr - dap_report.pcr,
                          hap_report.dispatch - dap_report.dispatch, hap_report.penalty - dap_report.penalty)


def run_pair(sc: ScenarioConfig) -> tuple[SimReport, SimReport, ModeComparison]:
    """Run both modes on identical data and models."""
    data = synth_scenario_data(sc)
    cfg = sc.plant()
    models = fit_frequency_models(data.freq, cfg.nominal_frequency, data.train_days)
    a = run_scenario(replace(sc, mode="dap"), data, models)
    b = run_scenario(replace(sc, mode="dap-hap"), data, models)
    return a, b, compare_modes(a, b)
