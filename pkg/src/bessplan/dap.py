"""Day-ahead planning: dispatch profile, droop and capacity partition for one day.

The battery capacity between the security limits is split into a PV share
``[S_d^min, S_d^max]`` that absorbs forecast errors and a PFR share whose
size and centring come from the predicted frequency integral. Every
constraint below is linear in the decision variables: the chance
constraints on the PV share are multiplied through by its (variable) size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (ForecastProfile, InfeasiblePlanError, PlantConfig, PowerProfile, PriceSet,
                   RiskBudget, Smoothness, compose_failure)
from .optsolver import DEFAULT_BACKEND, LinearProgram, LPBuilder, solve_lp

FAMILIES = ("droop_floor", "soe_box", "power_box", "smoothness", "terminal")


@dataclass(frozen=True)
class DapInput:
    forecast: ForecastProfile
    wf_day_pred: float
    sigma_w24: float
    prices: PriceSet
    initial_soe: float
    cfg: PlantConfig
    risk: RiskBudget = field(default_factory=RiskBudget)
    smoothness: Smoothness | None = None
    terminal: bool = True          # end the day with the PV-share mean back at its centre
    loss_per_step: float = 0.0     # expected self-consumption drift, p.u. per dispatch step

    def __post_init__(self):
        n = self.cfg.steps_per_day
        if len(self.forecast) != n or len(self.prices) != n:
            raise ValueError(f"day-ahead inputs must cover {n} dispatch steps")
        if self.forecast.step != self.cfg.dispatch_step:
            raise ValueError("forecast step differs from the dispatch step")
        if not self.cfg.soe_min <= self.initial_soe <= self.cfg.soe_max:
            raise ValueError("initial SoE lies outside the security interval")
        if not self.sigma_w24 > 0:
            raise ValueError("sigma_w24 must be positive")
        if self.loss_per_step < 0:
            raise ValueError("loss_per_step must be non-negative")
        if self.smoothness is None:
            object.__setattr__(self, "smoothness", Smoothness.table_defaults(self.cfg))

    @property
    def horizon(self) -> int:
        return self.cfg.steps_per_day


@dataclass(frozen=True)
class DayPlan:
    dispatch: PowerProfile
    droop: float
    soe_thresholds: tuple
    expected_gain: float
    partition: tuple
    soe_mean: np.ndarray = None
    soe_sigma: np.ndarray = None

    @property
    def pv_capacity(self) -> float:
        return self.partition[0]

    @property
    def pfr_capacity(self) -> float:
        return self.partition[1]


@dataclass
class DapLayout:
    """Column indices of the DAP decision variables."""

    pm: np.ndarray
    alpha: int
    s_min: int
    s_max: int


def _pv_sigma_path(forecast: ForecastProfile, cfg: PlantConfig) -> np.ndarray:
    """Std of the cumulative PV-driven SoE change (p.u. of E_n), N + 1 points."""
    var = np.concatenate([[0.0], np.cumsum(forecast.sigma ** 2)])
    return cfg.soe_per_kw_step * np.sqrt(var)


def _mean_path(inp: DapInput, pm: np.ndarray) -> np.ndarray:
    c = inp.cfg.soe_per_kw_step
    k = np.arange(len(pm) + 1)
    return inp.initial_soe - c * np.concatenate([[0.0], np.cumsum(pm - inp.forecast.mean)]) \
        - inp.loss_per_step * k


def build_dap(inp: DapInput, drop: tuple = ()) -> tuple[LinearProgram, DapLayout]:
    """Assemble the day-ahead LP. ``drop`` removes whole constraint families (diagnostics)."""
    cfg, risk, sm = inp.cfg, inp.risk, inp.smoothness
    N = inp.horizon
    if len(inp.forecast) != N:
        raise ValueError("forecast horizon mismatch")
    tau_h = cfg.dispatch_step / 3600.0
    c = cfg.soe_per_kw_step
    E = cfg.bess_capacity
    p_hat = inp.forecast.mean
    sig = inp.forecast.sigma
    theta_s, theta_b, mu = risk.theta_s, risk.theta_b, risk.mu

    lb = LPBuilder()
    pm = lb.add_vars("pm", N, 0.0, cfg.total_rated_power, inp.prices.energy_day_ahead * tau_h)
    alpha_lo = 0.0 if "droop_floor" in drop else cfg.min_droop
    alpha = lb.add_var("alpha", alpha_lo, np.inf, inp.prices.pfr_capacity)
    s_min = lb.add_var("soe_d_min", cfg.soe_min, cfg.soe_max)
    s_max = lb.add_var("soe_d_max", cfg.soe_min, cfg.soe_max)

    lb.add_row({s_min: 1.0, s_max: -1.0}, "<=", 0.0, "partition")
    # centring of the PFR share on the predicted integral and its sizing at quantile mu
    lb.add_row({alpha: 2.0 * inp.wf_day_pred, s_max: E, s_min: E}, "=",
               E * (cfg.soe_max + cfg.soe_min), "pfr_coupling")
    lb.add_row({alpha: 2.0 * mu * inp.sigma_w24, s_max: E, s_min: -E}, "=",
               E * (cfg.soe_max - cfg.soe_min), "pfr_coupling")

    if "soe_box" not in drop:
        s_path = _pv_sigma_path(inp.forecast, cfg)
        cum_hat = np.concatenate([[0.0], np.cumsum(p_hat)])
        for k in range(N + 1):
            base = inp.initial_soe + c * cum_hat[k] - inp.loss_per_step * k
            up = {int(j): -c for j in pm[:k]}
            up[s_max] = -1.0
            lb.add_row(up, "<=", -base - theta_s * s_path[k], "soe_box")
            low = {int(j): -c for j in pm[:k]}
            low[s_min] = -1.0
            lb.add_row(low, ">=", -base + theta_s * s_path[k], "soe_box")

    if inp.terminal and "terminal" not in drop:
        # m_N >= (S_d^min + S_d^max) / 2: the next day starts centred on average
        end = inp.initial_soe + c * float(np.sum(p_hat)) - inp.loss_per_step * N
        row = {int(j): -c for j in pm}
        row[s_min] = -0.5
        row[s_max] = -0.5
        lb.add_row(row, ">=", -end, "terminal")

    if "power_box" not in drop:
        dfm = cfg.max_freq_deviation
        for k in range(N):
            lb.add_row({int(pm[k]): 1.0, alpha: dfm}, "<=",
                       cfg.bess_rated_power + p_hat[k] - theta_b * sig[k], "power_box")
            lb.add_row({int(pm[k]): 1.0, alpha: -dfm}, ">=",
                       -cfg.bess_rated_power + p_hat[k] + theta_b * sig[k], "power_box")

    if "smoothness" not in drop:
        for k in range(N - 1):
            lb.add_row({int(pm[k + 1]): 1.0, int(pm[k]): -1.0}, "<=", sm.max_dispatch_ramp, "smoothness")
            lb.add_row({int(pm[k + 1]): 1.0, int(pm[k]): -1.0}, ">=", -sm.max_dispatch_ramp, "smoothness")
        # ramp of the normalised PV-share mean: c |P^m - P^pv_hat| <= dm (S_d^max - S_d^min)
        dm = sm.max_soe_ramp
        for k in range(N):
            lb.add_row({int(pm[k]): c, s_max: -dm, s_min: dm}, "<=", c * p_hat[k], "smoothness")
            lb.add_row({int(pm[k]): -c, s_max: -dm, s_min: dm}, "<=", -c * p_hat[k], "smoothness")

    return lb.build(), DapLayout(pm, alpha, s_min, s_max)


def _diagnose(inp: DapInput, backend: str) -> str:
    for fam in FAMILIES:
        lp, _ = build_dap(inp, drop=(fam,))
        if solve_lp(lp, backend).optimal:
            return fam
    return "multiple"


def plan_day(inp: DapInput, backend: str = DEFAULT_BACKEND, context: str = "") -> DayPlan:
    lp, lay = build_dap(inp)
    sol = solve_lp(lp, backend)
    if sol.status == "infeasible":
        raise InfeasiblePlanError("day-ahead problem is infeasible", _diagnose(inp, backend), context)
    if not sol.optimal:
        raise InfeasiblePlanError(f"day-ahead solve ended with status {sol.status}", "solver", context)
    cfg = inp.cfg
    x = sol.values
    pmd = np.clip(x[lay.pm], 0.0, cfg.total_rated_power)
    alpha = max(float(x[lay.alpha]), cfg.min_droop)
    s_lo, s_hi = float(x[lay.s_min]), float(x[lay.s_max])
    e_pv = cfg.bess_capacity * (s_hi - s_lo)
    e_f = cfg.usable_capacity - e_pv
    tau_h = cfg.dispatch_step / 3600.0
    gain = float(np.sum(inp.prices.energy_day_ahead * tau_h * pmd) + inp.prices.pfr_capacity * alpha)
    mean = _mean_path(inp, pmd)
    return DayPlan(PowerProfile(pmd, cfg.dispatch_step, 0), alpha, (s_lo, s_hi), gain,
                   (e_pv, e_f), mean, _pv_sigma_path(inp.forecast, cfg))


@dataclass
class PlanReport:
    violations: list
    lambda_max: float

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_plan(plan: DayPlan, inp: DapInput, tol: float = 1e-6) -> PlanReport:
    """Re-check a day plan against every day-ahead constraint, independently of the LP."""
    cfg, risk, sm = inp.cfg, inp.risk, inp.smoothness
    pm = plan.dispatch.values
    N = inp.horizon
    p_hat, sig = inp.forecast.mean, inp.forecast.sigma
    alpha = plan.droop
    s_lo, s_hi = plan.soe_thresholds
    E = cfg.bess_capacity
    bad = []

    def check(family, ok_mask, amount):
        for k in np.flatnonzero(~np.asarray(ok_mask)):
            bad.append((family, int(k), float(np.atleast_1d(amount)[k])))

    if len(pm) != N:
        bad.append(("horizon", -1, float(len(pm) - N)))
        return PlanReport(bad, risk.lambda_max)
    check("droop_floor", [alpha >= cfg.min_droop - tol], [cfg.min_droop - alpha])
    check("partition", [cfg.soe_min - tol <= s_lo <= s_hi + tol and s_hi <= cfg.soe_max + tol],
          [max(cfg.soe_min - s_lo, s_lo - s_hi, s_hi - cfg.soe_max)])
    e_pv, e_f = plan.partition
    check("partition", [abs(e_pv + e_f - cfg.usable_capacity) <= tol * max(1, E)],
          [e_pv + e_f - cfg.usable_capacity])
    centring = 2 * alpha * inp.wf_day_pred - E * ((cfg.soe_max + cfg.soe_min) - (s_hi + s_lo))
    sizing = 2 * alpha * risk.mu * inp.sigma_w24 - E * ((cfg.soe_max - cfg.soe_min) - (s_hi - s_lo))
    check("pfr_coupling", [abs(centring) <= tol * max(1, E)], [centring])
    check("pfr_coupling", [abs(sizing) <= tol * max(1, E)], [sizing])
    check("dispatch_bounds", (pm >= -tol) & (pm <= cfg.total_rated_power + tol),
          np.maximum(-pm, pm - cfg.total_rated_power))
    dfm = cfg.max_freq_deviation
    hi_pw = pm - p_hat + alpha * dfm + risk.theta_b * sig - cfg.bess_rated_power
    lo_pw = -cfg.bess_rated_power - (pm - p_hat - alpha * dfm - risk.theta_b * sig)
    check("power_box", hi_pw <= tol, hi_pw)
    check("power_box", lo_pw <= tol, lo_pw)
    mean = _mean_path(inp, pm)
    spath = _pv_sigma_path(inp.forecast, cfg)
    over = mean + risk.theta_s * spath - s_hi
    under = s_lo - (mean - risk.theta_s * spath)
    check("soe_box", over <= tol, over)
    check("soe_box", under <= tol, under)
    ramp = np.abs(np.diff(pm)) - sm.max_dispatch_ramp
    check("smoothness", ramp <= tol * max(1, sm.max_dispatch_ramp), ramp)
    if inp.terminal:
        short = 0.5 * (s_lo + s_hi) - mean[-1]
        check("terminal", [short <= tol], [short])
    ms_ramp = cfg.soe_per_kw_step * np.abs(pm - p_hat) - sm.max_soe_ramp * (s_hi - s_lo)
    check("smoothness", ms_ramp <= tol, ms_ramp)
    return PlanReport(bad, compose_failure(risk.lambda_f_max, risk.beta))
