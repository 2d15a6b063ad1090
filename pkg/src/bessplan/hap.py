"""Hours-ahead planning: hourly correction of the remaining dispatch with the droop held fixed.

At hour ``j`` the rest of the day is split into the first hour (FH) and the
rest of the day (RoD). Each window gets its own SoE thresholds, derived
from the predicted frequency integral over that window and a variable
quantile ``mu_h`` / ``mu_r``. Raising a quantile above the day-ahead value
shrinks the admissible band and so lowers the failure rate; the objective
trades that against intra-day revenue and penalties. Deviations from the
day-ahead profile are split by sign through one binary per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (ForecastProfile, InfeasiblePlanError, PlantConfig, PowerProfile, PriceSet,
                   RiskBudget, Smoothness)
from .dap import DayPlan
from .optsolver import DEFAULT_BACKEND, LinearProgram, LPBuilder, solve_milp

FAMILIES = ("soe_box", "power_box", "smoothness")
STATUSES = ("optimal", "relaxed_mu", "elastic", "fallback")
ELASTIC_WEIGHT = 100.0   # EUR per kWh of SoE-box violation, relative to max price


@dataclass(frozen=True)
class HapInput:
    day_plan: DayPlan
    hour: int
    current_soe: float
    forecast_update: ForecastProfile   # steps jn .. N-1
    wf_hour: tuple                     # (W_h prediction, sigma over 1 h)
    wf_rest: tuple                     # (W_r prediction, sigma over 23 - j h); ignored at j = 23
    prices: PriceSet                   # steps jn .. N-1
    cfg: PlantConfig
    weights: tuple | None = None       # (w_h, w_r); None -> normalize_weights
    risk: RiskBudget = field(default_factory=RiskBudget)
    smoothness: Smoothness | None = None
    previous_setpoint: float | None = None   # last executed P^m, for the ramp into hour j
    loss_per_step: float = 0.0               # expected self-consumption drift, p.u. per step
    terminal_weight: float | None = None     # EUR per p.u. short of a centred end of day; 0 disables

    def __post_init__(self):
        cfg = self.cfg
        if not 0 <= self.hour < 24:
            raise ValueError("hour must lie in 0..23")
        if not math.isfinite(self.current_soe):
            raise ValueError("current SoE must be finite")
        if len(self.day_plan.dispatch) != cfg.steps_per_day:
            raise ValueError("day plan does not cover a full day")
        n_rem = self.remaining
        if len(self.forecast_update) != n_rem or len(self.prices) != n_rem:
            raise ValueError(f"hour {self.hour} needs {n_rem} forecast and price steps")
        if not self.wf_hour[1] > 0 or (not self.last_hour and not self.wf_rest[1] > 0):
            raise ValueError("frequency-integral sigmas must be positive")
        if self.smoothness is None:
            object.__setattr__(self, "smoothness", Smoothness.table_defaults(cfg))
        if self.weights is None:
            object.__setattr__(self, "weights", normalize_weights(self.prices, cfg, self.risk))
        if self.terminal_weight is None:
            # dearer than the worst deviation price, so the end-of-day target wins over revenue
            top = max(float(np.max(self.prices.penalty, initial=0.0)),
                      float(np.max(self.prices.intraday, initial=0.0)), 1e-3)
            object.__setattr__(self, "terminal_weight", 2.0 * top * cfg.bess_capacity)
        if self.loss_per_step < 0 or self.terminal_weight < 0:
            raise ValueError("loss_per_step and terminal_weight must be non-negative")

    @property
    def n(self) -> int:
        return self.cfg.steps_per_hour

    @property
    def start(self) -> int:
        return self.hour * self.n

    @property
    def remaining(self) -> int:
        return self.cfg.steps_per_day - self.start

    @property
    def last_hour(self) -> bool:
        return self.hour == 23

    @property
    def planned(self) -> np.ndarray:
        return self.day_plan.dispatch.values[self.start:]


@dataclass(frozen=True)
class HourPlan:
    dispatch_correction: PowerProfile
    mu_h: float
    mu_r: float | None
    fh_thresholds: tuple
    rod_thresholds: tuple | None
    objective: float
    steps_per_hour: int
    status: str = "optimal"
    alarm: str | None = None

    @property
    def executable(self) -> np.ndarray:
        """Set-points actually applied: the first hour only."""
        return self.dispatch_correction.values[: self.steps_per_hour]

    @property
    def lambda_h(self) -> float:
        return _tail(self.mu_h)

    @property
    def lambda_r(self) -> float | None:
        return None if self.mu_r is None else _tail(self.mu_r)


def _tail(mu: float) -> float:
    return 1.0 - math.erf(mu / math.sqrt(2.0))


def normalize_weights(prices: PriceSet, cfg: PlantConfig, risk: RiskBudget = RiskBudget(),
                      rho: float = 0.1) -> tuple[float, float]:
    """Reward weights putting the full quantile range at ``rho`` of one hour at full power."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    span = risk.mu_max - risk.mu
    w = rho * float(np.max(prices.intraday, initial=0.0)) * cfg.dispatch_step / 3600.0 \
        * cfg.bess_rated_power * cfg.steps_per_hour / span
    return w, w


@dataclass
class HapLayout:
    pm: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray
    delta: np.ndarray
    mu_h: int
    mu_r: int | None
    slack: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    terminal_short: int | None = None


def _power_bounds(inp: HapInput) -> tuple[np.ndarray, np.ndarray]:
    """Per-step dispatch range with the droop fixed; collapsed to a point where empty."""
    cfg, risk = inp.cfg, inp.risk
    p_hat, sig = inp.forecast_update.mean, inp.forecast_update.sigma
    reserve = inp.day_plan.droop * cfg.max_freq_deviation + risk.theta_b * sig
    lo = np.maximum(0.0, p_hat - cfg.bess_rated_power + reserve)
    hi = np.minimum(cfg.total_rated_power, p_hat + cfg.bess_rated_power - reserve)
    empty = lo > hi
    mid = np.clip(0.5 * (p_hat - cfg.bess_rated_power + reserve + p_hat + cfg.bess_rated_power - reserve),
                  0.0, cfg.total_rated_power)
    lo = np.where(empty, mid, lo)
    hi = np.where(empty, mid, hi)
    return lo, hi


def build_hap(inp: HapInput, mode: str = "optimal") -> tuple[LinearProgram, HapLayout]:
    """Assemble the hourly MILP.

    ``mode`` selects the fallback variant: ``"relaxed_mu"`` lets the
    quantiles drop below the day-ahead value, ``"elastic"`` additionally
    turns the SoE boxes into penalised soft constraints.
    """
    if mode not in STATUSES[:3]:
        raise ValueError(f"unknown HAP mode {mode!r}")
    cfg, risk, sm = inp.cfg, inp.risk, inp.smoothness
    Nj, n = inp.remaining, inp.n
    tau_h = cfg.dispatch_step / 3600.0
    c = cfg.soe_per_kw_step
    E = cfg.bess_capacity
    alpha = inp.day_plan.droop
    p_hat, sig = inp.forecast_update.mean, inp.forecast_update.sigma
    pmd = inp.planned
    ci, cp = inp.prices.intraday, inp.prices.penalty
    w_h, w_r = inp.weights
    big_m = cfg.total_rated_power + cfg.bess_rated_power
    rod = not inp.last_hour
    mu_lo = 0.0 if mode in ("relaxed_mu", "elastic") else risk.mu

    lb = LPBuilder()
    p_lo, p_hi = _power_bounds(inp)
    pm = np.array([lb.add_var(f"pm_{k}", p_lo[k], p_hi[k]) for k in range(Nj)])
    d_plus = lb.add_vars("dplus", Nj, 0.0, big_m, (ci - cp) * tau_h)
    d_minus = lb.add_vars("dminus", Nj, 0.0, big_m, -cp * tau_h)
    delta = lb.add_vars("delta", Nj, 0.0, 1.0, 0.0, binary=True)
    mu_h = lb.add_var("mu_h", mu_lo, risk.mu_max, w_h)
    mu_r = lb.add_var("mu_r", mu_lo, risk.mu_max, w_r) if rod else None

    for k in range(Nj):
        lb.add_row({int(pm[k]): 1.0, int(d_plus[k]): -1.0, int(d_minus[k]): 1.0}, "=", pmd[k], "deviation")
        lb.add_row({int(d_plus[k]): 1.0, int(delta[k]): -big_m}, "<=", 0.0, "deviation")
        lb.add_row({int(d_minus[k]): 1.0, int(delta[k]): big_m}, "<=", big_m, "deviation")

    # window thresholds as affine functions of the quantile:
    #   S^max_w = S^max - alpha (W + mu sigma) / E,  S^min_w = S^min + alpha (mu sigma - W) / E
    windows = [(inp.wf_hour, mu_h, risk.theta_h, range(1, n + 1), range(0, n))]
    if rod:
        windows.append((inp.wf_rest, mu_r, risk.theta_r, range(n, Nj + 1), range(n, Nj)))
    var = np.concatenate([[0.0], np.cumsum(sig ** 2)])
    s_path = c * np.sqrt(var)
    cum_hat = np.concatenate([[0.0], np.cumsum(p_hat)])
    slack = []
    if mode == "elastic":
        slack_cost = ELASTIC_WEIGHT * max(float(np.max(ci, initial=0)), float(np.max(cp, initial=0)), 1e-3) * E
    for (w_pred, w_sigma), mu_var, theta, points, steps in windows:
        g = alpha * w_sigma / E
        shift = alpha * w_pred / E
        if mode != "elastic":
            # thresholds stay inside the security interval and ordered
            lb.add_row({mu_var: g}, ">=", abs(shift), "soe_box")
            lb.add_row({mu_var: 2.0 * g}, "<=", cfg.soe_max - cfg.soe_min, "soe_box")
        for k in points:
            base = inp.current_soe + c * cum_hat[k] - inp.loss_per_step * k
            up = {int(i): -c for i in pm[:k]}
            up[mu_var] = g
            low = {int(i): -c for i in pm[:k]}
            low[mu_var] = -g
            if mode == "elastic":
                e_up = lb.add_var(f"slack_up_{k}", 0.0, np.inf, -slack_cost)
                e_lo = lb.add_var(f"slack_lo_{k}", 0.0, np.inf, -slack_cost)
                up[e_up] = -1.0
                low[e_lo] = 1.0
                slack += [e_up, e_lo]
            lb.add_row(up, "<=", cfg.soe_max - shift - base - theta * s_path[k], "soe_box")
            lb.add_row(low, ">=", cfg.soe_min - shift - base + theta * s_path[k], "soe_box")
        # SoE-mean ramp relative to the window width
        dm = sm.max_soe_ramp
        for k in steps:
            width = dm * (cfg.soe_max - cfg.soe_min)
            lb.add_row({int(pm[k]): c, mu_var: 2.0 * dm * g}, "<=", width + c * p_hat[k], "smoothness")
            lb.add_row({int(pm[k]): -c, mu_var: 2.0 * dm * g}, "<=", width - c * p_hat[k], "smoothness")

    short = None
    if inp.terminal_weight > 0:
        # soft target: end-of-day mean at the centre of the last window's thresholds
        w_pred = (inp.wf_hour if inp.last_hour else inp.wf_rest)[0]
        centre = 0.5 * (cfg.soe_max + cfg.soe_min) - alpha * w_pred / E
        end = inp.current_soe + c * cum_hat[Nj] - inp.loss_per_step * Nj
        short = lb.add_var("terminal_short", 0.0, np.inf, -inp.terminal_weight)
        row = {int(i): -c for i in pm}
        row[short] = 1.0
        lb.add_row(row, ">=", centre - end, "terminal")

    for k in range(Nj - 1):
        lb.add_row({int(pm[k + 1]): 1.0, int(pm[k]): -1.0}, "<=", sm.max_dispatch_ramp, "smoothness")
        lb.add_row({int(pm[k + 1]): 1.0, int(pm[k]): -1.0}, ">=", -sm.max_dispatch_ramp, "smoothness")
    if inp.previous_setpoint is not None:
        lb.add_row({int(pm[0]): 1.0}, "<=", inp.previous_setpoint + sm.max_dispatch_ramp, "smoothness")
        lb.add_row({int(pm[0]): 1.0}, ">=", inp.previous_setpoint - sm.max_dispatch_ramp, "smoothness")

    return lb.build(), HapLayout(pm, d_plus, d_minus, delta, mu_h, mu_r, np.asarray(slack, int), short)


def _thresholds(inp: HapInput, wf: tuple, mu: float) -> tuple[float, float]:
    cfg = inp.cfg
    a = inp.day_plan.droop / cfg.bess_capacity
    return cfg.soe_min + a * (mu * wf[1] - wf[0]), cfg.soe_max - a * (mu * wf[1] + wf[0])


def _fallback(inp: HapInput, reason: str) -> HourPlan:
    fh = _thresholds(inp, inp.wf_hour, inp.risk.mu)
    rod = None if inp.last_hour else _thresholds(inp, inp.wf_rest, inp.risk.mu)
    return HourPlan(PowerProfile(inp.planned.copy(), inp.cfg.dispatch_step, inp.start),
                    inp.risk.mu, None if inp.last_hour else inp.risk.mu, fh, rod, 0.0, inp.n,
                    "fallback", reason)


def plan_hour(inp: HapInput, backend: str = DEFAULT_BACKEND, context: str = "",
              strict: bool = False) -> HourPlan:
    """Solve the hourly MILP, falling back step by step when it is infeasible.

    The chain is: nominal problem, quantiles allowed below the day-ahead
    value, soft SoE boxes, and finally the unchanged day-ahead slice with an
    alarm. With ``strict=True`` the first infeasibility raises instead.
    """
    tried = []
    for mode in STATUSES[:3]:
        lp, lay = build_hap(inp, mode)
        sol = solve_milp(lp, backend)
        if sol.optimal:
            x = sol.values
            pm = np.clip(x[lay.pm], lp.lo[lay.pm], lp.hi[lay.pm])
            mu_h = float(x[lay.mu_h])
            mu_r = None if lay.mu_r is None else float(x[lay.mu_r])
            fh = _thresholds(inp, inp.wf_hour, mu_h)
            rod = None if mu_r is None else _thresholds(inp, inp.wf_rest, mu_r)
            alarm = None if mode == "optimal" else f"solved after relaxing ({', '.join(tried)} infeasible)"
            return HourPlan(PowerProfile(pm, inp.cfg.dispatch_step, inp.start), mu_h, mu_r, fh, rod,
                            float(sol.objective_value), inp.n, mode, alarm)
        if strict:
            raise InfeasiblePlanError(f"hours-ahead problem ended with status {sol.status}",
                                      "soe_box" if sol.status == "infeasible" else "solver", context)
        tried.append(f"{mode}:{sol.status}")
    return _fallback(inp, f"{context} every HAP variant failed ({', '.join(tried)})".strip())


def deviation_revenue(plan: HourPlan, inp: HapInput) -> float:
    """Intra-day settlement minus penalties for the whole corrected profile (EUR)."""
    tau_h = inp.cfg.dispatch_step / 3600.0
    dev = plan.dispatch_correction.values - inp.planned
    up = np.maximum(dev, 0.0)
    return float(np.sum((inp.prices.intraday - inp.prices.penalty) * tau_h * up
                        - inp.prices.penalty * tau_h * np.maximum(-dev, 0.0)))
