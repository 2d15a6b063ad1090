"""Planning instances, random LPs and small reference computations shared by the test modules."""

import itertools

import numpy as np

from bessplan.core import ForecastProfile, PlantConfig, PriceSet, RiskBudget
from bessplan.dap import DapInput, plan_day
from bessplan.hap import HapInput
from bessplan.io.synth import clear_sky
from bessplan.optsolver import LinearProgram, solve_lp


def plant(pv=1000.0, e=1000.0, **kw) -> PlantConfig:
    return PlantConfig.from_ratings(pv, e, **kw)


def solar_forecast(cfg: PlantConfig, peak_frac=0.7, sigma_frac=0.02) -> ForecastProfile:
    n = cfg.steps_per_day
    t = (np.arange(n) + 0.5) * cfg.dispatch_step / 3600.0
    env = clear_sky(t)
    return ForecastProfile(peak_frac * cfg.pv_rated_power * env, sigma_frac * cfg.pv_rated_power * env,
                           cfg.dispatch_step)


def flat_prices(n, energy=0.06, pfr=20.0, intraday=0.055, penalty=0.05) -> PriceSet:
    return PriceSet.flat(n, energy, pfr, intraday, penalty)


def day_input(cfg=None, soe=0.5, wf=0.0, sigma_w24=0.05, forecast=None, prices=None,
              risk=RiskBudget(), **kw) -> DapInput:
    cfg = cfg or plant()
    forecast = forecast if forecast is not None else solar_forecast(cfg)
    prices = prices if prices is not None else flat_prices(cfg.steps_per_day)
    return DapInput(forecast, wf, sigma_w24, prices, soe, cfg, risk, **kw)


def hour_input(inp: DapInput, hour: int, soe: float | None = None, backend="highs", plan=None,
               wf_h=(0.0, 0.02), wf_r=(0.0, 0.04), forecast=None, prices=None, **kw) -> HapInput:
    plan = plan or plan_day(inp, backend)
    cfg = inp.cfg
    k0 = hour * cfg.steps_per_hour
    if soe is None:
        soe = float(plan.soe_mean[k0])
    fc = forecast if forecast is not None else inp.forecast.slice(k0)
    pr = prices if prices is not None else inp.prices.slice(k0)
    return HapInput(plan, hour, soe, fc, wf_h, wf_r if hour < 23 else (0.0, 1.0), pr, cfg, **kw)


def random_lp(rng, m=20, n=40, infinite_hi=0.2):
    """Dense LP with a known interior point, mixing all three row senses."""
    A = rng.normal(size=(m, n))
    lo = rng.uniform(-2, 0, n)
    hi = lo + rng.uniform(0.5, 5, n)
    hi[rng.random(n) < infinite_hi] = np.inf
    x0 = lo + rng.uniform(0.1, 0.4, n)
    act = A @ x0
    senses = tuple(rng.choice(["<=", ">=", "="], size=m, p=[0.6, 0.3, 0.1]))
    slack = rng.uniform(0.5, 3, m)
    b = np.where(np.array(senses) == "<=", act + slack, np.where(np.array(senses) == ">=", act - slack, act))
    c = rng.normal(size=n)
    # a budget row keeps problems with infinite upper bounds bounded
    A = np.vstack([A, np.ones(n)])
    b = np.append(b, np.sum(x0) + 50.0)
    return LinearProgram(c, A, senses + ("<=",), b, lo, hi)


def brute_force(lp: LinearProgram) -> float:
    best = -np.inf
    bins = np.flatnonzero(lp.integrality)
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = lp.lo.copy(), lp.hi.copy()
        lo[bins] = hi[bins] = bits
        if np.any(lo > hi):
            continue
        s = solve_lp(lp.relaxed().with_bounds(lo, hi), "highs")
        if s.optimal:
            best = max(best, s.objective_value)
    return best


def share_forms(cfg, alpha, s_lo, s_hi, w, mu, sigma):
    """Residuals of the PFR-share conditions in the definitional and the linear form."""
    E = cfg.bess_capacity
    e_f = cfg.usable_capacity - E * (s_hi - s_lo)
    init = E * (s_lo - cfg.soe_min) / e_f
    r_init = init - (0.5 - alpha * w / e_f)
    r_alpha = alpha - e_f / (2 * mu * sigma)
    r_centre = 2 * alpha * w - E * ((cfg.soe_max + cfg.soe_min) - (s_hi + s_lo))
    r_size = 2 * alpha * mu * sigma - E * ((cfg.soe_max - cfg.soe_min) - (s_hi - s_lo))
    return (2 * e_f * r_init, 2 * mu * sigma * r_alpha), (r_centre, r_size)
