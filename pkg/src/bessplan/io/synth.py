"""Seeded synthetic stand-ins for PV measurements/forecasts and grid frequency."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
from scipy.signal import lfilter

from ..core import ForecastProfile, PowerProfile
from ..freqmodel import FreqTrace

SUNRISE_H = 6.0
SUNSET_H = 18.0


@dataclass(frozen=True)
class PvData:
    """Day-ahead and hour-ahead forecasts on the dispatch grid plus 1 s actuals."""

    day_ahead: ForecastProfile
    hour_ahead: ForecastProfile
    actual: PowerProfile           # 1 s resolution
    actual_step_mean: np.ndarray   # actual averaged over each dispatch step


def clear_sky(t_hours: np.ndarray) -> np.ndarray:
    """Half-sine envelope between sunrise and sunset, in p.u. of rated power."""
    h = np.mod(t_hours, 24.0)
    x = (h - SUNRISE_H) / (SUNSET_H - SUNRISE_H)
    return np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)), 0.0)


def _ar1(rng, n, a, sigma):
    """Stationary AR(1) path with marginal std ``sigma``."""
    noise = rng.standard_normal(n) * sigma * np.sqrt(1.0 - a * a)
    x0 = rng.standard_normal() * sigma
    out, _ = lfilter([1.0], [1.0, -a], noise, zi=[a * x0])
    return out


def synth_pv_data(seed: int, day_count: int, rated_kw: float, forecast_error_pct: float = 2.0,
                  hour_ahead_error_pct: float | None = None, step: int = 900) -> PvData:
    """Clear-sky envelope times cloud attenuation, with Gaussian forecast errors.

    Forecast errors are independent across dispatch steps and scale with the
    clear-sky envelope (zero at night); their std is ``forecast_error_pct`` of
    the rated power at solar noon. The hour-ahead forecast error is nested in
    the day-ahead one.
    """
    if hour_ahead_error_pct is None:
        hour_ahead_error_pct = forecast_error_pct / 2.0
    if hour_ahead_error_pct > forecast_error_pct:
        raise ValueError("hour-ahead error must not exceed the day-ahead error")
    rng = np.random.default_rng(seed)
    n_sec = day_count * 86400
    t_h = np.arange(n_sec) / 3600.0
    env = clear_sky(t_h)

    clearness = rng.beta(5.0, 2.0, size=day_count)
    minute_noise = _ar1(rng, day_count * 1440, np.exp(-1.0 / 20.0), 0.12)
    fine = np.repeat(minute_noise, 60)
    atten = np.clip(np.repeat(clearness, 86400) + fine, 0.05, 1.0)
    actual = rated_kw * env * atten

    n_steps = n_sec // step
    step_mean = actual.reshape(n_steps, step).mean(axis=1)
    env_step = clear_sky((np.arange(n_steps) + 0.5) * step / 3600.0)
    sigma_da = forecast_error_pct / 100.0 * rated_kw * env_step
    sigma_ha = hour_ahead_error_pct / 100.0 * rated_kw * env_step
    e_ha = rng.standard_normal(n_steps) * sigma_ha
    e_extra = rng.standard_normal(n_steps) * np.sqrt(np.maximum(sigma_da ** 2 - sigma_ha ** 2, 0.0))
    fc_ha = np.clip(step_mean + e_ha, 0.0, rated_kw)
    fc_da = np.clip(step_mean + e_ha + e_extra, 0.0, rated_kw)
    return PvData(ForecastProfile(fc_da, sigma_da, step), ForecastProfile(fc_ha, sigma_ha, step),
                  PowerProfile(actual, 1, 0), step_mean)


def synth_pv(seed: int, day_count: int, rated_kw: float, forecast_error_pct: float = 2.0,
             step: int = 900) -> tuple[ForecastProfile, PowerProfile]:
    data = synth_pv_data(seed, day_count, rated_kw, forecast_error_pct, step=step)
    return data.day_ahead, data.actual


def synth_freq(seed: int, day_count: int, sigma_target: float = 0.05, f_n: float = 50.0,
               corr_time_s: float = 60.0, slow_sigma: float = 0.004, slow_corr_time_s: float = 7200.0,
               max_dev: float = 0.2,
               start_time: datetime = datetime(2019, 2, 1, tzinfo=timezone.utc)) -> FreqTrace:
    """Ornstein-Uhlenbeck frequency deviation at 1 s, clamped to +/- ``max_dev``.

    A fast component with std ``sigma_target`` is superposed on a slow one
    (std ``slow_sigma``) so integrals over hours keep some autocorrelation.
    """
    rng = np.random.default_rng(seed)
    n = day_count * 86400
    fast = _ar1(rng, n, np.exp(-1.0 / corr_time_s), sigma_target)
    if slow_sigma > 0:
        fast += _ar1(rng, n, np.exp(-1.0 / slow_corr_time_s), slow_sigma)
    dev = np.clip(fast, -max_dev, max_dev)
    return FreqTrace(f_n + dev, 1.0, start_time)
