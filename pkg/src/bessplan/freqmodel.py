"""Frequency-deviation integrals, their AR predictor, and PFR sizing.

The integral of the frequency deviation over a window of ``T`` hours is
denoted ``W`` (Hz*h). A battery doing droop regulation with coefficient
``alpha`` absorbs ``alpha * W`` kWh over that window.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .core import DataError

FREQ_SANITY_HZ = 2.0


class RankDeficientError(DataError):
    pass


@dataclass(frozen=True)
class FreqTrace:
    samples: np.ndarray
    sample_period: float = 1.0
    start_time: datetime = datetime(2019, 2, 1, tzinfo=timezone.utc)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise DataError("frequency samples must be one-dimensional")
        if self.sample_period <= 0:
            raise DataError("sample period must be positive")
        if not np.all(np.isfinite(s)):
            raise DataError("frequency samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def duration_s(self) -> float:
        return len(self.samples) * self.sample_period

    def deviation(self, f_n: float) -> np.ndarray:
        dev = self.samples - f_n
        if dev.size and np.abs(dev).max() > FREQ_SANITY_HZ:
            raise DataError(f"frequency strays more than {FREQ_SANITY_HZ} Hz from {f_n} Hz")
        return dev

    def window(self, start_s: float, length_s: float) -> "FreqTrace":
        i0 = int(round(start_s / self.sample_period))
        i1 = i0 + int(round(length_s / self.sample_period))
        if i0 < 0 or i1 > len(self.samples):
            raise DataError("requested window lies outside the trace")
        return FreqTrace(self.samples[i0:i1], self.sample_period, self.start_time)


@dataclass(frozen=True)
class WfSeries:
    window_hours: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self):
        return len(self.values)


def _samples_per_window(trace: FreqTrace, window_hours: float) -> int:
    spw = window_hours * 3600.0 / trace.sample_period
    n = int(round(spw))
    if n < 1 or abs(spw - n) > 1e-9:
        raise DataError("window length must be a whole number of samples")
    return n


def extract_wf(trace: FreqTrace, f_n: float, window_hours: float) -> WfSeries:
    """Integrate the deviation over consecutive windows starting at the trace start.

    Samples are held over their sample period (the same zero-order hold the
    plant simulator applies), so windows are additive under concatenation.
    A partial trailing window is dropped.
    """
    if window_hours <= 0:
        raise DataError("window length must be positive")
    spw = _samples_per_window(trace, window_hours)
    n_win = len(trace.samples) // spw
    if n_win == 0:
        raise DataError("trace is shorter than one window")
    dev = trace.deviation(f_n)[: n_win * spw].reshape(n_win, spw)
    values = dev.sum(axis=1) * trace.sample_period / 3600.0
    return WfSeries(window_hours, values)


@dataclass(frozen=True)
class FreqIntegralModel:
    """AR(p) predictor of the next window integral.

    ``history`` holds the last ``order`` observations, newest first.
    ``mean`` is the level the autoregression acts around (zero for a
    model written down by hand, the sample mean for a fitted one).
    """

    order: int
    coefficients: tuple
    window_hours: float
    sigma_w: float
    history: tuple = ()
    mean: float = 0.0
    stationary: bool = field(default=True)

    def __post_init__(self):
        if self.order < 1 or len(self.coefficients) != self.order:
            raise ValueError("order must be >= 1 and match the coefficient count")
        if not self.sigma_w > 0:
            raise ValueError("sigma_w must be positive")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "history", tuple(float(h) for h in self.history))
        object.__setattr__(self, "stationary", ar_is_stationary(self.coefficients))

    def with_history(self, history) -> "FreqIntegralModel":
        """Return a copy whose history is ``history`` (newest first)."""
        return replace(self, history=tuple(history))

    def observe(self, value: float) -> "FreqIntegralModel":
        return replace(self, history=(float(value),) + self.history[: self.order - 1])


def ar_is_stationary(coefficients) -> bool:
    phi = np.asarray(coefficients, float)
    roots = np.roots(np.concatenate([[1.0], -phi]))
    return bool(np.all(np.abs(roots) < 1.0))


def _lagged_design(x: np.ndarray, order: int):
    n = len(x)
    X = np.column_stack([x[order - j: n - j] for j in range(1, order + 1)])
    y = x[order:]
    return X, y


def fit_ar(series: WfSeries, order: int) -> FreqIntegralModel:
    """Least-squares AR fit on the mean-removed series."""
    x = np.asarray(series.values, float)
    if order < 1:
        raise DataError("AR order must be at least 1")
    if len(x) < 10 * order:
        raise DataError(f"need at least {10 * order} windows to fit AR({order}), got {len(x)}")
    level = float(x.mean())
    xc = x - level
    X, y = _lagged_design(xc, order)
    scale = np.abs(xc).max()
    if scale == 0 or np.linalg.matrix_rank(X, tol=1e-12 * scale * np.sqrt(X.size)) < order:
        raise RankDeficientError("lagged regression is rank deficient")
    phi, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ phi
    sigma = float(np.std(resid, ddof=1))
    if not sigma > 0:
        raise RankDeficientError("residuals vanish; series is exactly autoregressive")
    history = tuple(x[::-1][:order])
    model = FreqIntegralModel(order, tuple(phi), series.window_hours, sigma, history, level)
    if not model.stationary:
        warnings.warn(f"AR({order}) fit is not stationary", RuntimeWarning, stacklevel=2)
    return model


def select_order(series: WfSeries, max_order: int = 8, holdout: float = 0.2) -> int:
    """Pick the AR order with the lowest one-step error on a held-out tail."""
    x = np.asarray(series.values, float)
    n_train = int(round(len(x) * (1.0 - holdout)))
    best, best_err = 1, np.inf
    for p in range(1, max_order + 1):
        if n_train < 10 * p or len(x) - n_train < 1:
            break
        try:
            model = fit_ar(WfSeries(series.window_hours, x[:n_train]), p)
        except RankDeficientError:
            continue
        errs = []
        for i in range(n_train, len(x)):
            hist = x[i - p: i][::-1]
            pred = model.mean + float(np.dot(model.coefficients, hist - model.mean))
            errs.append(x[i] - pred)
        err = float(np.mean(np.square(errs)))
        if err < best_err - 1e-15:
            best, best_err = p, err
    return best


def predict_wf(model: FreqIntegralModel) -> tuple[float, float]:
    """One-step-ahead mean and standard deviation of the next window integral."""
    if len(model.history) < model.order:
        raise DataError(f"model needs {model.order} past windows, has {len(model.history)}")
    hist = np.asarray(model.history[: model.order]) - model.mean
    mean = model.mean + float(np.dot(model.coefficients, hist))
    return mean, model.sigma_w


def max_droop(capacity: float, mu: float, sigma_w: float) -> float:
    """Largest droop (kW/Hz) a battery of ``capacity`` kWh sustains at quantile ``mu``."""
    if sigma_w <= 0:
        raise ValueError("sigma_w must be positive (zero gives an unbounded droop)")
    if capacity <= 0 or mu <= 0:
        raise ValueError("capacity and mu must be positive")
    return capacity / (2.0 * mu * sigma_w)


def energy_offset(soe: float, droop: float, wf_pred: float, capacity: float) -> float:
    """Energy (kWh) to exchange over a window so the SoE ends centred."""
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    return (soe - 0.5 + droop * wf_pred / capacity) * capacity


def sigma_table(trace: FreqTrace, f_n: float, horizons=range(1, 25), order: int | None = None,
                models: dict | None = None) -> dict:
    """Residual sigma of an AR model fitted per window length (hours).

    With ``order=None`` each horizon gets its own order via :func:`select_order`.
    Fitted models are written into ``models`` when a dict is supplied.
    """
    out = {}
    for T in horizons:
        series = extract_wf(trace, f_n, T)
        p = order if order is not None else select_order(series, max_order=min(8, max(1, len(series) // 10)))
        model = fit_ar(series, p)
        out[T] = model.sigma_w
        if models is not None:
            models[T] = model
    return out


class WfForecaster:
    """Rolling predictions of the frequency integral over arbitrary horizons.

    Holds the cumulative integral of a trace so the integral over any past
    window is an O(1) lookup, and a fitted model per horizon.
    """

    def __init__(self, trace: FreqTrace, f_n: float, models: dict):
        dev = trace.deviation(f_n)
        self.dt = trace.sample_period
        self.cum = np.concatenate([[0.0], np.cumsum(dev) * self.dt / 3600.0])
        self.models = dict(models)

    def window_integral(self, start: int, stop: int) -> float:
        return float(self.cum[stop] - self.cum[start])

    def predict(self, horizon_hours: int, at_sample: int) -> tuple[float, float]:
        """Predict the integral over the ``horizon_hours`` following ``at_sample``."""
        model = self.models[horizon_hours]
        spw = int(round(horizon_hours * 3600 / self.dt))
        hist = []
        for q in range(1, model.order + 1):
            a, b = at_sample - q * spw, at_sample - (q - 1) * spw
            if a < 0:
                raise DataError("not enough frequency history before the prediction point")
            hist.append(self.window_integral(a, b))
        return predict_wf(model.with_history(hist))


def pfr_window_soe(series: WfSeries, model: FreqIntegralModel, capacity: float, mu: float,
                   initial_soe: float = 0.5) -> np.ndarray:
    """End-of-window SoE of a battery doing only PFR at ``alpha_max`` with per-window offsets.

    At the start of each window the energy offset re-centres the expected end
    point using the AR prediction from the preceding windows; the deviation
    from the prediction is what is left. The SoE carries over (clipped to
    [0, 1]) from one window to the next. Returns one value per window after
    the first ``order`` windows.
    """
    x = np.asarray(series.values, float)
    p = model.order
    if len(x) <= p:
        raise DataError("series is not longer than the model order")
    alpha = max_droop(capacity, mu, model.sigma_w)
    s = initial_soe
    out = np.empty(len(x) - p)
    for i in range(p, len(x)):
        pred, _ = predict_wf(model.with_history(x[i - p:i][::-1]))
        offset = energy_offset(s, alpha, pred, capacity)
        end = s + (alpha * x[i] - offset) / capacity
        out[i - p] = end
        s = min(max(end, 0.0), 1.0)
    return out
