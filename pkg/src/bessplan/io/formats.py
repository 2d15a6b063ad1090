"""CSV readers and writers for traces, forecasts, prices, plans and reports.

Timestamps are ISO 8601 (a trailing ``Z`` is accepted) or plain seconds.
Every parse error names the offending data row (1-based, header excluded).
"""

from __future__ import annotations

import csv
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..core import DataError, ForecastProfile, PowerProfile, PriceSet
from ..dap import DayPlan
from ..freqmodel import FreqTrace
from ..hap import HourPlan

FREQ_COLUMNS = ("timestamp", "frequency_hz")
PV_COLUMNS = ("timestamp", "forecast_kw", "confidence_kw", "actual_kw")
PRICE_COLUMNS = ("timestamp", "price_eur_per_kwh")
REPORT_COLUMNS = ("case", "mode", "lambda_pct", "total", "pcr", "dispatch", "penalty")
DAY_COLUMNS = ("day", "droop", "min_droop", "initial_soe", "final_soe", "failure_rate", "pcr",
               "dispatch", "penalty", "dap_status")


def _parse_time(text: str, row: int) -> float:
    t = text.strip()
    try:
        return float(t)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(t.replace("Z", "+00:00"))
    except ValueError:
        raise DataError(f"row {row}: cannot parse timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _rows(path, columns: tuple) -> list[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(h.strip() for h in (reader.fieldnames or ()))
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}; expected {','.join(columns)}")
        out = []
        for i, raw in enumerate(reader, start=1):
            out.append((i, {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}))
    if not out:
        raise DataError(f"{path}: no data rows")
    return out


def _float(rec: dict, key: str, row: int) -> float:
    try:
        v = float(rec[key])
    except (TypeError, ValueError):
        raise DataError(f"row {row}: column {key} is not a number ({rec.get(key)!r})") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}: column {key} is not finite")
    return v


def _times(rows, row_ids) -> np.ndarray:
    t = np.array([_parse_time(r["timestamp"], i) for i, r in zip(row_ids, rows)])
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise DataError(f"row {row_ids[bad[0] + 1]}: timestamps must be strictly increasing")
    return t


def _period(t: np.ndarray, row_ids) -> float:
    if len(t) < 2:
        raise DataError("need at least two rows to infer the sampling period")
    d = np.diff(t)
    period = float(np.median(d))
    gap = np.flatnonzero(np.abs(d - period) > 1e-6 * max(1.0, period))
    if gap.size:
        raise DataError(f"row {row_ids[gap[0] + 1]}: irregular sampling (gap of {d[gap[0]]:g} s, "
                        f"expected {period:g} s)")
    return period


def load_freq_csv(path) -> FreqTrace:
    rows = _rows(path, FREQ_COLUMNS)
    ids = [i for i, _ in rows]
    recs = [r for _, r in rows]
    t = _times(recs, ids)
    f = np.array([_float(r, "frequency_hz", i) for i, r in rows])
    if np.any(f <= 0):
        raise DataError(f"row {ids[int(np.argmax(f <= 0))]}: frequency must be positive")
    return FreqTrace(f, _period(t, ids), datetime.fromtimestamp(t[0], tz=timezone.utc))


def write_freq_csv(trace: FreqTrace, path) -> None:
    t0 = trace.start_time.timestamp()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FREQ_COLUMNS)
        for i, f in enumerate(trace.samples):
            w.writerow((repr(t0 + i * trace.sample_period), repr(float(f))))


def _resample_mean(values: np.ndarray, src_step: float, step: int) -> np.ndarray:
    ratio = step / src_step
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise DataError(f"sampling period {src_step:g} s does not divide the dispatch step {step} s")
    n = len(values) // k
    if n == 0:
        raise DataError("series is shorter than one dispatch step")
    return values[: n * k].reshape(n, k).mean(axis=1)


def load_pv_csv(path, step: int = 900) -> tuple[ForecastProfile, PowerProfile]:
    """Forecast (sigma = confidence / 3) averaged onto the dispatch grid, and the actuals as sampled."""
    rows = _rows(path, PV_COLUMNS)
    ids = [i for i, _ in rows]
    recs = [r for _, r in rows]
    t = _times(recs, ids)
    period = _period(t, ids)
    cols = {}
    for key in PV_COLUMNS[1:]:
        v = np.array([_float(r, key, i) for i, r in rows])
        neg = np.flatnonzero(v < 0)
        if neg.size:
            raise DataError(f"row {ids[neg[0]]}: {key} must be non-negative")
        cols[key] = v
    mean = _resample_mean(cols["forecast_kw"], period, step)
    sigma = _resample_mean(cols["confidence_kw"], period, step) / 3.0
    p = int(round(period))
    if abs(period - p) > 1e-9 or p < 1:
        raise DataError("PV sampling period must be a whole number of seconds")
    return ForecastProfile(mean, sigma, step), PowerProfile(cols["actual_kw"], p, 0)


def write_pv_csv(path, forecast: ForecastProfile, actual: PowerProfile, t0: float = 0.0) -> None:
    """Write on the actuals' grid, holding each forecast value over its dispatch step."""
    k = forecast.step // actual.step
    if k * actual.step != forecast.step or len(forecast) * k != len(actual):
        raise ValueError("actual samples must tile the forecast steps exactly")
    mean = np.repeat(forecast.mean, k)
    conf = np.repeat(forecast.sigma * 3.0, k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PV_COLUMNS)
        for i in range(len(actual)):
            w.writerow((repr(t0 + i * actual.step), repr(float(mean[i])), repr(float(conf[i])),
                        repr(float(actual.values[i]))))


def hold(profile: PowerProfile, step: int = 1) -> PowerProfile:
    """Zero-order hold onto a finer grid."""
    k = profile.step // step
    if k * step != profile.step:
        raise DataError("target step must divide the profile step")
    return PowerProfile(np.repeat(profile.values, k), step, profile.start_step_index * k)


def load_price_csv(path, steps_per_day: int = 96) -> np.ndarray:
    """Prices in EUR/kWh, one row per dispatch step; whole days only."""
    rows = _rows(path, PRICE_COLUMNS)
    ids = [i for i, _ in rows]
    _times([r for _, r in rows], ids)
    v = np.array([_float(r, "price_eur_per_kwh", i) for i, r in rows])
    if len(v) % steps_per_day:
        raise DataError(f"{path}: {len(v)} rows is not a whole number of {steps_per_day}-step days")
    return v


def write_price_csv(path, prices: np.ndarray, step: int = 900, t0: float = 0.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PRICE_COLUMNS)
        for i, p in enumerate(prices):
            w.writerow((repr(t0 + i * step), repr(float(p))))


def load_prices(energy_path, intraday_path, penalty_path=None, pfr_price: float = 20.0,
                penalty_price: float = 0.05, steps_per_day: int = 96) -> list[PriceSet]:
    """One PriceSet per day. A missing penalty file means a flat ``penalty_price``."""
    e = load_price_csv(energy_path, steps_per_day)
    i = load_price_csv(intraday_path, steps_per_day)
    if len(e) != len(i):
        raise DataError("energy and intraday price files cover different periods")
    p = load_price_csv(penalty_path, steps_per_day) if penalty_path else np.full(len(e), penalty_price)
    if len(p) != len(e):
        raise DataError("penalty price file covers a different period")
    if np.any(p < 0):
        raise DataError("penalty prices must be non-negative")
    days = len(e) // steps_per_day
    return [PriceSet(e[d * steps_per_day:(d + 1) * steps_per_day], pfr_price,
                     i[d * steps_per_day:(d + 1) * steps_per_day], p[d * steps_per_day:(d + 1) * steps_per_day])
            for d in range(days)]


# key=value sidecars ------------------------------------------------------------------------------

def write_kv(path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {_kv_format(v)}\n")


def _kv_format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_kv(path) -> dict:
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{n}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def _opt_float(v: str):
    return None if v == "none" else float(v)


def _meta_path(path) -> Path:
    p = Path(path)
    return p.with_suffix(".meta")


def write_day_plan(plan: DayPlan, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step", "pmd_kw"))
        for k, v in enumerate(plan.dispatch.values):
            w.writerow((k, repr(float(v))))
    write_kv(_meta_path(path), {
        "droop_kw_per_hz": float(plan.droop),
        "soe_d_min": float(plan.soe_thresholds[0]),
        "soe_d_max": float(plan.soe_thresholds[1]),
        "expected_gain_eur": float(plan.expected_gain),
        "pv_capacity_kwh": float(plan.partition[0]),
        "pfr_capacity_kwh": float(plan.partition[1]),
        "step_s": int(plan.dispatch.step),
    })


def read_day_plan(path) -> DayPlan:
    rows = _rows(path, ("step", "pmd_kw"))
    vals = np.array([_float(r, "pmd_kw", i) for i, r in rows])
    steps = [int(_float(r, "step", i)) for i, r in rows]
    if steps != list(range(len(vals))):
        raise DataError(f"{path}: steps must run 0..{len(vals) - 1}")
    meta = read_kv(_meta_path(path))
    try:
        return DayPlan(PowerProfile(vals, int(meta["step_s"]), 0), float(meta["droop_kw_per_hz"]),
                       (float(meta["soe_d_min"]), float(meta["soe_d_max"])), float(meta["expected_gain_eur"]),
                       (float(meta["pv_capacity_kwh"]), float(meta["pfr_capacity_kwh"])))
    except KeyError as exc:
        raise DataError(f"{_meta_path(path)}: missing key {exc}") from None


def write_hour_plan(plan: HourPlan, path, hour: int) -> None:
    vals = plan.dispatch_correction.values
    start = plan.dispatch_correction.start_step_index
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step", "pm_kw", "executable"))
        for k, v in enumerate(vals):
            w.writerow((start + k, repr(float(v)), int(k < plan.steps_per_hour)))
    fh_lo, fh_hi = plan.fh_thresholds
    rod = plan.rod_thresholds or (None, None)
    write_kv(_meta_path(path), {
        "hour": hour, "mu_h": float(plan.mu_h), "mu_r": None if plan.mu_r is None else float(plan.mu_r),
        "soe_h_min": float(fh_lo), "soe_h_max": float(fh_hi),
        "soe_r_min": None if rod[0] is None else float(rod[0]),
        "soe_r_max": None if rod[1] is None else float(rod[1]),
        "objective": float(plan.objective), "steps_per_hour": plan.steps_per_hour,
        "step_s": int(plan.dispatch_correction.step), "status": plan.status,
        "alarm": plan.alarm if plan.alarm else None,
    })


def read_hour_plan(path) -> HourPlan:
    rows = _rows(path, ("step", "pm_kw", "executable"))
    vals = np.array([_float(r, "pm_kw", i) for i, r in rows])
    start = int(_float(rows[0][1], "step", rows[0][0]))
    meta = read_kv(_meta_path(path))
    execu = [int(_float(r, "executable", i)) for i, r in rows]
    n = int(meta["steps_per_hour"])
    if execu != [1] * min(n, len(vals)) + [0] * max(0, len(vals) - n):
        raise DataError(f"{path}: executable flags must mark exactly the first {n} steps")
    rod = None if meta["soe_r_min"] == "none" else (float(meta["soe_r_min"]), float(meta["soe_r_max"]))
    return HourPlan(PowerProfile(vals, int(meta["step_s"]), start), float(meta["mu_h"]),
                    _opt_float(meta["mu_r"]), (float(meta["soe_h_min"]), float(meta["soe_h_max"])), rod,
                    float(meta["objective"]), n, meta["status"], None if meta["alarm"] == "none" else meta["alarm"])


# reports ----------------------------------------------------------------------------------------

def write_report_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.summary_row()
            w.writerow([row[c] if isinstance(row[c], str) else repr(float(row[c])) for c in REPORT_COLUMNS])


def read_report_csv(path) -> list[dict]:
    out = []
    for i, r in _rows(path, REPORT_COLUMNS):
        rec = {c: r[c] for c in ("case", "mode")}
        rec.update({c: _float(r, c, i) for c in REPORT_COLUMNS[2:]})
        out.append(rec)
    return out


def write_days_csv(report, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DAY_COLUMNS + ("hap_statuses",))
        for d in report.days:
            hs = ";".join(f"{k}:{v}" for k, v in sorted(d.hap_statuses.items()))
            w.writerow([d.day] + [repr(float(getattr(d, c))) for c in DAY_COLUMNS[1:-1]] + [d.dap_status, hs])


def format_table(rows: list[dict]) -> str:
    """Plain-text table with one line per (case, mode)."""
    head = f"{'Case':<5}{'Mode':<9}{'lambda %':>10}{'Total EUR':>14}{'PCR EUR':>14}{'Dispatch EUR':>14}{'Penalty EUR':>13}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['case']:<5}{r['mode']:<9}{r['lambda_pct']:>10.3f}{r['total']:>14.0f}{r['pcr']:>14.0f}"
                     f"{r['dispatch']:>14.0f}{r['penalty']:>13.0f}")
    return "\n".join(lines)


def write_figure_data(report, directory) -> None:
    """Per-panel CSVs: power profiles, SoE profiles and the daily droop."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fig = report.figure_data
    with open(d / "power_profiles.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("day", "step", "planned_pm_kw", "executed_pm_kw", "pv_actual_kw", "p_bess_kw"))
        for day in range(len(fig["planned_pm"])):
            for k in range(fig["planned_pm"].shape[1]):
                w.writerow((day, k) + tuple(f"{fig[c][day, k]:.6g}" for c in
                                             ("planned_pm", "executed_pm", "pv_actual", "p_bess")))
    with open(d / "soe_profiles.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("day", "point", "planned_soe", "realized_soe"))
        for day in range(len(fig["planned_soe"])):
            for k in range(fig["planned_soe"].shape[1]):
                w.writerow((day, k, f"{fig['planned_soe'][day, k]:.9f}", f"{fig['realized_soe'][day, k]:.9f}"))
    with open(d / "droop.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("day", "droop_kw_per_hz", "min_droop_kw_per_hz"))
        for rec in report.days:
            w.writerow((rec.day, repr(float(rec.droop)), repr(float(rec.min_droop))))
