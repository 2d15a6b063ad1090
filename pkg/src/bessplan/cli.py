"""Command-line entry point: ``bessplan <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible plan.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import DataError, InfeasiblePlanError
from .dap import DapInput, plan_day
from .freqmodel import WfForecaster
from .harness import CASES, ScenarioData, fit_frequency_models, run_scenario, synth_scenario_data
from .hap import HapInput, normalize_weights, plan_hour
from .io import formats
from .io.config import RunConfig, dump_config, load_config
from .io.synth import PvData

log = logging.getLogger("bessplan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="seed for the synthetic data generators")
    p.add_argument("--case", choices=sorted(CASES), help="sizing preset")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--days", type=int, help="number of simulated days")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bessplan", description="Day-ahead and hours-ahead planning for a BESS + PV plant.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit-ar", help="fit frequency-integral AR models for horizons 1..24 h")
    _common(p)

    p = sub.add_parser("plan-day", help="solve the day-ahead problem for one day")
    _common(p)
    p.add_argument("--day", type=int, default=0, help="day index within the simulated period")
    p.add_argument("--soe", type=float, help="initial SoE (default: config initial_soe)")

    p = sub.add_parser("plan-hour", help="solve the hourly correction for one hour")
    _common(p)
    p.add_argument("--day", type=int, default=0)
    p.add_argument("--hour", type=int, required=True)
    p.add_argument("--soe", type=float, help="measured SoE at the start of the hour "
                                             "(default: the day plan's expected SoE)")
    p.add_argument("--day-plan", type=Path, help="day plan CSV from plan-day (default: solve it)")

    p = sub.add_parser("simulate", help="closed-loop multi-day run")
    _common(p)
    p.add_argument("--mode", choices=("dap", "dap-hap", "both"), help="planning mode")
    p.add_argument("--ideal", action="store_true", help="lossless battery instead of the default circuit")

    p = sub.add_parser("report", help="print the summary table from one or more output directories")
    p.add_argument("dirs", nargs="*", type=Path, default=[Path("out")])
    p.add_argument("--out", type=Path, help="also write the combined table here")
    return parser


def _run_config(args) -> RunConfig:
    return load_config(args.config, seed=args.seed, case=args.case, day_count=args.days)


def _data(rc: RunConfig, sc) -> ScenarioData:
    """Synthetic data unless CSV paths are configured."""
    if not rc.freq_csv and not rc.pv_csv:
        return synth_scenario_data(sc)
    if not (rc.freq_csv and rc.pv_csv):
        raise DataError("freq_csv and pv_csv must be given together")
    freq = formats.load_freq_csv(rc.freq_csv)
    forecast, actual = formats.load_pv_csv(rc.pv_csv, rc.dispatch_step)
    if freq.sample_period != 1.0:
        raise DataError("the frequency trace must be sampled at 1 s")
    actual_1s = formats.hold(actual, 1)
    steps = 86400 // rc.dispatch_step
    n_days = len(forecast) // steps
    if n_days < sc.day_count:
        raise DataError(f"PV file covers {n_days} days, {sc.day_count} requested")
    train = int(len(freq.samples) // 86400) - sc.day_count
    if train < 1:
        raise DataError("frequency trace must include at least one training day before the simulated days")
    step_mean = actual_1s.values[: n_days * 86400].reshape(-1, rc.dispatch_step).mean(axis=1)
    pv = PvData(forecast, forecast, actual_1s, step_mean)
    prices = None
    if rc.energy_price_csv or rc.intraday_price_csv:
        if not (rc.energy_price_csv and rc.intraday_price_csv):
            raise DataError("energy_price_csv and intraday_price_csv must be given together")
        prices = formats.load_prices(rc.energy_price_csv, rc.intraday_price_csv, rc.penalty_price_csv,
                                     rc.pfr_price, rc.penalty_price, steps)
        if len(prices) < sc.day_count:
            raise DataError("price files cover fewer days than requested")
    return ScenarioData(pv, freq, train, prices)


def _day_input(rc: RunConfig, args, data: ScenarioData, models: dict, day: int, soe: float) -> DapInput:
    sc = rc.to_scenario()
    cfg = sc.plant()
    steps = cfg.steps_per_day
    fc = WfForecaster(data.freq, cfg.nominal_frequency, models)
    t0 = (data.train_days + day) * 86400
    w_day, _ = fc.predict(24, t0)
    prices = data.prices[day] if data.prices is not None else sc.day_prices(cfg)
    return DapInput(data.pv.day_ahead.slice(day * steps, (day + 1) * steps), w_day, models[24].sigma_w,
                    prices, soe, cfg, sc.risk, sc.smoothness(cfg), sc.terminal)


def cmd_fit_ar(args) -> int:
    rc = _run_config(args)
    sc = rc.to_scenario()
    data = _data(rc, sc)
    models = fit_frequency_models(data.freq, sc.plant().nominal_frequency, data.train_days)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "ar_models.csv"
    with open(path, "w") as fh:
        fh.write("horizon_h,order,mean,sigma_w,coefficients\n")
        for h, m in sorted(models.items()):
            coefs = " ".join(repr(c) for c in m.coefficients)
            fh.write(f"{h},{m.order},{m.mean!r},{m.sigma_w!r},{coefs}\n")
    for h in (1, 6, 12, 23, 24):
        print(f"T={h:>2} h  order={models[h].order}  sigma_w={models[h].sigma_w:.5f} Hz*h")
    print(f"wrote {path}")
    return EXIT_OK


def _check_day(args, sc):
    if not 0 <= args.day < sc.day_count:
        raise DataError(f"--day must lie in 0..{sc.day_count - 1}")


def cmd_plan_day(args) -> int:
    rc = _run_config(args)
    sc = rc.to_scenario()
    _check_day(args, sc)
    data = _data(rc, sc)
    models = fit_frequency_models(data.freq, sc.plant().nominal_frequency, data.train_days)
    soe = rc.initial_soe if args.soe is None else args.soe
    inp = _day_input(rc, args, data, models, args.day, soe)
    plan = plan_day(inp, sc.backend, f"day {args.day}")
    args.out.mkdir(parents=True, exist_ok=True)
    formats.write_day_plan(plan, args.out / "day_plan.csv")
    dump_config(rc, args.out / "config.txt")
    print(f"droop {plan.droop:.2f} kW/Hz (floor {inp.cfg.min_droop:.2f}), PV share "
          f"[{plan.soe_thresholds[0]:.4f}, {plan.soe_thresholds[1]:.4f}], expected gain {plan.expected_gain:.2f} EUR")
    print(f"wrote {args.out / 'day_plan.csv'}")
    return EXIT_OK


def cmd_plan_hour(args) -> int:
    rc = _run_config(args)
    sc = rc.to_scenario()
    _check_day(args, sc)
    if not 0 <= args.hour < 24:
        raise DataError("--hour must lie in 0..23")
    cfg = sc.plant()
    data = _data(rc, sc)
    models = fit_frequency_models(data.freq, cfg.nominal_frequency, data.train_days)
    day_inp = _day_input(rc, args, data, models, args.day, rc.initial_soe)
    if args.day_plan is not None:
        plan = formats.read_day_plan(args.day_plan)
    else:
        plan = plan_day(day_inp, sc.backend, f"day {args.day}")
    n = cfg.steps_per_hour
    if args.soe is not None:
        soe = args.soe
    elif plan.soe_mean is not None:
        soe = float(plan.soe_mean[args.hour * n])
    else:
        soe = rc.initial_soe
    fc = WfForecaster(data.freq, cfg.nominal_frequency, models)
    now = (data.train_days + args.day) * 86400 + args.hour * 3600
    j = args.hour
    steps = cfg.steps_per_day
    k0 = args.day * steps + j * n
    prices = day_inp.prices.slice(j * n)
    inp = HapInput(plan, j, soe, data.pv.hour_ahead.slice(k0, (args.day + 1) * steps), fc.predict(1, now),
                   fc.predict(23 - j, now) if j < 23 else (0.0, 1.0), prices, cfg,
                   normalize_weights(prices, cfg, sc.risk, rc.rho), sc.risk, sc.smoothness(cfg),
                   terminal_weight=None if sc.terminal else 0.0)
    hp = plan_hour(inp, sc.backend, f"day {args.day} hour {j}")
    args.out.mkdir(parents=True, exist_ok=True)
    formats.write_hour_plan(hp, args.out / "hour_plan.csv", j)
    dump_config(rc, args.out / "config.txt")
    print(f"status {hp.status}; mu_h {hp.mu_h:.3f}" + ("" if hp.mu_r is None else f", mu_r {hp.mu_r:.3f}")
          + f"; objective {hp.objective:.3f}")
    if hp.alarm:
        print(f"alarm: {hp.alarm}")
    print(f"wrote {args.out / 'hour_plan.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    rc = _run_config(args)
    modes = ("dap", "dap-hap") if (args.mode or rc.mode) == "both" else (args.mode or rc.mode,)
    if args.ideal:
        rc = replace(rc, battery="ideal")
    sc = rc.to_scenario(mode=modes[0])
    data = _data(rc, sc)
    models = fit_frequency_models(data.freq, sc.plant().nominal_frequency, data.train_days)
    args.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for mode in modes:
        rep = run_scenario(replace(sc, mode=mode), data, models)
        reports.append(rep)
        formats.write_days_csv(rep, args.out / f"days_{mode}.csv")
        formats.write_figure_data(rep, args.out / "figures" / mode)
        for a in rep.alarms:
            log.warning(a)
        log.info("%s %s done in %.1f s", rep.case, mode, rep.runtime_s)
    formats.write_report_csv(reports, args.out / "report.csv")
    dump_config(rc, args.out / "config.txt")
    table = formats.format_table([r.summary_row() for r in reports])
    (args.out / "table.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for d in args.dirs:
        path = d / "report.csv" if d.is_dir() else d
        rows.extend(formats.read_report_csv(path))
    table = formats.format_table(rows)
    print(table)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(table + "\n")
    return EXIT_OK


COMMANDS = {"fit-ar": cmd_fit_ar, "plan-day": cmd_plan_day, "plan-hour": cmd_plan_hour,
            "simulate": cmd_simulate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InfeasiblePlanError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
