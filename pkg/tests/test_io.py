import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bessplan.cli import EXIT_DATA, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main
from bessplan.core import DataError, ForecastProfile, PowerProfile
from bessplan.dap import plan_day
from bessplan.freqmodel import FreqTrace
from bessplan.harness import ScenarioConfig, run_scenario, synth_scenario_data
from bessplan.hap import plan_hour
from bessplan.io import formats
from bessplan.io.config import RunConfig, dump_config, load_config
from bessplan.io.synth import clear_sky, synth_freq, synth_pv_data
from fixtures import day_input, hour_input, plant

DATA = Path(__file__).parent / "data"
GOLDEN_CFG = DATA / "golden.cfg"


# traces and forecasts ----------------------------------------------------------------------------

@settings(max_examples=25)
@given(arrays(float, st.integers(2, 50), elements=st.floats(49.0, 51.0)), st.sampled_from([0.1, 1.0, 2.0]))
def test_freq_round_trip(tmp_path_factory, f, period):
    tr = FreqTrace(f, period, datetime(2020, 1, 1, tzinfo=timezone.utc))
    path = tmp_path_factory.mktemp("f") / "f.csv"
    formats.write_freq_csv(tr, path)
    back = formats.load_freq_csv(path)
    assert np.array_equal(back.samples, tr.samples)
    assert back.sample_period == pytest.approx(period)
    assert back.start_time == tr.start_time


def test_freq_reader_names_the_bad_row(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("timestamp,frequency_hz\n0,50.0\n1,50.01\n2,abc\n")
    with pytest.raises(DataError, match="row 3"):
        formats.load_freq_csv(p)
    p.write_text("timestamp,frequency_hz\n0,50.0\n1,50.01\n3,50.0\n4,50.0\n")
    with pytest.raises(DataError, match="row 3: irregular"):
        formats.load_freq_csv(p)
    p.write_text("timestamp,frequency_hz\n0,50.0\n0,50.01\n")
    with pytest.raises(DataError, match="row 2"):
        formats.load_freq_csv(p)
    p.write_text("time,f\n0,50\n")
    with pytest.raises(DataError, match="missing column"):
        formats.load_freq_csv(p)
    with pytest.raises(DataError):
        formats.load_freq_csv(tmp_path / "absent.csv")


def test_iso_timestamps(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("timestamp,frequency_hz\n2019-02-01T00:00:00Z,50.0\n2019-02-01T00:00:01Z,49.99\n"
                 "2019-02-01T00:00:02+00:00,50.02\n")
    tr = formats.load_freq_csv(p)
    assert tr.sample_period == 1.0
    assert tr.start_time == datetime(2019, 2, 1, tzinfo=timezone.utc)


def test_pv_five_minute_rows_average_onto_quarter_hours(tmp_path):
    p = tmp_path / "pv.csv"
    rows = ["timestamp,forecast_kw,confidence_kw,actual_kw"]
    fc = [10, 20, 30, 40, 50, 60]
    conf = [3, 6, 9, 0, 0, 3]
    for i in range(6):
        rows.append(f"{i * 300},{fc[i]},{conf[i]},{fc[i] + 1}")
    p.write_text("\n".join(rows) + "\n")
    forecast, actual = formats.load_pv_csv(p, step=900)
    assert forecast.step == 900
    assert np.allclose(forecast.mean, [20.0, 50.0])
    assert np.allclose(forecast.sigma, [2.0, 1.0 / 3.0])
    assert actual.step == 300 and np.array_equal(actual.values, np.array(fc) + 1.0)
    assert np.array_equal(formats.hold(actual, 1).values, np.repeat(actual.values, 300))


def test_pv_rejects_negative_and_bad_grid(tmp_path):
    p = tmp_path / "pv.csv"
    p.write_text("timestamp,forecast_kw,confidence_kw,actual_kw\n0,1,1,1\n420,1,-1,1\n")
    with pytest.raises(DataError, match="row 2: confidence_kw"):
        formats.load_pv_csv(p)
    p.write_text("timestamp,forecast_kw,confidence_kw,actual_kw\n0,1,1,1\n420,1,1,1\n")
    with pytest.raises(DataError, match="does not divide"):
        formats.load_pv_csv(p)


@settings(max_examples=20)
@given(st.integers(1, 4), st.integers(0, 2**31))
def test_pv_round_trip(tmp_path_factory, n, seed):
    rng = np.random.default_rng(seed)
    fc = ForecastProfile(rng.uniform(0, 500, n), rng.uniform(0, 20, n), 900)
    act = PowerProfile(rng.uniform(0, 500, n * 3), 300, 0)
    path = tmp_path_factory.mktemp("pv") / "pv.csv"
    formats.write_pv_csv(path, fc, act)
    f2, a2 = formats.load_pv_csv(path)
    assert np.allclose(f2.mean, fc.mean, rtol=1e-12) and np.allclose(f2.sigma, fc.sigma, rtol=1e-12)
    assert np.array_equal(a2.values, act.values)


def test_prices_round_trip_and_whole_days(tmp_path):
    rng = np.random.default_rng(0)
    e, i = rng.uniform(0, 0.1, 192), rng.uniform(0, 0.1, 192)
    formats.write_price_csv(tmp_path / "e.csv", e)
    formats.write_price_csv(tmp_path / "i.csv", i)
    days = formats.load_prices(tmp_path / "e.csv", tmp_path / "i.csv", pfr_price=15.0, penalty_price=0.04)
    assert len(days) == 2
    assert np.array_equal(days[1].energy_day_ahead, e[96:])
    assert np.array_equal(days[0].intraday, i[:96])
    assert days[0].pfr_capacity == 15.0 and np.all(days[0].penalty == 0.04)
    formats.write_price_csv(tmp_path / "short.csv", e[:95])
    with pytest.raises(DataError, match="whole number"):
        formats.load_price_csv(tmp_path / "short.csv")


# plans and reports -------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def day():
    inp = day_input(plant(500.0, 1000.0))
    return inp, plan_day(inp, "highs")


def test_day_plan_round_trip(tmp_path, day):
    inp, plan = day
    formats.write_day_plan(plan, tmp_path / "d.csv")
    back = formats.read_day_plan(tmp_path / "d.csv")
    assert np.array_equal(back.dispatch.values, plan.dispatch.values)
    assert (back.droop, back.soe_thresholds, back.expected_gain, back.partition) == \
        (plan.droop, plan.soe_thresholds, plan.expected_gain, plan.partition)
    (tmp_path / "d.meta").write_text("droop_kw_per_hz = 1.0\n")
    with pytest.raises(DataError, match="missing key"):
        formats.read_day_plan(tmp_path / "d.csv")


@pytest.mark.parametrize("hour", [5, 23])
def test_hour_plan_round_trip(tmp_path, day, hour):
    inp, plan = day
    hp = plan_hour(hour_input(inp, hour, plan=plan), "highs")
    formats.write_hour_plan(hp, tmp_path / "h.csv", hour)
    back = formats.read_hour_plan(tmp_path / "h.csv")
    assert np.array_equal(back.dispatch_correction.values, hp.dispatch_correction.values)
    assert back.dispatch_correction.start_step_index == hp.dispatch_correction.start_step_index
    assert (back.mu_h, back.mu_r, back.fh_thresholds, back.rod_thresholds, back.status, back.alarm) == \
        (hp.mu_h, hp.mu_r, hp.fh_thresholds, hp.rod_thresholds, hp.status, hp.alarm)
    assert np.array_equal(back.executable, hp.executable)


def test_report_round_trip_and_table(tmp_path):
    rep = run_scenario(ScenarioConfig(case="D", day_count=1, train_days=15, battery="ideal"))
    formats.write_report_csv([rep], tmp_path / "r.csv")
    rows = formats.read_report_csv(tmp_path / "r.csv")
    assert rows == [rep.summary_row()]
    table = formats.format_table(rows)
    assert table.splitlines()[2].split()[:2] == ["D", "dap"]


def test_config_round_trip(tmp_path):
    rc = RunConfig(case="E", seed=7, rho=0.25, terminal=False, pv_csv="x.csv", bess_rated_power=160.0)
    dump_config(rc, tmp_path / "c.txt")
    assert load_config(tmp_path / "c.txt") == rc
    assert load_config(tmp_path / "c.txt", seed=9).seed == 9


@pytest.mark.parametrize("text, msg", [("bogus = 1\n", "unknown config key"), ("seed = x\n", "cannot read"),
                                       ("terminal = maybe\n", "cannot read"), ("seed 3\n", "key = value")])
def test_config_errors(tmp_path, text, msg):
    (tmp_path / "c.txt").write_text(text)
    with pytest.raises(DataError, match=msg):
        load_config(tmp_path / "c.txt")


def test_config_defaults_match_parameter_table():
    sc = RunConfig(case="B").to_scenario()
    cfg = sc.plant()
    assert (cfg.pv_rated_power, cfg.bess_capacity) == (500.0, 1000.0)
    assert cfg.dispatch_step == 900 and cfg.max_freq_deviation == 0.2
    assert cfg.min_droop == pytest.approx(500.0 / (0.08 * 50.0))   # 8 % statism on the PV rating
    assert cfg.bess_rated_power == 1000.0
    r = sc.risk
    assert (r.lambda_f_max, r.beta, r.gamma, r.lambda_bar_f_max) == (0.05, 0.01, 0.01, 0.003)
    sm = sc.smoothness(cfg)
    assert sm.max_dispatch_ramp == pytest.approx(0.4 * cfg.total_rated_power) and sm.max_soe_ramp == 0.10
    with pytest.raises(DataError):
        RunConfig(mode="weekly").to_scenario()


# synthetic data ----------------------------------------------------------------------------------

def test_pv_is_zero_at_night_and_clamped():
    d = synth_pv_data(3, 2, 800.0, forecast_error_pct=30.0)
    t = np.arange(len(d.actual)) / 3600.0
    night = clear_sky(t) == 0
    assert night.any() and np.all(d.actual.values[night] == 0)
    for fc in (d.day_ahead, d.hour_ahead):
        assert np.all((fc.mean >= 0) & (fc.mean <= 800.0))
        assert np.all(fc.sigma[clear_sky((np.arange(len(fc)) + 0.5) / 4) == 0] == 0)
    assert np.all(d.actual.values <= 800.0)


def test_pv_forecast_errors_within_three_sigma():
    d = synth_pv_data(5, 30, 1000.0, forecast_error_pct=5.0, hour_ahead_error_pct=2.0)
    for fc in (d.day_ahead, d.hour_ahead):
        day = fc.sigma > 0
        z = np.abs(fc.mean - d.actual_step_mean)[day] / fc.sigma[day]
        assert np.mean(z <= 3.0) >= 0.99


@given(st.integers(0, 2**31), st.floats(10.0, 5000.0))
@settings(max_examples=10)
def test_pv_energy_linear_in_rating(seed, rating):
    a = synth_pv_data(seed, 1, 1.0).actual.values
    b = synth_pv_data(seed, 1, rating).actual.values
    assert np.allclose(b, rating * a, rtol=1e-12, atol=1e-9)


def test_synthetic_frequency_statistics():
    tr = synth_freq(1, 3, sigma_target=0.05, max_dev=0.2)
    dev = tr.deviation(50.0)
    assert len(dev) == 3 * 86400
    assert np.all(np.abs(dev) <= 0.2 + 1e-9)
    assert np.std(dev) == pytest.approx(np.hypot(0.05, 0.004), rel=0.15)
    assert abs(np.mean(dev)) < 0.01
    assert np.array_equal(synth_freq(1, 1).samples, synth_freq(1, 1).samples)


# command line -----------------------------------------------------------------------------------

def run(*argv):
    return main([str(a) for a in argv])


def test_golden_day_plan(tmp_path):
    assert run("plan-day", "--config", GOLDEN_CFG, "--out", tmp_path) == EXIT_OK
    got = formats.read_day_plan(tmp_path / "day_plan.csv")
    ref = formats.read_day_plan(DATA / "golden_day_plan.csv")
    assert np.allclose(got.dispatch.values, ref.dispatch.values, atol=1e-6)
    assert got.droop == pytest.approx(ref.droop, rel=1e-9)
    # independent of the stored reference: the gain is the priced dispatch plus the PFR payment
    assert ref.expected_gain == pytest.approx(0.06 * 0.25 * ref.dispatch.values.sum() + 20.0 * ref.droop)
    assert load_config(tmp_path / "config.txt") == load_config(GOLDEN_CFG)


def test_plan_hour_reads_day_plan(tmp_path):
    assert run("plan-hour", "--config", GOLDEN_CFG, "--hour", 9, "--day-plan", DATA / "golden_day_plan.csv",
               "--out", tmp_path) == EXIT_OK
    hp = formats.read_hour_plan(tmp_path / "hour_plan.csv")
    assert len(hp.dispatch_correction.values) == 96 - 36 and hp.dispatch_correction.start_step_index == 36


def test_simulate_output_layout(tmp_path, capsys):
    assert run("simulate", "--config", GOLDEN_CFG, "--mode", "both", "--ideal", "--out", tmp_path) == EXIT_OK
    names = {p.relative_to(tmp_path).as_posix() for p in tmp_path.rglob("*") if p.is_file()}
    figs = {f"figures/{m}/{f}.csv" for m in ("dap", "dap-hap") for f in ("power_profiles", "soe_profiles", "droop")}
    assert names == {"report.csv", "table.txt", "config.txt", "days_dap.csv", "days_dap-hap.csv"} | figs
    assert "lambda %" in capsys.readouterr().out
    assert run("report", tmp_path, "--out", tmp_path / "t2.txt") == EXIT_OK
    assert (tmp_path / "t2.txt").read_text() == (tmp_path / "table.txt").read_text()


def test_fit_ar_writes_models(tmp_path):
    assert run("fit-ar", "--config", GOLDEN_CFG, "--out", tmp_path) == EXIT_OK
    lines = (tmp_path / "ar_models.csv").read_text().splitlines()
    assert lines[0].startswith("horizon_h") and len(lines) == 25


def test_exit_codes(tmp_path):
    assert run() == EXIT_USAGE
    assert run("plan-day", "--nope") == EXIT_USAGE
    assert run("plan-day", "--case", "Q") == EXIT_USAGE
    assert run("plan-day", "--config", tmp_path / "absent.cfg") == EXIT_DATA
    assert run("plan-day", "--config", GOLDEN_CFG, "--day", 3, "--out", tmp_path) == EXIT_DATA
    bad = tmp_path / "bad.cfg"
    bad.write_text(GOLDEN_CFG.read_text() + "statism_pct = 0.1\n")
    assert run("plan-day", "--config", bad, "--out", tmp_path) == EXIT_INFEASIBLE


def test_csv_inputs_feed_the_loop(tmp_path):
    sc = ScenarioConfig(case="D", day_count=1, train_days=12)
    data = synth_scenario_data(sc)
    formats.write_freq_csv(data.freq, tmp_path / "f.csv")
    fc = data.pv.day_ahead
    actual = PowerProfile(data.pv.actual_step_mean, 900, 0)
    formats.write_pv_csv(tmp_path / "pv.csv", fc, actual)
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"case = D\nday_count = 1\nfreq_csv = {tmp_path / 'f.csv'}\npv_csv = {tmp_path / 'pv.csv'}\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    cfg.write_text(f"case = D\nday_count = 2\nfreq_csv = {tmp_path / 'f.csv'}\npv_csv = {tmp_path / 'pv.csv'}\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_DATA


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "bessplan.cli"], capture_output=True, text=True)
    assert out.returncode == EXIT_USAGE and "usage" in out.stderr
