"""Protocol orchestration: pretraining, update/test cycles, aggregation."""

import numpy as np
import pandas as pd
import pytest

from thermadapt.building import ConfigurationError, sample_source_specs
from thermadapt.dataset import HORIZON, window
from thermadapt.harness import (
    RESULT_COLUMNS,
    RunSettings,
    aggregate,
    pretrain_general,
    read_result_log,
    run_experiment,
    run_single,
    simulate_sources,
    write_result_log,
)
from thermadapt.network import RecurrentForecaster
from thermadapt.schedule import fixed_event_schedule
from thermadapt.series import STEP, TimeSeries, month_periods
from thermadapt.weather import synth_weather


def synthetic_series(months=4, seed=0, start="2015-01-01"):
    end = pd.Timestamp(start) + pd.DateOffset(months=months)
    index = pd.date_range(start, end, freq="15min", inclusive="left")
    rng = np.random.default_rng(seed)
    n = len(index)
    t_in = 21.0 + np.cumsum(rng.normal(0, 0.05, n))
    t_in -= np.linspace(0, t_in[-1] - 21.0, n)  # keep in bounds
    return TimeSeries(
        index=index,
        t_in=t_in,
        t_out=5.0 + 5 * np.sin(np.arange(n) / 96 * 2 * np.pi) + rng.normal(0, 1, n),
        q_dir=np.abs(rng.normal(100, 50, n)),
        q_dif=np.abs(rng.normal(50, 20, n)),
        u_in=rng.uniform(0, 1, n),
    )


SMOKE = RunSettings(epochs=1, initial_epochs=1, batch_size=32,
                    train_stride=16, test_stride=16,
                    pretrain_epochs=2, pretrain_stride=64,
                    source_count=2, source_years=1,
                    ewc_buffer=50, ewc_refresh=10, gem_samples=20)


@pytest.fixture(scope="module")
def tiny_general():
    return RecurrentForecaster(seed=1, hidden=8)


@pytest.fixture(scope="module")
def fitted(tiny_general):
    from thermadapt.dataset import Scaler
    series = synthetic_series(months=4, seed=3)
    scaler = Scaler().fit(series.features())
    return series, scaler


def test_simulate_sources_rejects_target_overlap():
    with pytest.raises(ConfigurationError, match="target"):
        simulate_sources([(0.25, 40.0, 0.16, 70.0, "bratislava")], 0, SMOKE)


def test_pretrain_general_end_to_end():
    envelopes = sample_source_specs(5, SMOKE.source_count)
    sources = simulate_sources(envelopes, 5, SMOKE)
    assert len(sources) == 2
    settings = RunSettings(pretrain_epochs=10, pretrain_stride=32,
                           batch_size=64, source_years=1)
    net, scaler, report = pretrain_general(sources, 5, settings)
    assert report.n_train_examples > 0

    # zero-shot on an unseen building beats an untrained network
    probe = synth_weather("munich", 1, 99)
    from thermadapt.building import TARGETS
    from thermadapt.thermal import simulate as simulate_building
    spec = TARGETS["T4"]
    occ = spec.occupancy(7)
    ts, _ = simulate_building(spec.building(occ), occ,
                              probe.slice("2015-01-01", "2015-03-01"))
    raw = window(ts).thin(8)
    from thermadapt.dataset import apply_scaler
    scaled = apply_scaler(raw, scaler)
    from thermadapt.metrics import rmse
    trained_err = rmse(raw.targets,
                       scaler.inverse_targets(net.predict(scaled.inputs)))
    blank = RecurrentForecaster(seed=123)
    blank_err = rmse(raw.targets,
                     scaler.inverse_targets(blank.predict(scaled.inputs)))
    assert trained_err < blank_err


def test_run_single_cycle_accounting(fitted, tiny_general):
    series, scaler = fitted
    rows = run_single("B1", series, None, "il", tiny_general, scaler,
                      seed=11, settings=SMOKE)
    assert len(rows) == 3  # 4 months -> update on 1..3, test on 2..4
    assert [r["update_n"] for r in rows] == [0, 1, 2]
    assert all(r["strategy"] == "il" and r["building"] == "B1" for r in rows)
    assert all(r["stored_examples"] == 0 for r in rows)
    assert all(np.isfinite(r["rmse"]) and r["rmse"] > 0 for r in rows)
    assert all(r["train_seconds"] >= 0 for r in rows)


def test_no_leakage_between_update_and_test_periods(fitted):
    series, _ = fitted
    periods = month_periods(series, 1)
    for n in range(1, len(periods)):
        train_windows = window(periods[n - 1])
        last_target_time = train_windows.anchor_times.max() + HORIZON * STEP
        assert last_target_time <= periods[n].index[0]


def test_event_flag_reaches_strategy(fitted, tiny_general):
    series, scaler = fitted
    schedule = fixed_event_schedule("retro", "2015-02-10", "2015-05-01")
    rows = run_single("B1", series, schedule, "ealg", tiny_general, scaler,
                      seed=13, settings=SMOKE)
    # event in period 2 resets the pool: stored examples shrink at update_n=1
    assert rows[1]["stored_examples"] < rows[0]["stored_examples"] + rows[1]["stored_examples"]
    per_period = [len(window(p)) for p in month_periods(series, 1)]
    assert rows[0]["stored_examples"] == per_period[0]
    assert rows[1]["stored_examples"] == per_period[1]
    assert rows[2]["stored_examples"] == per_period[1] + per_period[2]


def test_run_experiment_isolates_failures(fitted, tiny_general, caplog):
    series, scaler = fitted
    targets = {"B1": (series, None)}
    with caplog.at_level("ERROR"):
        df, failures = run_experiment(targets, ["il", "bogus"], tiny_general,
                                      scaler, 17, SMOKE)
    assert failures == ["B1/bogus"]
    assert set(df["strategy"]) == {"il"}
    assert "bogus" in caplog.text


def test_run_experiment_metrics_reproducible(fitted, tiny_general):
    series, scaler = fitted
    targets = {"B1": (series, None)}
    out = []
    for _ in range(2):
        df, failures = run_experiment(targets, ["il", "ift"], tiny_general,
                                      scaler, 19, SMOKE)
        assert not failures
        out.append(df)
    a, b = out
    assert a["rmse"].tolist() == b["rmse"].tolist()
    assert a["mase"].tolist() == b["mase"].tolist()
    assert a["stored_examples"].tolist() == b["stored_examples"].tolist()


def test_result_log_round_trip(tmp_path, fitted, tiny_general):
    series, scaler = fitted
    df, _ = run_experiment({"B1": (series, None)}, ["ift"], tiny_general,
                           scaler, 23, SMOKE)
    path = tmp_path / "results.csv"
    write_result_log(df, path, config_hash="abc123")
    text = path.read_text().splitlines()
    assert text[0] == "# config_hash=abc123"
    assert text[1] == ",".join(RESULT_COLUMNS)
    back = read_result_log(path)
    assert back["rmse"].tolist() == df["rmse"].tolist()
    with pytest.raises(ValueError, match="missing columns"):
        bad = tmp_path / "bad.csv"
        bad.write_text("building,rmse\nB1,0.5\n")
        read_result_log(bad)


def fake_log(rmse_by_strategy_building, period_months=1, updates=24):
    rows = []
    for (strategy, building), level in rmse_by_strategy_building.items():
        for n in range(updates):
            rows.append({
                "building": building, "strategy": strategy,
                "period_months": period_months, "update_n": n,
                "rmse": level, "mase": level * 2,
                "train_seconds": 1.0, "stored_examples": 0,
            })
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def test_aggregate_rri_and_identity():
    df = fake_log({("ift", "B1"): 0.4, ("ift", "B2"): 0.6,
                   ("sml", "B1"): 0.3, ("sml", "B2"): 0.5})
    tables = aggregate(df)
    summary = tables["summary"].set_index("strategy")
    assert summary.loc["ift", "rri_vs_ift"] == 0.0
    assert summary.loc["sml", "rri_vs_ift"] == pytest.approx((0.5 - 0.4) / 0.5)
    assert summary.loc["ift", "rmse"] == pytest.approx(0.5)

    single = aggregate(fake_log({("ift", "B1"): 0.4}))
    row = single["summary"].iloc[0]
    assert row["rmse"] == pytest.approx(0.4)
    assert row["rmse_ci_low"] == row["rmse_ci_high"] == pytest.approx(0.4)


def test_aggregate_yearly_and_curve_shapes():
    df = fake_log({("ift", "B1"): 0.4, ("il", "B1"): 0.3}, updates=24)
    tables = aggregate(df)
    assert len(tables["curve"]) == 2 * 24
    yearly = tables["yearly"]
    assert set(yearly["year"]) == {1, 2}
    assert len(yearly) == 4


def test_aggregate_missing_benchmark_warns(caplog):
    df = fake_log({("il", "B1"): 0.3})
    with caplog.at_level("WARNING"):
        tables = aggregate(df)
    assert np.isnan(tables["summary"]["rri_vs_ift"]).all()
    assert "benchmark" in caplog.text


def test_confidence_interval_shrinks_with_building_count():
    rng = np.random.default_rng(5)
    widths = {}
    for k in (4, 16):
        levels = {("ift", f"B{i}"): 0.5 + 0.05 * rng.standard_normal()
                  for i in range(k)}
        summary = aggregate(fake_log(levels))["summary"].iloc[0]
        widths[k] = summary["rmse_ci_high"] - summary["rmse_ci_low"]
    assert widths[16] < widths[4]
    assert 2.0 < widths[4] / widths[16] < 4.5
