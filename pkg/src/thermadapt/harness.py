"""Experiment orchestration: pretraining, rolling update/test cycles, and
result aggregation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .building import TARGETS, ConfigurationError, make_building
from .dataset import (
    Scaler,
    apply_scaler,
    concat_datasets,
    split_train_val,
    window,
)
from .metrics import mase, rmse, rri
from .network import RecurrentForecaster, TrainOptions, TrainReport
from .occupancy import generate_occupancy
from .schedule import DriftSchedule
from .seeding import derive_seed
from .series import TimeSeries, month_periods
from .strategies import UpdateContext, make_strategy
from .thermal import simulate
from .weather import synth_weather

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "building", "strategy", "period_months", "update_n",
    "rmse", "mase", "train_seconds", "stored_examples",
)


@dataclass
class RunSettings:
    """Training-scale knobs shared by pretraining and updates. Defaults are
    the full experiment profile; smoke profiles shrink them."""

    period_months: int = 1
    max_updates: int = 0  # 0 runs every available cycle
    epochs: int = 60
    initial_epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    train_stride: int = 1
    test_stride: int = 1
    pretrain_epochs: int = 150
    pretrain_stride: int = 4
    source_count: int = 16
    source_years: int = 2
    ewc_penalty: float = 100.0
    ewc_buffer: int = 1000
    ewc_refresh: int = 250
    gem_samples: int = 250

    def strategy_options(self, name: str) -> dict:
        if name == "ewc":
            return {"penalty_scale": self.ewc_penalty,
                    "buffer_size": self.ewc_buffer,
                    "refresh_size": self.ewc_refresh}
        if name == "gem":
            return {"samples_per_update": self.gem_samples}
        return {}


def simulate_sources(source_envelopes: list[tuple], seed: int,
                     settings: RunSettings) -> list[TimeSeries]:
    """Drift-free series for the pretraining pool, one per source envelope
    (u_wall, c_wall, f_win, a_ground, weather_id) with freshly drawn
    occupants. Buildings in the same location share one weather realization."""
    taken = {(t.u_wall, t.c_wall, t.f_win, t.a_ground, t.weather_id)
             for t in TARGETS.values()}
    weather_cache: dict[str, object] = {}
    out = []
    for i, env in enumerate(source_envelopes):
        if tuple(env) in taken:
            raise ConfigurationError(
                f"source building {i} duplicates a target configuration {env}"
            )
        occ = generate_occupancy(derive_seed(seed, "source-occ", i))
        params = make_building(*env, occ)
        location = env[4]
        if location not in weather_cache:
            weather_cache[location] = synth_weather(
                location, settings.source_years,
                derive_seed(seed, "source-weather", location),
            )
        ts, _ = simulate(params, occ, weather_cache[location])
        out.append(ts)
    return out


def pretrain_general(source_series: list[TimeSeries], seed: int,
                     settings: RunSettings) -> tuple[RecurrentForecaster, Scaler, TrainReport]:
    """Train the shared starting model on pooled source data and freeze the
    scaler every later stage reuses."""
    if not source_series:
        raise ValueError("pretraining needs at least one source series")
    scaler = Scaler().fit(np.vstack([ts.features() for ts in source_series]))
    trains, vals = [], []
    for ts in source_series:
        # split per building so validation covers every source
        tr, va = split_train_val(apply_scaler(window(ts), scaler))
        trains.append(tr.thin(settings.pretrain_stride))
        vals.append(va.thin(settings.pretrain_stride))
    net = RecurrentForecaster(seed=derive_seed(seed, "general-init"))
    report = net.fit(concat_datasets(trains), concat_datasets(vals),
                     TrainOptions(epochs=settings.pretrain_epochs,
                                  batch_size=settings.batch_size,
                                  learning_rate=settings.learning_rate,
                                  seed=derive_seed(seed, "general-train")))
    return net, scaler, report


def _period_has_event(schedule: DriftSchedule | None,
                      start: pd.Timestamp, end: pd.Timestamp) -> bool:
    if schedule is None:
        return False
    return any(start <= e.time < end for e in schedule.changes())


def run_single(building: str, series: TimeSeries,
               schedule: DriftSchedule | None, strategy_name: str,
               general: RecurrentForecaster, scaler: Scaler,
               seed: int, settings: RunSettings) -> list[dict]:
    """One (building, strategy) pass: update on x_n, test on x_{n+1}.
    Logged update_n is 0-based; row n-1 describes the n-th update."""
    periods = month_periods(series, settings.period_months)
    if len(periods) < 2:
        raise ValueError("need at least two periods for one update/test cycle")
    strategy = make_strategy(strategy_name,
                             **settings.strategy_options(strategy_name))
    model = None
    rows = []
    last = len(periods) - 1
    if settings.max_updates:
        last = min(last, settings.max_updates)
    for n in range(1, last + 1):
        update_raw = window(periods[n - 1])
        ctx = UpdateContext(
            n=n,
            period_months=settings.period_months,
            data=apply_scaler(update_raw, scaler),
            general=general,
            previous=model,
            seed=derive_seed(seed, building, n),
            event=_period_has_event(schedule, periods[n - 1].index[0],
                                    periods[n].index[0]),
            epochs=settings.epochs,
            initial_epochs=settings.initial_epochs,
            batch_size=settings.batch_size,
            learning_rate=settings.learning_rate,
            train_stride=settings.train_stride,
        )
        started = time.monotonic()
        model = strategy.update(ctx)
        train_seconds = time.monotonic() - started

        test_raw = window(periods[n]).thin(settings.test_stride)
        scaled = apply_scaler(test_raw, scaler)
        pred = scaler.inverse_targets(model.predict(scaled.inputs))
        rows.append({
            "building": building,
            "strategy": strategy_name,
            "period_months": settings.period_months,
            "update_n": n - 1,
            "rmse": rmse(test_raw.targets, pred),
            "mase": mase(test_raw.targets, pred, test_raw.anchors),
            "train_seconds": train_seconds,
            "stored_examples": strategy.stored_examples(),
        })
    return rows


def run_experiment(targets: dict[str, tuple[TimeSeries, DriftSchedule | None]],
                   strategies: list[str], general: RecurrentForecaster,
                   scaler: Scaler, seed: int,
                   settings: RunSettings) -> tuple[pd.DataFrame, list[str]]:
    """All (building, strategy) runs; failures skip that run and are
    returned so callers can surface them."""
    rows: list[dict] = []
    failures: list[str] = []
    for building, (series, schedule) in targets.items():
        for name in strategies:
            try:
                rows.extend(run_single(building, series, schedule, name,
                                       general, scaler, seed, settings))
            except Exception:
                log.exception("run failed: building=%s strategy=%s",
                              building, name)
                failures.append(f"{building}/{name}")
    return pd.DataFrame(rows, columns=RESULT_COLUMNS), failures


def write_result_log(df: pd.DataFrame, path, config_hash: str | None = None) -> None:
    with open(path, "w") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        df.to_csv(fh, index=False, lineterminator="\n")


def read_result_log(path) -> pd.DataFrame:
    df = pd.read_csv(path, comment="#")
    missing = set(RESULT_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"result log {path} is missing columns {sorted(missing)}")
    return df


def aggregate(df: pd.DataFrame) -> dict[str, pd.DataFrame]:
    """Cross-building summaries: per-update curves, yearly means, and overall
    means with RRI against the ift benchmark and 95% t-intervals."""
    if df.empty:
        raise ValueError("no result rows to aggregate")
    curve = (df.groupby(["strategy", "update_n"])[["rmse", "mase"]]
             .mean().reset_index())

    yearly = df.copy()
    yearly["year"] = (yearly["update_n"] * yearly["period_months"]) // 12 + 1
    yearly = (yearly.groupby(["strategy", "year"])[["rmse", "mase"]]
              .mean().reset_index())

    benchmark = None
    per_building = df.groupby(["strategy", "building"])["rmse"].mean()
    if "ift" in df["strategy"].unique():
        benchmark = float(df[df["strategy"] == "ift"]["rmse"].mean())
    else:
        log.warning("benchmark strategy 'ift' absent; RRI left empty")

    records = []
    for name, group in df.groupby("strategy"):
        mean_rmse = float(group["rmse"].mean())
        means = per_building[name]
        if len(means) > 1:
            low, high = stats.t.interval(
                0.95, df=len(means) - 1, loc=means.mean(),
                scale=stats.sem(means))
        else:
            low = high = float(means.iloc[0])
        records.append({
            "strategy": name,
            "rmse": mean_rmse,
            "rmse_ci_low": float(low),
            "rmse_ci_high": float(high),
            "mase": float(group["mase"].mean()),
            "rri_vs_ift": rri(benchmark, mean_rmse) if benchmark else float("nan"),
            "buildings": len(means),
        })
    summary = pd.DataFrame.from_records(records)
    return {"curve": curve, "yearly": yearly, "summary": summary}
