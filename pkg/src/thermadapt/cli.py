"""Command-line pipeline: simulate target data, pretrain the shared model,
run update strategies, and aggregate the result log into report tables.

Workspace layout, rooted at --out (default "out"):

    out/data/<building>.csv            simulated series, one per target
    out/data/<building>_schedule.json  the drift schedule that produced it
    out/data/manifest.json             building list + config hash
    out/model/general.json             pretrained starting model
    out/model/scaler.json              frozen feature scaler
    out/model/manifest.json            pretraining report + config hash
    out/results.csv                    per-update metric log
    out/report/{summary,yearly,curve}.csv

Every artifact records the sha256 of the resolved config, and `run` and
`report` refuse inputs whose hash does not match the config they were
given, so stale or mixed artifacts fail loudly instead of skewing results.

Exit codes: 0 success, 1 bad usage or bad config, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .building import TARGETS, make_building, sample_random_specs, sample_source_specs
from .config import FIXED_EVENT_DATE, START_DATE, ExperimentConfig, load_config
from .dataset import Scaler
from .harness import (
    RESULT_COLUMNS,
    aggregate,
    pretrain_general,
    read_result_log,
    run_experiment,
    run_single,
    simulate_sources,
    write_result_log,
)
from .network import RecurrentForecaster
from .occupancy import OccupancyProfile, generate_occupancy
from .schedule import (
    DriftSchedule,
    fixed_event_schedule,
    generate_drift_schedule,
    no_drift_schedule,
)
from .seeding import derive_seed
from .series import TimeSeries
from .thermal import generate_target_timeseries
from .weather import synth_weather

log = logging.getLogger(__name__)

_EVENT_KIND = {"retrofit": "retro", "occupancy": "occ"}


@dataclass(frozen=True)
class TargetPlan:
    """One target building to simulate: envelope tuple, household, drift."""

    name: str
    envelope: tuple
    occupancy: OccupancyProfile
    schedule: DriftSchedule


def target_plan(cfg: ExperimentConfig) -> list[TargetPlan]:
    start = pd.Timestamp(START_DATE)
    end = start + pd.DateOffset(years=cfg.years)
    items: list[TargetPlan] = []
    if cfg.scenario == "large_scale":
        # targets are random draws, rejected against the pretraining pool so
        # the two stay disjoint
        sources = sample_source_specs(derive_seed(cfg.seed, "sources"),
                                      cfg.source_count)
        envelopes = sample_random_specs(derive_seed(cfg.seed, "targets"),
                                        cfg.target_count, exclude=set(sources))
        for i, env in enumerate(envelopes):
            name = f"R{i + 1:02d}"
            items.append(TargetPlan(
                name, env,
                generate_occupancy(derive_seed(cfg.seed, "target-occ", name)),
                generate_drift_schedule(
                    derive_seed(cfg.seed, "drift-schedule", name),
                    start, cfg.years),
            ))
        return items

    for name in cfg.targets:
        spec = TARGETS[name]
        if cfg.scenario == "no_drift":
            schedule = no_drift_schedule(end)
        else:
            schedule = fixed_event_schedule(_EVENT_KIND[cfg.scenario],
                                            FIXED_EVENT_DATE, end)
        env = (spec.u_wall, spec.c_wall, spec.f_win, spec.a_ground,
               spec.weather_id)
        occ = spec.occupancy(derive_seed(cfg.seed, "target-occ", name))
        items.append(TargetPlan(name, env, occ, schedule))
    return items


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1) + "\n")


def _read_manifest(path: Path, what: str) -> dict:
    if not path.exists():
        raise RuntimeError(f"missing {what} manifest {path}; "
                           f"run the producing subcommand first")
    with open(path) as fh:
        return json.load(fh)


def _require_hash(manifest: dict, expected: str, what: str) -> None:
    found = manifest.get("config_hash")
    if found != expected:
        raise RuntimeError(
            f"{what} was produced with config hash {found!r} but the current "
            f"config hashes to {expected!r}; regenerate it or fix the config"
        )


def cmd_simulate(cfg: ExperimentConfig, out: Path,
                 args: argparse.Namespace) -> int:
    plan = target_plan(cfg)
    if args.dry_run:
        print(f"simulate: scenario={cfg.scenario} years={cfg.years} "
              f"buildings={len(plan)} -> {out / 'data'}")
        for item in plan:
            print(f"  {item.name}: envelope={item.envelope} "
                  f"drift_events={len(item.schedule.changes())}")
        return 0

    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    cfg_hash = cfg.hash()
    weather_cache: dict[str, object] = {}
    for item in plan:
        location = item.envelope[4]
        if location not in weather_cache:
            weather_cache[location] = synth_weather(
                location, cfg.years,
                derive_seed(cfg.seed, "target-weather", location))
        params = make_building(*item.envelope, item.occupancy)
        ts = generate_target_timeseries(
            params, item.occupancy, weather_cache[location], item.schedule,
            derive_seed(cfg.seed, "target-drift", item.name))
        ts.save_csv(data_dir / f"{item.name}.csv", config_hash=cfg_hash)
        item.schedule.save_json(data_dir / f"{item.name}_schedule.json")
        log.info("simulated %s: %d records, %d drift events",
                 item.name, len(ts.index), len(item.schedule.changes()))
    _write_json(data_dir / "manifest.json", {
        "config_hash": cfg_hash,
        "scenario": cfg.scenario,
        "years": cfg.years,
        "period_months": cfg.period_months,
        "buildings": [item.name for item in plan],
    })
    print(f"wrote {len(plan)} building series to {data_dir}")
    return 0


def cmd_pretrain(cfg: ExperimentConfig, out: Path,
                 args: argparse.Namespace) -> int:
    envelopes = sample_source_specs(derive_seed(cfg.seed, "sources"),
                                    cfg.source_count)
    if args.dry_run:
        print(f"pretrain: {len(envelopes)} source buildings x "
              f"{cfg.source_years}y, {cfg.pretrain_epochs} epochs "
              f"-> {out / 'model'}")
        for i, env in enumerate(envelopes):
            print(f"  S{i + 1:02d}: envelope={env}")
        return 0

    settings = cfg.settings()
    source_series = simulate_sources(envelopes, cfg.seed, settings)
    log.info("simulated %d source series", len(source_series))
    net, scaler, report = pretrain_general(source_series, cfg.seed, settings)

    model_dir = out / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    cfg_hash = cfg.hash()
    net.save(model_dir / "general.json", metadata={"config_hash": cfg_hash})
    _write_json(model_dir / "scaler.json",
                {"config_hash": cfg_hash, "params": scaler.get_params()})
    _write_json(model_dir / "manifest.json", {
        "config_hash": cfg_hash,
        "best_val_loss": report.best_val_loss,
        "best_epoch": report.best_epoch,
        "n_train_examples": report.n_train_examples,
        "train_seconds": report.train_seconds,
    })
    print(f"pretrained general model: best val loss "
          f"{report.best_val_loss:.6f} at epoch {report.best_epoch}, "
          f"saved to {model_dir}")
    return 0


# worker state is inherited through fork; tasks carry only (building, strategy)
_WORKER: dict = {}


def _run_task(task: tuple[str, str]) -> list[dict]:
    building, strategy = task
    if not _WORKER:
        raise RuntimeError("worker state missing (fork start method required)")
    series, schedule = _WORKER["targets"][building]
    return run_single(building, series, schedule, strategy,
                      _WORKER["general"], _WORKER["scaler"],
                      _WORKER["seed"], _WORKER["settings"])


def _run_parallel(targets, strategies, general, scaler, seed, settings,
                  jobs: int) -> tuple[pd.DataFrame, list[str]]:
    _WORKER.update(targets=targets, general=general, scaler=scaler,
                   seed=seed, settings=settings)
    tasks = [(b, s) for b in targets for s in strategies]
    rows: list[dict] = []
    failures: list[str] = []
    try:
        context = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=context) as pool:
            futures = {pool.submit(_run_task, t): t for t in tasks}
            for future in as_completed(futures):
                building, strategy = futures[future]
                try:
                    rows.extend(future.result())
                except Exception:
                    log.exception("run failed: building=%s strategy=%s",
                                  building, strategy)
                    failures.append(f"{building}/{strategy}")
    finally:
        _WORKER.clear()
    return pd.DataFrame(rows, columns=RESULT_COLUMNS), sorted(failures)


def cmd_run(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> int:
    data_dir = out / "data"
    model_dir = out / "model"
    cfg_hash = cfg.hash()
    if args.dry_run:
        names = [item.name for item in target_plan(cfg)]
        print(f"run: {len(names)} buildings x {len(cfg.strategies)} "
              f"strategies = {len(names) * len(cfg.strategies)} runs, "
              f"jobs={args.jobs} -> {out / 'results.csv'}")
        for path in (data_dir / "manifest.json", model_dir / "manifest.json"):
            state = "present" if path.exists() else "MISSING"
            print(f"  requires {path}: {state}")
        return 0

    data_manifest = _read_manifest(data_dir / "manifest.json", "data")
    _require_hash(data_manifest, cfg_hash, "data directory")
    model_manifest = _read_manifest(model_dir / "manifest.json", "model")
    _require_hash(model_manifest, cfg_hash, "model directory")

    general = RecurrentForecaster.load(model_dir / "general.json")
    with open(model_dir / "scaler.json") as fh:
        scaler = Scaler.from_params(json.load(fh)["params"])
    targets = {}
    for name in data_manifest["buildings"]:
        targets[name] = (
            TimeSeries.load_csv(data_dir / f"{name}.csv"),
            DriftSchedule.load_json(data_dir / f"{name}_schedule.json"),
        )

    settings = cfg.settings()
    strategies = list(cfg.strategies)
    if args.jobs > 1:
        df, failures = _run_parallel(targets, strategies, general, scaler,
                                     cfg.seed, settings, args.jobs)
    else:
        df, failures = run_experiment(targets, strategies, general, scaler,
                                      cfg.seed, settings)
    df = (df.sort_values(["building", "strategy", "update_n"], kind="stable")
          .reset_index(drop=True))
    out.mkdir(parents=True, exist_ok=True)
    write_result_log(df, out / "results.csv", config_hash=cfg_hash)
    print(f"wrote {len(df)} result rows to {out / 'results.csv'}")
    if failures:
        print(f"failed runs: {', '.join(failures)}", file=sys.stderr)
        return 2
    return 0


def cmd_report(cfg: ExperimentConfig, out: Path,
               args: argparse.Namespace) -> int:
    results_path = out / "results.csv"
    report_dir = out / "report"
    if args.dry_run:
        state = "present" if results_path.exists() else "MISSING"
        print(f"report: {results_path} ({state}) -> "
              f"{report_dir}/{{summary,yearly,curve}}.csv")
        return 0

    if not results_path.exists():
        raise RuntimeError(f"missing result log {results_path}; run first")
    with open(results_path) as fh:
        first = fh.readline()
    log_hash = None
    if first.startswith("# config_hash="):
        log_hash = first.removeprefix("# config_hash=").strip()
    _require_hash({"config_hash": log_hash}, cfg.hash(), "result log")

    results = read_result_log(results_path)
    tables = aggregate(results)
    report_dir.mkdir(parents=True, exist_ok=True)
    for name, frame in tables.items():
        with open(report_dir / f"{name}.csv", "w") as fh:
            fh.write(f"# config_hash={cfg.hash()}\n")
            frame.to_csv(fh, index=False, lineterminator="\n")
    print(tables["summary"].to_string(index=False))
    print(f"wrote report tables to {report_dir}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "pretrain": cmd_pretrain,
    "run": cmd_run,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="experiment config JSON (see configs/)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel (building, strategy) runs (run only)")
    common.add_argument("--dry-run", action="store_true",
                        help="print the plan without writing anything")
    common.add_argument("--out", default="out",
                        help="workspace directory (default: out)")

    parser = _Parser(prog="thermadapt",
                     description="building drift benchmark pipeline")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{simulate,pretrain,run,report}")
    sub.add_parser("simulate", parents=[common],
                   help="generate target building series with drift")
    sub.add_parser("pretrain", parents=[common],
                   help="train the shared starting model on source buildings")
    sub.add_parser("run", parents=[common],
                   help="evaluate every strategy on every building")
    sub.add_parser("report", parents=[common],
                   help="aggregate the result log into report tables")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (None, 0) else int(exc.code)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config, seed_override=args.seed)
    except (OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](cfg, Path(args.out), args)
    except Exception as exc:
        log.error("%s failed: %s", args.command, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
