"""Experiment configuration: fail-closed JSON schema and content hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .building import TARGETS
from .harness import RunSettings
from .strategies import STRATEGIES

SCENARIOS = ("no_drift", "retrofit", "occupancy", "large_scale")

# April 1 of simulation year 3 (start is January 1, 2015)
FIXED_EVENT_DATE = "2017-04-01"
START_DATE = "2015-01-01"


@dataclass
class ExperimentConfig:
    """Everything a full pipeline run depends on. Unknown keys are rejected
    at load time so typos cannot silently fall back to defaults."""

    scenario: str = "no_drift"
    years: int = 0  # 0 means scenario default (7 for large_scale, else 5)
    period_months: int = 1
    strategies: tuple[str, ...] = tuple(sorted(STRATEGIES))
    targets: tuple[str, ...] = tuple(sorted(TARGETS))
    target_count: int = 40  # large_scale only
    seed: int = 0
    max_updates: int = 0  # 0 means run every available cycle
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

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(
                f"unknown scenario {self.scenario!r}; valid: {SCENARIOS}"
            )
        if self.years == 0:
            self.years = 7 if self.scenario == "large_scale" else 5
        if self.period_months not in (1, 2, 3):
            raise ValueError("period_months must be 1, 2 or 3")
        self.strategies = tuple(self.strategies)
        if not self.strategies:
            raise ValueError("strategies must not be empty")
        for name in self.strategies:
            if name not in STRATEGIES:
                raise ValueError(
                    f"unknown strategy {name!r}; valid names: {sorted(STRATEGIES)}"
                )
        self.targets = tuple(self.targets)
        if self.scenario != "large_scale":
            for name in self.targets:
                if name not in TARGETS:
                    raise ValueError(
                        f"unknown target {name!r}; valid names: {sorted(TARGETS)}"
                    )
            if not self.targets:
                raise ValueError("targets must not be empty")
        for name in ("years", "target_count", "epochs", "initial_epochs",
                     "batch_size", "train_stride", "test_stride",
                     "pretrain_epochs", "pretrain_stride", "source_count",
                     "source_years", "ewc_buffer", "ewc_refresh",
                     "gem_samples"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        for name in ("seed", "max_updates"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.ewc_penalty < 0:
            raise ValueError("ewc_penalty must be non-negative")

    def settings(self) -> RunSettings:
        keep = {f.name for f in fields(RunSettings)}
        return RunSettings(**{k: v for k, v in asdict(self).items() if k in keep})

    def resolved(self) -> dict:
        blob = asdict(self)
        blob["strategies"] = list(self.strategies)
        blob["targets"] = list(self.targets)
        return blob

    def hash(self) -> str:
        canonical = json.dumps(self.resolved(), sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"config {path} must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(
            f"config {path} has unknown keys {sorted(unknown)}; "
            f"known keys: {sorted(known)}"
        )
    if seed_override is not None:
        raw["seed"] = seed_override
    return ExperimentConfig(**raw)
