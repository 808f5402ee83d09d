"""Drift-event schedules: random generation, validation, JSON interchange.

A schedule is an ordered list of (kind, time) events ending in exactly one
``end`` marker. Event times are snapped to midnight so segment boundaries
land on calm night steps. "One month" in the spacing and merge rules means
30 days.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

__all__ = [
    "DriftEvent",
    "DriftSchedule",
    "fixed_event_schedule",
    "generate_drift_schedule",
]

EVENT_KINDS = ("occ", "retro", "end")
MONTH = pd.Timedelta(days=30)
RETRO_PROB = 0.70
OCC_COUNT_PROBS = (0.25, 0.35, 0.30, 0.10)  # for 0, 1, 2, 3 changes
_TIME_FORMAT = "%Y-%m-%dT%H:%M:%S"


@dataclass(frozen=True)
class DriftEvent:
    kind: str
    time: pd.Timestamp


@dataclass
class DriftSchedule:
    events: list[DriftEvent]

    def validate(self) -> "DriftSchedule":
        if not self.events or self.events[-1].kind != "end":
            raise ValueError("schedule must end with exactly one 'end' event")
        kinds = [e.kind for e in self.events]
        if kinds.count("end") != 1:
            raise ValueError("schedule must contain exactly one 'end' event")
        if kinds.count("retro") > 1:
            raise ValueError("at most one retrofit allowed")
        if kinds.count("occ") > 3:
            raise ValueError("at most three occupancy changes allowed")
        for k in kinds:
            if k not in EVENT_KINDS:
                raise ValueError(f"unknown event kind '{k}'")
        times = [e.time for e in self.events]
        for a, b in zip(self.events, self.events[1:]):
            if b.time < a.time:
                raise ValueError("event times must be non-decreasing")
            if b.time == a.time and {a.kind, b.kind} != {"occ", "retro"}:
                # a tie is only the merged retrofit+occupancy case
                raise ValueError(f"coinciding events {a.kind}/{b.kind}")
        occ_times = [e.time for e in self.events if e.kind == "occ"]
        for i, t1 in enumerate(occ_times):
            for t2 in occ_times[i + 1 :]:
                if abs(t2 - t1) < MONTH:
                    raise ValueError("occupancy changes closer than one month")
        if any(t >= times[-1] for t in times[:-1]):
            raise ValueError("drift events must precede the end marker")
        return self

    def changes(self) -> tuple[DriftEvent, ...]:
        return tuple(e for e in self.events if e.kind != "end")

    @property
    def end_time(self) -> pd.Timestamp:
        return self.events[-1].time

    def save_json(self, path) -> None:
        payload = [
            {"kind": e.kind, "time": e.time.strftime(_TIME_FORMAT)} for e in self.events
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @staticmethod
    def load_json(path) -> "DriftSchedule":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        events = [DriftEvent(str(d["kind"]), pd.Timestamp(d["time"])) for d in payload]
        return DriftSchedule(events).validate()


def fixed_event_schedule(kind: str, time, end) -> DriftSchedule:
    """Single scripted drift (the fixed April-of-year-3 scenarios)."""
    return DriftSchedule(
        [DriftEvent(kind, pd.Timestamp(time)), DriftEvent("end", pd.Timestamp(end))]
    ).validate()


def no_drift_schedule(end) -> DriftSchedule:
    return DriftSchedule([DriftEvent("end", pd.Timestamp(end))]).validate()


def generate_drift_schedule(seed: int, start, years: int = 7) -> DriftSchedule:
    """Randomized schedule: a retrofit with probability 0.70 and an
    occupancy-change count drawn from (0.25, 0.35, 0.30, 0.10) for 0..3,
    all dated uniformly over the span (snapped to midnight).

    Occupancy changes are redrawn until they sit pairwise at least a month
    apart; an occupancy change landing within a month of the retrofit is
    merged onto the retrofit date (redrawn when more than one would merge).
    """
    rng = np.random.default_rng(seed)
    start = pd.Timestamp(start)
    end = start + pd.DateOffset(years=years)
    total_days = (end - start).days

    retro_day = int(rng.integers(1, total_days)) if rng.random() < RETRO_PROB else None
    n_occ = int(rng.choice(4, p=OCC_COUNT_PROBS))

    for _ in range(1000):
        occ_days = sorted(int(d) for d in rng.integers(1, total_days, size=n_occ))
        if retro_day is not None:
            near = [d for d in occ_days if abs(d - retro_day) <= 30]
            if len(near) > 1:
                continue
            occ_days = sorted(retro_day if d in near else d for d in occ_days)
        if all(b - a >= 30 for a, b in zip(occ_days, occ_days[1:])):
            break
    else:  # pragma: no cover - bounded rejection virtually always succeeds
        raise RuntimeError("could not draw a valid schedule in 1000 tries")

    events = [DriftEvent("occ", start + pd.Timedelta(days=d)) for d in occ_days]
    if retro_day is not None:
        events.append(DriftEvent("retro", start + pd.Timedelta(days=retro_day)))
    # occupancy-before-retrofit on the merged date: the re-sized heater
    # should serve the household that moves in with the renovation
    events.sort(key=lambda e: (e.time, 0 if e.kind == "occ" else 1))
    events.append(DriftEvent("end", end))
    return DriftSchedule(events).validate()
