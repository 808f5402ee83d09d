"""Stochastic occupancy regimes: setpoints, internal gains, window airing.

A profile is one household's weekly rhythm on a 15-min grid (7 x 96 slots,
Monday first). Day types are workday / Saturday / Sunday; holidays are not
modeled. All draws come from a single seeded generator so a profile is a
pure function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["OccupancyProfile", "generate_occupancy"]

SLOTS_PER_DAY = 96
_NIGHT_FROM = 22 * 4  # 22:00
_NIGHT_TO = 6 * 4  # 06:00

# presence heat per occupant (W): awake / asleep; appliance base loads (W)
_GAIN_AWAKE = 90.0
_GAIN_ASLEEP = 70.0
_BASE_NIGHT = 20.0
_BASE_AWAY = 40.0
_BASE_EVENING = 120.0
_BASE_SAT = 150.0
_BASE_SUN = 100.0


@dataclass
class OccupancyProfile:
    """Weekly setpoint / gain / window-opening schedules for one regime."""

    n_occupants: int
    t_sp_day: float
    dt_night: float
    gains: np.ndarray  # (7, 96) W
    window_open: np.ndarray  # (7, 96) bool

    def setpoints(self) -> np.ndarray:
        """(7, 96) °C heating setpoint; night setback spans 22:00-06:00."""
        sched = np.full((7, SLOTS_PER_DAY), self.t_sp_day)
        sched[:, _NIGHT_FROM:] = self.t_sp_day - self.dt_night
        sched[:, :_NIGHT_TO] = self.t_sp_day - self.dt_night
        return sched

    def validate(self) -> "OccupancyProfile":
        if not 1 <= self.n_occupants <= 5:
            raise ValueError(f"n_occupants out of range: {self.n_occupants}")
        if not 20.0 <= self.t_sp_day <= 24.0:
            raise ValueError(f"t_sp_day out of range: {self.t_sp_day}")
        if not (self.dt_night == 0.0 or 0.5 <= self.dt_night <= 4.0):
            raise ValueError(f"dt_night out of range: {self.dt_night}")
        if self.gains.shape != (7, SLOTS_PER_DAY) or np.any(self.gains < 0):
            raise ValueError("bad gain schedule")
        if self.window_open.shape != (7, SLOTS_PER_DAY):
            raise ValueError("bad window schedule")
        return self


def generate_occupancy(
    seed: int, t_sp_day: float | None = None, dt_night: float | None = None
) -> OccupancyProfile:
    """Draw one occupancy regime.

    Occupant count is uniform on 1..5, the day setpoint uniform on
    [20, 24] °C, and 70% of households use a night setback drawn uniformly
    from [0.5, 4] °C (the rest hold the setpoint around the clock).
    Benchmark targets pin their setpoints through the two overrides.
    """
    rng = np.random.default_rng(seed)
    n_occ = int(rng.integers(1, 6))
    if t_sp_day is None:
        t_sp_day = float(rng.uniform(20.0, 24.0))
    if dt_night is None:
        dt_night = float(rng.uniform(0.5, 4.0)) if rng.random() < 0.7 else 0.0

    slots = np.arange(SLOTS_PER_DAY)
    night = (slots >= _NIGHT_FROM) | (slots < _NIGHT_TO)
    morning = (slots >= 6 * 4) & (slots < 8 * 4)
    work_away = (slots >= 8 * 4) & (slots < 17 * 4)
    evening = (slots >= 17 * 4) & (slots < _NIGHT_FROM)
    weekend_day = (slots >= 6 * 4) & (slots < _NIGHT_FROM)

    workday = np.where(night, n_occ * _GAIN_ASLEEP + _BASE_NIGHT, 0.0)
    workday = np.where(morning | evening, n_occ * _GAIN_AWAKE + _BASE_EVENING, workday)
    workday = np.where(work_away, _BASE_AWAY, workday)
    saturday = np.where(night, n_occ * _GAIN_ASLEEP + _BASE_NIGHT, 0.0)
    saturday = np.where(weekend_day, n_occ * _GAIN_AWAKE + _BASE_SAT, saturday)
    sunday = np.where(night, n_occ * _GAIN_ASLEEP + _BASE_NIGHT, 0.0)
    sunday = np.where(weekend_day, n_occ * _GAIN_AWAKE + _BASE_SUN, sunday)

    gains = np.vstack([np.tile(workday, (5, 1)), saturday[None], sunday[None]])
    gains = gains * rng.uniform(0.8, 1.2, size=gains.shape)

    window_open = np.zeros((7, SLOTS_PER_DAY), dtype=bool)
    for day in range(7):
        for _ in range(int(rng.integers(1, 3))):
            start = int(rng.integers(6 * 4, 21 * 4))
            length = int(rng.integers(1, 3))
            window_open[day, start : start + length] = True

    return OccupancyProfile(n_occ, t_sp_day, dt_night, gains, window_open).validate()
