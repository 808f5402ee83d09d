"""Two-node RC thermal simulation with proportional heating control.

The zone is an air node (fast, furnished) coupled to a wall node (slow,
massive); the wall sits mid-envelope so air-wall and wall-out conductances
each carry twice the opaque UA. Windows and ventilation bypass the mass
directly to outdoors. Integration is explicit Euler at 60 s inside each
15-min interval; weather and schedules are held constant across an interval.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .building import KP_BAND, BuildingParams, apply_retrofit, envelope
from .occupancy import OccupancyProfile, generate_occupancy
from .schedule import DriftSchedule
from .seeding import derive_seed
from .series import STEP, TimeSeries, WeatherSeries, concat_series

__all__ = ["simulate", "generate_target_timeseries", "initial_state"]

SUBSTEPS = 15
DT = 60.0  # s
_ABORT_ABOVE = 100.0  # °C; runaway integration guard


def initial_state(occupancy: OccupancyProfile, weather: WeatherSeries, at) -> tuple:
    """Start at the current setpoint with the wall half-way to outdoors."""
    at = pd.Timestamp(at)
    sp = occupancy.setpoints()[at.dayofweek, at.hour * 4 + at.minute // 15]
    i = weather.index.searchsorted(at)
    t_out = float(weather.t_out[min(i, len(weather) - 1)])
    return float(sp), (float(sp) + t_out) / 2.0


def simulate(
    params: BuildingParams,
    occupancy: OccupancyProfile,
    weather: WeatherSeries,
    start=None,
    end=None,
    state: tuple | None = None,
):
    """Integrate [start, end) and return (TimeSeries, final (t_air, t_wall)).

    Samples are recorded at interval starts, so chained segments share no
    timestamps and concatenate gaplessly. ``state`` defaults to
    ``initial_state`` at ``start``.
    """
    w = weather if start is None and end is None else weather.slice(
        start if start is not None else weather.index[0],
        end if end is not None else weather.index[-1] + STEP,
    )
    n = len(w)
    if n == 0:
        raise ValueError("simulate: empty weather span")
    if state is None:
        state = initial_state(occupancy, weather, w.index[0])
    t_air, t_wall = float(state[0]), float(state[1])

    env = envelope(params)
    q_nom = params.q_nominal
    kp = q_nom / KP_BAND
    h_aw = 2.0 * env.ua_opaque
    h_wo = 2.0 * env.ua_opaque
    ua_win = env.ua_win
    c_a = env.c_air
    c_w = env.c_wall

    dow = w.index.dayofweek.to_numpy()
    slot = (w.index.hour * 4 + w.index.minute // 15).to_numpy()
    setpoint = occupancy.setpoints()[dow, slot]
    gains = occupancy.gains[dow, slot]
    h_vent = np.where(
        occupancy.window_open[dow, slot], env.h_vent_open, env.h_vent_base
    )
    q_sol = env.solar_gain_per_flux * (w.q_dir + w.q_dif)
    t_out = w.t_out

    rec_t = np.empty(n)
    rec_u = np.empty(n)
    dt_ca = DT / c_a
    dt_cw = DT / c_w
    for k in range(n):
        sp = setpoint[k]
        to = t_out[k]
        h_loss = ua_win + h_vent[k]
        q_free = q_sol[k] + gains[k]

        heat = kp * (sp - t_air)
        heat = 0.0 if heat < 0.0 else (q_nom if heat > q_nom else heat)
        rec_t[k] = t_air
        rec_u[k] = heat / q_nom

        for _ in range(SUBSTEPS):
            heat = kp * (sp - t_air)
            heat = 0.0 if heat < 0.0 else (q_nom if heat > q_nom else heat)
            d_air = (
                h_aw * (t_wall - t_air) + h_loss * (to - t_air) + heat + q_free
            ) * dt_ca
            d_wall = (h_aw * (t_air - t_wall) + h_wo * (to - t_wall)) * dt_cw
            t_air += d_air
            t_wall += d_wall
        if not (-_ABORT_ABOVE < t_air < _ABORT_ABOVE):
            raise RuntimeError(
                f"unstable integration: t_air={t_air:.1f} °C at {w.index[k]} "
                f"(interval {k}, t_wall={t_wall:.1f})"
            )

    ts = TimeSeries(w.index, rec_t, t_out.copy(), w.q_dir.copy(), w.q_dif.copy(), rec_u)
    return ts, (t_air, t_wall)


def generate_target_timeseries(
    params: BuildingParams,
    occupancy: OccupancyProfile,
    weather: WeatherSeries,
    schedule: DriftSchedule,
    seed: int,
) -> TimeSeries:
    """Simulate segment-by-segment across the drift schedule.

    Occupancy events redraw the household (seeded per event index), retrofit
    events re-insulate and re-size; thermal state carries across boundaries.
    On a merged occ+retro date both apply, household first.
    """
    schedule.validate()
    start = weather.index[0]
    boundaries: list[tuple[pd.Timestamp, list[str]]] = []
    for ev in schedule.changes():
        if boundaries and boundaries[-1][0] == ev.time:
            boundaries[-1][1].append(ev.kind)
        else:
            boundaries.append((ev.time, [ev.kind]))

    segments = []
    state = initial_state(occupancy, weather, start)
    cursor = start
    occ_redraws = 0
    for time, kinds in boundaries + [(schedule.end_time, [])]:
        if time > cursor:
            seg, state = simulate(params, occupancy, weather, cursor, time, state)
            segments.append(seg)
            cursor = time
        for kind in kinds:
            if kind == "occ":
                occ_redraws += 1
                occupancy = generate_occupancy(derive_seed(seed, "occ-redraw", occ_redraws))
            elif kind == "retro":
                params = apply_retrofit(params, occupancy)
    return concat_series(segments).validate()
