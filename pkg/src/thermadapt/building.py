"""Building envelopes: parameter grid, heat-source sizing, retrofit.

Geometry beyond ground area and window fraction is fixed: two floors of
a_ground each at 2.6 m, square footprint, flat roof. Window U-value is tied
to the wall (u_win = 1 + u_wall) until a retrofit replaces both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .occupancy import OccupancyProfile, generate_occupancy

__all__ = [
    "BuildingParams",
    "TargetSpec",
    "TARGETS",
    "apply_retrofit",
    "envelope",
    "full_grid",
    "make_building",
    "sample_random_specs",
    "sample_source_specs",
    "size_heat_source",
]

U_WALL_GRID = (0.25, 0.55, 0.85, 1.15)
C_WALL_GRID = (40.0, 150.0, 280.0)  # kJ/(m^2 K)
F_WIN_GRID = (0.16, 0.19)
A_GROUND_GRID = (70.0, 100.0)
WEATHER_GRID = ("munich", "amsterdam", "bratislava")

RETRO_U_WALL = 0.11
RETRO_U_WIN = 0.7

N_FLOORS = 2
FLOOR_HEIGHT = 2.6  # m
G_VALUE = 0.6
# one facade (0.25) further derated for incidence and shading (0.5)
SOLAR_APERTURE = 0.25 * 0.5
RHO_AIR = 1.2  # kg/m^3
CP_AIR = 1005.0  # J/(kg K)
ACH_BASE = 0.4
ACH_OPEN = 2.5
T_DESIGN = -12.0  # °C sizing outdoor temperature
AIR_CAP_MULT = 5.0  # furnished-zone multiplier on bare-air capacitance
KP_BAND = 0.5  # °C of error at which the heater reaches full power


class ConfigurationError(ValueError):
    """Physically inconsistent building configuration."""


@dataclass(frozen=True)
class BuildingParams:
    u_wall: float  # W/(m^2 K)
    c_wall: float  # kJ/(m^2 K)
    f_win: float
    a_ground: float  # m^2
    weather_id: str
    u_win: float
    u_roof: float
    q_nominal: float  # W
    retrofitted: bool = False


@dataclass(frozen=True)
class Envelope:
    """Derived areas, conductances, and capacitances for the RC network."""

    volume: float
    a_wall: float
    a_win: float
    a_roof: float
    ua_opaque: float  # walls + roof, W/K
    ua_win: float  # W/K
    h_vent_base: float  # W/K at baseline air change
    h_vent_open: float  # W/K while a window is open
    c_air: float  # J/K
    c_wall: float  # J/K
    solar_gain_per_flux: float  # W per W/m^2 of (q_dir + q_dif)


def envelope(params: BuildingParams) -> Envelope:
    side = math.sqrt(params.a_ground)
    wall_gross = 4.0 * side * N_FLOORS * FLOOR_HEIGHT
    a_win = params.f_win * wall_gross
    a_wall = wall_gross - a_win
    a_roof = params.a_ground
    volume = N_FLOORS * params.a_ground * FLOOR_HEIGHT
    vent_coeff = RHO_AIR * CP_AIR * volume / 3600.0
    return Envelope(
        volume=volume,
        a_wall=a_wall,
        a_win=a_win,
        a_roof=a_roof,
        ua_opaque=params.u_wall * a_wall + params.u_roof * a_roof,
        ua_win=params.u_win * a_win,
        h_vent_base=vent_coeff * ACH_BASE,
        h_vent_open=vent_coeff * ACH_OPEN,
        c_air=AIR_CAP_MULT * RHO_AIR * CP_AIR * volume,
        c_wall=params.c_wall * 1000.0 * (a_wall + a_roof),
        solar_gain_per_flux=G_VALUE * SOLAR_APERTURE * a_win,
    )


def size_heat_source(params: BuildingParams, occupancy: OccupancyProfile) -> float:
    """Nominal heater power covering transmission and baseline ventilation
    losses at the design outdoor temperature."""
    env = envelope(params)
    ua_total = env.ua_opaque + env.ua_win
    q = (ua_total + env.h_vent_base) * (occupancy.t_sp_day - T_DESIGN)
    if q <= 0:
        raise ConfigurationError(
            f"non-positive nominal power {q:.1f} W for setpoint {occupancy.t_sp_day}"
        )
    return q


def make_building(
    u_wall: float,
    c_wall: float,
    f_win: float,
    a_ground: float,
    weather_id: str,
    occupancy: OccupancyProfile,
) -> BuildingParams:
    """Assemble params with derived U-values and a sized heat source."""
    p = BuildingParams(
        u_wall=u_wall,
        c_wall=c_wall,
        f_win=f_win,
        a_ground=a_ground,
        weather_id=weather_id,
        u_win=1.0 + u_wall,
        u_roof=u_wall,
        q_nominal=0.0,
    )
    return replace(p, q_nominal=size_heat_source(p, occupancy))


def apply_retrofit(params: BuildingParams, occupancy: OccupancyProfile) -> BuildingParams:
    """Insulate walls/roof to 0.11 and windows to 0.7 W/(m^2 K); re-size the
    heater for the current occupancy. Geometry is untouched."""
    if params.retrofitted:
        raise ValueError("building is already retrofitted")
    p = replace(
        params,
        u_wall=RETRO_U_WALL,
        u_roof=RETRO_U_WALL,
        u_win=RETRO_U_WIN,
        retrofitted=True,
    )
    return replace(p, q_nominal=size_heat_source(p, occupancy))


@dataclass(frozen=True)
class TargetSpec:
    """One benchmark target: envelope grid point plus pinned setpoints."""

    u_wall: float
    c_wall: float
    f_win: float
    a_ground: float
    t_sp_day: float
    dt_night: float
    weather_id: str

    def occupancy(self, seed: int) -> OccupancyProfile:
        return generate_occupancy(seed, t_sp_day=self.t_sp_day, dt_night=self.dt_night)

    def building(self, occupancy: OccupancyProfile) -> BuildingParams:
        return make_building(
            self.u_wall, self.c_wall, self.f_win, self.a_ground, self.weather_id, occupancy
        )


TARGETS: dict[str, TargetSpec] = {
    "T1": TargetSpec(0.25, 40.0, 0.16, 70.0, 22.0, 1.0, "bratislava"),
    "T2": TargetSpec(0.25, 280.0, 0.19, 100.0, 21.0, 0.0, "amsterdam"),
    "T3": TargetSpec(0.55, 150.0, 0.16, 70.0, 23.0, 0.0, "amsterdam"),
    "T4": TargetSpec(0.55, 280.0, 0.19, 100.0, 20.5, 1.5, "munich"),
    "T5": TargetSpec(0.85, 40.0, 0.16, 70.0, 22.0, 2.5, "munich"),
    "T6": TargetSpec(0.85, 150.0, 0.19, 100.0, 22.5, 0.5, "bratislava"),
    "T7": TargetSpec(1.15, 280.0, 0.16, 70.0, 23.0, 0.0, "bratislava"),
    "T8": TargetSpec(1.15, 40.0, 0.19, 100.0, 23.0, 1.5, "amsterdam"),
}


def full_grid() -> list[tuple]:
    """All (u_wall, c_wall, f_win, a_ground, weather_id) grid points."""
    return [
        (u, c, f, a, w)
        for u in U_WALL_GRID
        for c in C_WALL_GRID
        for f in F_WIN_GRID
        for a in A_GROUND_GRID
        for w in WEATHER_GRID
    ]


def sample_source_specs(seed: int, count: int) -> list[tuple]:
    """Sample pretraining envelopes from the grid, never colliding with a
    target's envelope tuple."""
    taken = {
        (t.u_wall, t.c_wall, t.f_win, t.a_ground, t.weather_id)
        for t in TARGETS.values()
    }
    pool = [g for g in full_grid() if g not in taken]
    if count > len(pool):
        raise ConfigurationError(f"only {len(pool)} disjoint envelopes available")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in sorted(picks)]


def sample_random_specs(seed: int, count: int, exclude: set | tuple = ()) -> list[tuple]:
    """Independent uniform draws from the grid for the randomized scenario;
    draws colliding with `exclude` are redrawn."""
    rng = np.random.default_rng(seed)
    banned = set(exclude)
    out: list[tuple] = []
    while len(out) < count:
        pick = (
            float(rng.choice(U_WALL_GRID)),
            float(rng.choice(C_WALL_GRID)),
            float(rng.choice(F_WIN_GRID)),
            float(rng.choice(A_GROUND_GRID)),
            str(rng.choice(WEATHER_GRID)),
        )
        if pick not in banned:
            out.append(pick)
    return out
