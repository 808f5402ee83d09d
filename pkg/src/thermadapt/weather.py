"""Synthetic weather: sinusoidal climate plus AR(1) noise and stochastic clouds.

Stands in for measured test-reference-year files. Per-location constants
order the three climates plausibly; they are declared values, not fitted
ones. Real data can replace this module through the weather CSV import.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .autodiff import sigmoid
from .series import STEP, WeatherSeries

__all__ = ["LOCATIONS", "synth_weather"]

# (annual mean °C, annual amplitude °C, diurnal amplitude °C, latitude °N)
LOCATIONS = {
    "munich": (9.0, 10.0, 5.0, 48.1),
    "amsterdam": (10.5, 7.0, 4.0, 52.4),
    "bratislava": (10.5, 11.0, 5.0, 48.1),
}

# AR(1) temperature noise: 36 h correlation, 3 °C stationary std
_T_NOISE_PHI = float(np.exp(-0.25 / 36.0))
_T_NOISE_STD = 3.0
# cloud latent field: 6 h correlation
_CLOUD_PHI = float(np.exp(-0.25 / 6.0))

_STEPS_PER_DAY = 96


def synth_weather(weather_id: str, years: int, seed: int, start_year: int = 2015) -> WeatherSeries:
    """Generate ``years`` calendar years of 15-min weather for one location."""
    if weather_id not in LOCATIONS:
        raise ValueError(f"unknown weather id '{weather_id}' (have {sorted(LOCATIONS)})")
    if years < 1:
        raise ValueError("years must be >= 1")
    mean, a_year, a_day, lat = LOCATIONS[weather_id]
    index = pd.date_range(
        start=f"{start_year}-01-01",
        end=f"{start_year + years - 1}-12-31 23:45",
        freq="15min",
    )
    n = len(index)
    rng = np.random.default_rng(seed)

    day_of_year = index.dayofyear.to_numpy().astype(np.float64)
    hour = (index.hour + index.minute / 60.0).to_numpy()

    # temperature: coldest around Jan 15, warmest mid-July, daily peak at 14:00
    t_out = (
        mean
        - a_year * np.cos(2.0 * np.pi * (day_of_year - 15.0) / 365.25)
        + a_day * np.cos(2.0 * np.pi * (hour - 14.0) / 24.0)
        + _ar1(rng, n, _T_NOISE_PHI, _T_NOISE_STD)
    )

    # solar elevation from declination and hour angle; sun below horizon -> 0
    decl = np.radians(-23.44) * np.cos(2.0 * np.pi * (day_of_year + 10.0) / 365.25)
    hour_angle = np.radians(15.0 * (hour - 12.0))
    lat_r = np.radians(lat)
    sin_elev = np.sin(lat_r) * np.sin(decl) + np.cos(lat_r) * np.cos(decl) * np.cos(
        hour_angle
    )
    clear_sky = 1000.0 * np.clip(sin_elev, 0.0, None) ** 1.15

    # smooth cloud transmittance in (0.25, 1.0); overcast skies go diffuse
    k_t = 0.25 + 0.75 * sigmoid(1.5 * _ar1(rng, n, _CLOUD_PHI, 1.0))
    ghi = clear_sky * k_t
    f_dif = np.clip(1.0 - (k_t - 0.25), 0.25, 1.0)
    q_dif = ghi * f_dif
    q_dir = ghi - q_dif

    return WeatherSeries(index, t_out, q_dir, q_dif).validate()


def _ar1(rng, n, phi, stationary_std):
    innov_std = stationary_std * np.sqrt(1.0 - phi * phi)
    eps = rng.normal(0.0, innov_std, n)
    state0 = rng.normal(0.0, stationary_std)
    out, _ = lfilter([1.0], [1.0, -phi], eps, zi=np.array([phi * state0]))
    return out
