"""Time-series containers and their CSV interchange formats.

Thermal records are uniformly sampled at 15 minutes with columns
(t_in, t_out, q_dir, q_dif, u_in); weather files carry the outdoor subset
and can be swapped in from real measurement exports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

__all__ = [
    "FEATURES",
    "STEP",
    "TimeSeries",
    "WeatherSeries",
    "concat_series",
    "month_periods",
]

FEATURES = ("t_in", "t_out", "q_dir", "q_dif", "u_in")
STEP = pd.Timedelta(minutes=15)
T_IN_BOUNDS = (-10.0, 50.0)
_DATE_FORMAT = "%Y-%m-%dT%H:%M:%S"


def _check_uniform(index: pd.DatetimeIndex, what: str) -> None:
    if len(index) < 2:
        return
    deltas = np.diff(index.asi8)
    if not np.all(deltas == STEP.value):
        bad = int(np.argmax(deltas != STEP.value))
        raise ValueError(f"{what}: non-uniform spacing after {index[bad]}")


@dataclass
class WeatherSeries:
    """Outdoor conditions at 15-min resolution."""

    index: pd.DatetimeIndex
    t_out: np.ndarray
    q_dir: np.ndarray
    q_dif: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    def validate(self) -> "WeatherSeries":
        _check_uniform(self.index, "weather")
        for name in ("t_out", "q_dir", "q_dif"):
            col = getattr(self, name)
            if len(col) != len(self.index):
                raise ValueError(f"weather: column {name} length mismatch")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"weather: non-finite {name}")
        if np.any(self.q_dir < 0) or np.any(self.q_dif < 0):
            raise ValueError("weather: negative irradiance")
        return self

    def slice(self, start, end) -> "WeatherSeries":
        """Half-open [start, end) view by timestamp."""
        i0, i1 = self.index.searchsorted(start), self.index.searchsorted(end)
        return WeatherSeries(
            self.index[i0:i1], self.t_out[i0:i1], self.q_dir[i0:i1], self.q_dif[i0:i1]
        )

    def save_csv(self, path, config_hash=None) -> None:
        frame = pd.DataFrame(
            {"t_out": self.t_out, "q_dir": self.q_dir, "q_dif": self.q_dif},
            index=self.index.rename("timestamp"),
        )
        _write_csv(frame, path, config_hash)

    @staticmethod
    def load_csv(path) -> "WeatherSeries":
        frame = _read_csv(path, ["t_out", "q_dir", "q_dif"])
        return WeatherSeries(
            frame.index,
            frame["t_out"].to_numpy(),
            frame["q_dir"].to_numpy(),
            frame["q_dif"].to_numpy(),
        ).validate()


@dataclass
class TimeSeries:
    """One building's simulated (or imported) thermal record."""

    index: pd.DatetimeIndex
    t_in: np.ndarray
    t_out: np.ndarray
    q_dir: np.ndarray
    q_dif: np.ndarray
    u_in: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    def features(self) -> np.ndarray:
        """(T, 5) feature block in canonical column order."""
        return np.column_stack([getattr(self, name) for name in FEATURES])

    def validate(self) -> "TimeSeries":
        _check_uniform(self.index, "series")
        for name in FEATURES:
            col = getattr(self, name)
            if len(col) != len(self.index):
                raise ValueError(f"series: column {name} length mismatch")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"series: non-finite {name}")
        lo, hi = T_IN_BOUNDS
        if np.any(self.t_in < lo) or np.any(self.t_in > hi):
            raise ValueError(
                f"series: t_in outside [{lo}, {hi}] "
                f"(min {self.t_in.min():.2f}, max {self.t_in.max():.2f})"
            )
        if np.any(self.u_in < 0) or np.any(self.u_in > 1):
            raise ValueError("series: u_in outside [0, 1]")
        return self

    def slice(self, start, end) -> "TimeSeries":
        i0, i1 = self.index.searchsorted(start), self.index.searchsorted(end)
        return TimeSeries(
            self.index[i0:i1],
            *(getattr(self, n)[i0:i1] for n in FEATURES),
        )

    def save_csv(self, path, config_hash=None) -> None:
        frame = pd.DataFrame(
            {name: getattr(self, name) for name in FEATURES},
            index=self.index.rename("timestamp"),
        )
        _write_csv(frame, path, config_hash)

    @staticmethod
    def load_csv(path) -> "TimeSeries":
        frame = _read_csv(path, list(FEATURES))
        return TimeSeries(
            frame.index, *(frame[name].to_numpy() for name in FEATURES)
        ).validate()


def _write_csv(frame: pd.DataFrame, path, config_hash) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        frame.to_csv(fh, date_format=_DATE_FORMAT, float_format="%.6f", lineterminator="\n")


def _read_csv(path, columns) -> pd.DataFrame:
    frame = pd.read_csv(path, comment="#", parse_dates=["timestamp"], index_col="timestamp")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return frame[columns].astype(np.float64)


def concat_series(segments) -> TimeSeries:
    """Join simulated segments; boundaries must be exactly one step apart."""
    segments = [s for s in segments if len(s)]
    if not segments:
        raise ValueError("concat_series: nothing to join")
    for a, b in zip(segments, segments[1:]):
        if b.index[0] - a.index[-1] != STEP:
            raise ValueError(
                f"concat_series: gap between {a.index[-1]} and {b.index[0]}"
            )
    return TimeSeries(
        segments[0].index.append([s.index for s in segments[1:]]),
        *(
            np.concatenate([getattr(s, name) for s in segments])
            for name in FEATURES
        ),
    )


def month_periods(ts: TimeSeries, months: int) -> list[TimeSeries]:
    """Split into consecutive calendar periods of ``months`` months each.

    A trailing partial period (fewer than ``months`` calendar months) is
    dropped so every period spans the same calendar length.
    """
    if months not in (1, 2, 3):
        raise ValueError(f"period length must be 1, 2, or 3 months, got {months}")
    month_code = ts.index.year * 12 + ts.index.month
    rel = month_code - month_code[0]
    group = rel // months
    n_full = (rel.max() + 1) // months
    out = []
    for g in range(n_full):
        mask = group == g
        if not mask.any():
            raise ValueError(f"month_periods: empty period {g}")
        i0 = int(np.argmax(mask))
        i1 = i0 + int(mask.sum())
        out.append(
            TimeSeries(ts.index[i0:i1], *(getattr(ts, n)[i0:i1] for n in FEATURES))
        )
    return out
