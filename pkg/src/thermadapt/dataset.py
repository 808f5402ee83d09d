"""Supervised windowing, train/val splitting, and feature scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .series import FEATURES, TimeSeries

LOOKBACK = 16
HORIZON = 4
MIN_SPLIT_WINDOWS = 10
TRAIN_FRACTION = 0.7


@dataclass(frozen=True)
class WindowedDataset:
    """Stride-1 forecasting windows over one contiguous series.

    inputs[i] holds lookback consecutive feature rows, targets[i] the
    following horizon of indoor temperatures, anchors[i] the last observed
    indoor temperature (the naive forecaster's constant prediction).
    anchor_times[i] stamps that last observed row.
    """

    inputs: np.ndarray  # (N, lookback, 5)
    targets: np.ndarray  # (N, horizon)
    anchors: np.ndarray  # (N,)
    anchor_times: np.ndarray  # (N,) datetime64[ns]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def take(self, index) -> "WindowedDataset":
        return WindowedDataset(
            self.inputs[index],
            self.targets[index],
            self.anchors[index],
            self.anchor_times[index],
        )

    def thin(self, stride: int) -> "WindowedDataset":
        """Keep every stride-th window; stride 1 is the identity."""
        return self if stride == 1 else self.take(slice(None, None, stride))

    def rows(self) -> np.ndarray:
        """All input rows flattened to (N * lookback, 5)."""
        return self.inputs.reshape(-1, len(FEATURES))


def window(series: TimeSeries, lookback: int = LOOKBACK, horizon: int = HORIZON) -> WindowedDataset:
    rows = series.features()
    n = len(rows) - lookback - horizon + 1
    if n < 1:
        raise ValueError(
            f"series has {len(rows)} rows; windowing needs at least {lookback + horizon}"
        )
    inputs = sliding_window_view(rows, lookback, axis=0)[:n].transpose(0, 2, 1)
    targets = sliding_window_view(rows[:, 0], horizon)[lookback:lookback + n]
    anchors = rows[lookback - 1:lookback - 1 + n, 0]
    times = series.index.asi8[lookback - 1:lookback - 1 + n].view("datetime64[ns]")
    return WindowedDataset(inputs.copy(), targets.copy(), anchors.copy(), times.copy())


def concat_datasets(parts: list[WindowedDataset]) -> WindowedDataset:
    if not parts:
        raise ValueError("nothing to concatenate")
    return WindowedDataset(
        np.concatenate([p.inputs for p in parts]),
        np.concatenate([p.targets for p in parts]),
        np.concatenate([p.anchors for p in parts]),
        np.concatenate([p.anchor_times for p in parts]),
    )


def split_train_val(ds: WindowedDataset) -> tuple[WindowedDataset, WindowedDataset]:
    """Chronological split: first 70% of windows train, rest validation."""
    n = len(ds)
    if n < MIN_SPLIT_WINDOWS:
        raise ValueError(f"need at least {MIN_SPLIT_WINDOWS} windows to split, got {n}")
    k = int(np.floor(TRAIN_FRACTION * n))
    return ds.take(slice(0, k)), ds.take(slice(k, n))


def naive_forecast(ds: WindowedDataset) -> np.ndarray:
    """Last observed value held constant over the horizon."""
    return np.tile(ds.anchors[:, None], (1, ds.targets.shape[1]))


class Scaler:
    """Per-feature standardization, fitted once on the pretraining pool.

    The indoor-temperature statistics (feature 0) double as the target
    scaling so predictions can be mapped back to degrees.
    """

    def __init__(self) -> None:
        self.mean_: np.ndarray | None = None
        self.std_: np.ndarray | None = None

    def fit(self, rows: np.ndarray) -> "Scaler":
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(FEATURES):
            raise ValueError(f"expected (n, {len(FEATURES)}) rows, got {rows.shape}")
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        flat = std <= 0.0
        if flat.any():
            names = [FEATURES[i] for i in np.flatnonzero(flat)]
            raise ValueError(f"degenerate features with zero variance: {names}")
        self.mean_, self.std_ = mean, std
        return self

    def _require_fit(self) -> None:
        if self.mean_ is None:
            raise RuntimeError("scaler is not fitted")

    def transform(self, rows: np.ndarray) -> np.ndarray:
        self._require_fit()
        return (rows - self.mean_) / self.std_

    def inverse_transform(self, rows: np.ndarray) -> np.ndarray:
        self._require_fit()
        return rows * self.std_ + self.mean_

    def transform_targets(self, values: np.ndarray) -> np.ndarray:
        self._require_fit()
        return (values - self.mean_[0]) / self.std_[0]

    def inverse_targets(self, values: np.ndarray) -> np.ndarray:
        self._require_fit()
        return values * self.std_[0] + self.mean_[0]

    def get_params(self) -> dict:
        self._require_fit()
        return {"mean": self.mean_.tolist(), "std": self.std_.tolist()}

    @classmethod
    def from_params(cls, params: dict) -> "Scaler":
        scaler = cls()
        scaler.mean_ = np.asarray(params["mean"], dtype=np.float64)
        scaler.std_ = np.asarray(params["std"], dtype=np.float64)
        return scaler


def fit_scaler(ds: WindowedDataset) -> Scaler:
    return Scaler().fit(ds.rows())


def apply_scaler(ds: WindowedDataset, scaler: Scaler) -> WindowedDataset:
    return WindowedDataset(
        scaler.transform(ds.inputs),
        scaler.transform_targets(ds.targets),
        scaler.transform_targets(ds.anchors),
        ds.anchor_times,
    )
