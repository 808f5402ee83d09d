"""Forecast error metrics: RMSE, MASE, and relative RMSE improvement.

All metrics are computed on (n_windows, horizon) arrays in °C, after
predictions have been mapped back out of scaled space.
"""

from __future__ import annotations

import logging

import numpy as np

__all__ = ["rmse", "mase", "rri", "MASE_DEGENERATE_EPS"]

log = logging.getLogger(__name__)

# naive-forecast denominators below this are reported as degenerate (NaN)
MASE_DEGENERATE_EPS = 1e-9


def _check_pair(truth, pred):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.ndim != 2 or truth.shape != pred.shape:
        raise ValueError(f"metric shapes differ: {truth.shape} vs {pred.shape}")
    return truth, pred


def rmse(truth, pred) -> float:
    """Mean over horizon within each window, mean over windows, one sqrt."""
    truth, pred = _check_pair(truth, pred)
    per_window = np.mean((truth - pred) ** 2, axis=1)
    return float(np.sqrt(np.mean(per_window)))


def mase(truth, pred, anchors) -> float:
    """Mean absolute error scaled by the naive last-value forecast's error.

    ``anchors`` holds the last observed value per window; the naive forecast
    repeats it across the horizon. A denominator below MASE_DEGENERATE_EPS
    (constant truth) returns NaN rather than raising, so callers can exclude
    the window batch from aggregates.
    """
    truth, pred = _check_pair(truth, pred)
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1)
    if anchors.shape[0] != truth.shape[0]:
        raise ValueError(
            f"anchor count {anchors.shape[0]} != window count {truth.shape[0]}"
        )
    numer = np.mean(np.abs(truth - pred))
    denom = np.mean(np.abs(truth - anchors[:, None]))
    if denom < MASE_DEGENERATE_EPS:
        log.warning("mase: degenerate naive denominator (%.3e), returning NaN", denom)
        return float("nan")
    return float(numer / denom)


def rri(rmse_benchmark: float, rmse_model: float) -> float:
    """Relative improvement of the model over the benchmark; positive is better."""
    if not rmse_benchmark > 0:
        raise ValueError(f"rri: benchmark RMSE must be positive, got {rmse_benchmark}")
    return (rmse_benchmark - rmse_model) / rmse_benchmark
