"""Benchmark for adaptive model-update strategies on drifting building thermal data."""

__version__ = "0.1.0"
