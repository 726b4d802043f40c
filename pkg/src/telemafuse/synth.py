"""Synthetic labeled telemetry built from mean-reverting random walks."""

from __future__ import annotations

import logging
from typing import Iterator

import numpy as np
from scipy.signal import lfilter

from .config import ChannelModel, SynthSpec
from .errors import OutputError
from .ingest import CHANNELS, HEADING, SPEED, BinaryLabel, TripStream, write_trip_csv

log = logging.getLogger(__name__)

DECIMALS = 4


def mean_reverting_walk(start: float, level: float, theta: float, sigma: float,
                        noise: np.ndarray) -> np.ndarray:
    """x[0] = start, x[t+1] = x[t] + theta*(level - x[t]) + sigma*noise[t].

    Returns ``len(noise) + 1`` values.
    """
    a = 1.0 - theta
    drive = theta * level + sigma * noise
    if len(drive) == 0:
        return np.array([start], dtype=np.float64)
    rest, _ = lfilter([1.0], [1.0, -a], drive, zi=[a * start])
    return np.concatenate([[start], rest])


def _class_model(ch: ChannelModel, label: BinaryLabel, separation: float) -> tuple[float, float]:
    if label is BinaryLabel.FEMALE:
        return (ch.level + separation * ch.class_offset,
                ch.sigma * (1.0 + separation * (ch.class_sigma_ratio - 1.0)))
    return ch.level, ch.sigma


def generate_trips(spec: SynthSpec) -> Iterator[TripStream]:
    """Yield trips driver by driver: all class-0 drivers, then class-1.

    Values are rounded to 1e-4, speed is floored at zero and heading is
    wrapped into [0, 360).
    """
    window_hint = 2 * 256
    if spec.duration_s < window_hint:
        log.warning("trips of %d s are shorter than two default windows", spec.duration_s)
    rng = np.random.default_rng(spec.seed)
    n = spec.duration_s * spec.rate_hz
    t = np.arange(n) / spec.rate_hz
    driver_no = 0
    for label in (BinaryLabel.MALE, BinaryLabel.FEMALE):
        for _ in range(spec.n_drivers_per_class):
            driver_id = f"D{driver_no:04d}"
            driver_no += 1
            levels = {}
            for name in CHANNELS:
                ch = spec.channels[name]
                level, sigma = _class_model(ch, label, spec.separation)
                level += ch.driver_spread * rng.standard_normal()
                sigma *= np.exp(ch.driver_sigma_spread * rng.standard_normal())
                levels[name] = (level, sigma)
            for k in range(spec.trips_per_driver):
                values = np.empty((n, len(CHANNELS)))
                for c, name in enumerate(CHANNELS):
                    level, sigma = levels[name]
                    ch = spec.channels[name]
                    noise = rng.standard_normal(n - 1)
                    values[:, c] = mean_reverting_walk(level, level, ch.theta, sigma, noise)
                values = np.round(values, DECIMALS)
                values[:, SPEED] = np.maximum(values[:, SPEED], 0.0)
                values[:, HEADING] = np.mod(values[:, HEADING], 360.0)
                values[values[:, HEADING] >= 360.0, HEADING] = 0.0
                yield TripStream(f"{driver_id}-T{k:02d}", driver_id, label, spec.rate_hz, t, values)


def cmd_synth(spec: SynthSpec, out_path) -> int:
    """Write synthetic trips to ``out_path``; returns the number of trips."""
    count = 0

    def counted():
        nonlocal count
        for trip in generate_trips(spec):
            count += 1
            yield trip

    try:
        write_trip_csv(counted(), out_path)
    except OSError as exc:
        raise OutputError(f"cannot write {out_path}: {exc.strerror}") from None
    return count
