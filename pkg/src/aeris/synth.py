"""Seeded synthetic air-quality data standing in for the station file.

PM2.5 is a daily sinusoid plus AR(1) noise with couplings to NO2 and wind
speed. Temperature follows clean daily and seasonal cycles, O3 moves against
NO2. Isolated spikes sized at ten times the outlier threshold and runs of
missing cells are injected afterwards; the truth is returned alongside.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aeris.data import POLLUTANTS, SCHEMA, TimeSeriesFrame, write_csv
from aeris.numcore.rng import SeededRng

START = np.datetime64("2021-01-01T00", "h")


@dataclass
class SynthResult:
    frame: TimeSeriesFrame
    clean: TimeSeriesFrame  # before spikes and gaps
    spikes: dict  # column -> row indices
    missing: dict  # column -> row indices
    dropped_rows: np.ndarray  # rows left out of the CSV entirely


def _ar1(rng, n, phi, sigma):
    e = rng.normal(0.0, sigma, size=n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def synthesize(seed=7, n_hours=8760, spike_size=50.0, n_spikes=None, missing_runs=None, dropped=None):
    if n_hours < 200:
        raise ValueError("n_hours must be >= 200")
    rng = SeededRng(seed)
    n = n_hours
    t = np.arange(n, dtype=np.float64)
    hour = 2 * np.pi * t / 24.0
    year = 2 * np.pi * t / 8760.0

    temperature = 11.0 - 10.0 * np.cos(year) + 5.0 * np.sin(hour - 2 * np.pi * 9 / 24)
    wind_speed = np.abs(3.0 + _ar1(rng.spawn(0), n, 0.9, 0.3))
    wind_direction = np.mod(180.0 + np.cumsum(rng.spawn(1).normal(0.0, 8.0, n)), 360.0)
    no2 = 30.0 + 3.0 * np.sin(hour - 2 * np.pi * 8 / 24) + _ar1(rng.spawn(2), n, 0.8, 0.4)
    o3 = 50.0 - 1.0 * (no2 - 30.0) + _ar1(rng.spawn(3), n, 0.8, 0.3)
    so2 = 8.0 + 0.1 * (no2 - 30.0) + _ar1(rng.spawn(4), n, 0.8, 0.3)
    co = 0.6 + 0.02 * (no2 - 30.0) + _ar1(rng.spawn(5), n, 0.8, 0.02)
    pm25 = (24.0 + 3.0 * np.cos(year) + 3.5 * np.sin(hour - 2 * np.pi * 6 / 24) + 0.1 * (no2 - 30.0)
            - 0.6 * (wind_speed - 3.0) + _ar1(rng.spawn(6), n, 0.8, 0.5))
    pm10 = 0.8 * pm25 + 12.0 + _ar1(rng.spawn(7), n, 0.8, 0.3)
    cols = {"NO2": no2, "SO2": so2, "CO": co, "O3": o3, "wind_direction": wind_direction,
            "temperature": temperature, "wind_speed": wind_speed, "PM10": pm10, "PM2.5": pm25}
    stamps = START + np.arange(n).astype("timedelta64[h]")
    clean = TimeSeriesFrame(stamps, {k: cols[k].copy() for k in SCHEMA})

    inj = rng.spawn(8)
    n_spikes = max(2, n // 500) if n_spikes is None else n_spikes
    missing_runs = max(1, n // 400) if missing_runs is None else missing_runs
    dropped = max(1, n // 2000) if dropped is None else dropped
    busy = np.zeros(n, dtype=bool)  # keeps injected events isolated from each other
    gap = min(24, n // 40)  # spacing shrinks only for short series

    def free_slot(width, margin):
        for _ in range(10_000):
            s = int(inj.integers(margin, n - width - margin))
            if not busy[s - margin:s + width + margin].any():
                busy[s - margin:s + width + margin] = True
                return s
        raise RuntimeError("could not place injected event; increase n_hours")

    values = {k: v.copy() for k, v in cols.items()}
    spikes = {c: [] for c in POLLUTANTS}
    for i in range(n_spikes):
        col = "PM2.5" if i % 2 == 0 else POLLUTANTS[int(inj.integers(0, len(POLLUTANTS)))]
        s = free_slot(1, gap)
        values[col][s] += spike_size
        spikes[col].append(s)
    missing = {c: [] for c in SCHEMA}
    for _ in range(missing_runs):
        col = SCHEMA[int(inj.integers(0, len(SCHEMA)))]
        width = int(inj.integers(2, 9))
        s = free_slot(width, gap)
        values[col][s:s + width] = np.nan
        missing[col].extend(range(s, s + width))
    drop = np.array(sorted(free_slot(1, gap) for _ in range(dropped)), dtype=np.int64)
    frame = TimeSeriesFrame(stamps, {k: values[k] for k in SCHEMA})
    return SynthResult(frame, clean,
                       {k: np.array(sorted(v), dtype=np.int64) for k, v in spikes.items() if v},
                       {k: np.array(sorted(v), dtype=np.int64) for k, v in missing.items() if v},
                       drop)


def synth_data(seed, n_hours, path):
    """Write the synthetic dataset as a station-format CSV; returns the truth."""
    result = synthesize(seed, n_hours)
    write_csv(result.frame, path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    skip = set((result.dropped_rows + 1).tolist())  # line 0 is the header
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(line for i, line in enumerate(lines) if i not in skip)
    return result
