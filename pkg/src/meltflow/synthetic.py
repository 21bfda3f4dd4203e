"""Seeded synthetic daily series with a melt-like discharge response.

The generator mixes mechanisms on purpose so the forecasting task has a
realistic difficulty profile: a seasonal temperature cycle with
fast-decaying weather noise, an anti-phase snow cover fraction, spiky
seasonal precipitation, a thresholded nonlinear melt term
max(T, 0)^1.5 * SCA, a sharp saturation-excess flood response once rain
exceeds an infiltration threshold, a slow hidden baseflow and
right-skewed innovations. Persistence misses the drivers entirely, a
linear map cannot represent the products, and the sharp flood step plus
skewed noise penalise smoothers more than mean-fitting networks.
"""

from __future__ import annotations

import numpy as np

from .data import TimeSeriesTable
from .errors import ParameterError

YEAR_DAYS = 365.25


def synthetic_snowmelt_table(
    n_days: int = 2000,
    seed: int = 42,
    start: str = "2002-01-01",
    noise_scale: float = 1.0,
) -> TimeSeriesTable:
    """Generate a daily (T, P, Q, SCA) table of length ``n_days``."""
    if n_days < 10:
        raise ParameterError(f"n_days must be >= 10, got {n_days}")
    rng = np.random.default_rng(seed)
    t = np.arange(n_days, dtype=np.float64)
    phase = 2.0 * np.pi * (t - 110.0) / YEAR_DAYS

    # temperature: seasonal cycle plus fast-decaying weather noise
    temp_noise = np.zeros(n_days)
    for k in range(1, n_days):
        temp_noise[k] = 0.3 * temp_noise[k - 1] + rng.normal(scale=3.2 * noise_scale)
    temp = 5.0 + 11.0 * np.sin(phase) + temp_noise

    # snow cover: anti-phase with temperature, slow drift, clipped fraction
    sca_noise = np.zeros(n_days)
    for k in range(1, n_days):
        sca_noise[k] = 0.9 * sca_noise[k - 1] + rng.normal(scale=0.02 * noise_scale)
    sca = np.clip(0.55 - 0.38 * np.sin(phase - 0.7) + sca_noise, 0.02, 1.0)

    # precipitation: seasonal mean, multiplicative noise, occasional storms
    p_base = np.maximum(1.5 + 2.5 * np.sin(2.0 * np.pi * (t - 160.0) / YEAR_DAYS), 0.05)
    precip = p_base * rng.gamma(shape=2.0, scale=0.5, size=n_days)
    storm_days = rng.random(n_days) < 0.06 * np.maximum(
        np.sin(2.0 * np.pi * (t - 160.0) / YEAR_DAYS), 0.15
    )
    precip = precip + storm_days * rng.gamma(shape=2.5, scale=4.0, size=n_days)

    # hidden slow baseflow the models cannot observe directly
    base = np.zeros(n_days)
    for k in range(1, n_days):
        base[k] = 0.97 * base[k - 1] + rng.normal(scale=0.04 * noise_scale)

    melt = 0.22 * np.maximum(temp, 0.0) ** 1.5 * sca
    # saturation-excess runoff: near-step response once rain tops ~2.5 mm
    flood = 2.4 / (1.0 + np.exp(-(precip - 2.5) / 0.06))
    # right-skewed innovations (recentred gamma)
    eps_std = 0.10 * noise_scale
    eps = rng.gamma(shape=0.8, scale=eps_std / np.sqrt(0.8), size=n_days) - np.sqrt(0.8) * eps_std

    q = np.zeros(n_days)
    q[0] = 5.0
    for k in range(n_days - 1):
        q[k + 1] = (
            0.35 * q[k] + melt[k] + 0.05 * precip[k] + flood[k] + base[k] + eps[k + 1] + 1.0
        )
    q = np.maximum(q, 0.05)

    dates = np.datetime64(start, "D") + np.arange(n_days)
    return TimeSeriesTable(
        dates=dates,
        columns={"T": temp, "P": precip, "Q": q, "SCA": sca},
    )


def synthetic_sca8_series(
    table: TimeSeriesTable, cadence: int = 8
) -> tuple[np.ndarray, np.ndarray]:
    """Subsample a daily table's SCA at an 8-day cadence (composite stand-in)."""
    rows = np.arange(0, table.n_rows, cadence)
    return table.dates[rows], table.column("SCA")[rows]
