"""Synthetic solar-driven grid for smoke runs and tests.

Carbon intensity is a daily sinusoid plus a weekday/weekend pattern minus
0.3 gCO2e/kWh per W/m^2 of forecast irradiance, times ``1 + noise * N(0, 1)``.
The noise-free series is returned separately so callers can compute the
irreducible error of any evaluation window.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

BASE_CI = 450.0
DAILY_AMPLITUDE = 40.0
WEEKLY_PATTERN = np.array([20.0, 20.0, 15.0, 15.0, 10.0, -35.0, -45.0])  # Monday first
DSWRF_COEF = 0.3


def make_synthetic_grid(days: int = 730, start: str = "2020-01-01", seed: int = 0,
                        noise: float = 0.05, constant_column: bool = False):
    """Return ``(frame, clean_ci)``; ``frame`` has the CSV layout columns."""
    rng = np.random.default_rng(seed)
    idx = pd.date_range(pd.Timestamp(start, tz="UTC"), periods=days * 24, freq="h",
                        name="datetime")
    hour = idx.hour.to_numpy()
    doy = idx.dayofyear.to_numpy()
    dow = idx.dayofweek.to_numpy()
    day = np.arange(len(idx)) // 24

    # daily cloudiness, AR(1)
    z = np.empty(days)
    z[0] = rng.normal()
    for d in range(1, days):
        z[d] = 0.5 * z[d - 1] + np.sqrt(1 - 0.25) * rng.normal()
    cloud = np.clip(0.6 + 0.3 * z, 0.05, 1.0)[day]
    season = 0.7 + 0.3 * np.sin(2 * np.pi * (doy - 80) / 365.0)
    clear_sky = 900.0 * np.clip(np.sin(np.pi * (hour - 6) / 12.0), 0.0, None)
    dswrf = clear_sky * season * cloud

    clean = (BASE_CI
             + DAILY_AMPLITUDE * np.sin(2 * np.pi * (hour - 3) / 24.0)
             + WEEKLY_PATTERN[dow]
             - DSWRF_COEF * dswrf)
    ci = clean * (1.0 + noise * rng.normal(size=len(idx)))

    wind_state = np.empty(len(idx))
    wind_state[0] = 0.0
    shocks = rng.normal(size=len(idx))
    for t in range(1, len(idx)):
        wind_state[t] = 0.97 * wind_state[t - 1] + 0.25 * shocks[t]
    wind_speed = np.clip(6.0 + 2.0 * wind_state, 0.0, None)
    wind = 40.0 * wind_speed
    solar = 0.8 * dswrf
    demand = 2000.0 + 300.0 * np.sin(2 * np.pi * (hour - 14) / 24.0)
    nat_gas = np.clip(demand - solar - wind, 0.0, None)
    temp = (12.0 + 10.0 * np.sin(2 * np.pi * (doy - 110) / 365.0)
            + 4.0 * np.sin(2 * np.pi * (hour - 9) / 24.0) + rng.normal(0, 1.0, len(idx)))

    frame = pd.DataFrame({
        "carbon_intensity": ci,
        "nat_gas": nat_gas,
        "solar": solar,
        "wind": wind,
        "forecast_dswrf": dswrf,
        "forecast_temp": temp,
        "forecast_wind_speed": wind_speed,
    }, index=idx)
    if constant_column:
        frame["forecast_constant"] = 1.0
    return frame, pd.Series(clean, index=idx, name="clean_ci")


def write_grid_csv(frame: pd.DataFrame, path) -> None:
    out = frame.copy()
    out.index = out.index.strftime("%Y-%m-%dT%H:%M:%SZ")
    out.index.name = "datetime"
    out.to_csv(path, float_format="%.10g")
