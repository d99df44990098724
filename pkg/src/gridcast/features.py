"""Supervised examples for per-hour forecast models.

Every example belongs to a forecast day ``D`` starting at midnight UTC. Its
features are, in this column order:

* ``hist_CI``: the 24 hourly CI values of day ``D-1``;
* ``hist_<source>``: 24 hourly generation values of day ``D-1`` per source
  (day-1 layout only);
* ``datetime``: sin/cos of hour of day, day of week and day of year of the
  target timestamp;
* ``forecast_<var>``: the 24 hourly weather forecast values of day ``D``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataset import CI_COLUMN, TimeSeriesTable
from .errors import InsufficientHistory, NonpositivePeriod

DAY1 = "day1"
DAYN = "day2to4"
DAY_CLASSES = (DAY1, DAYN)

DATETIME_GROUP = "datetime"
CI_GROUP = "hist_CI"
DATETIME_COLUMNS = ("hour_sin", "hour_cos", "dow_sin", "dow_cos", "doy_sin", "doy_cos")
HOURS_PER_DAY = 24
DOY_PERIOD = 366.0


@dataclass(frozen=True)
class FeatureMatrix:
    column_names: tuple[str, ...]
    values: np.ndarray
    group_of: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.column_names):
            raise ValueError(
                f"values shape {values.shape} does not match {len(self.column_names)} columns"
            )
        if not np.isfinite(values).all():
            raise ValueError("feature matrix contains NaN or infinite entries")
        if set(self.group_of) != set(self.column_names):
            raise ValueError("every column needs exactly one group")
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def groups(self) -> list[str]:
        """Group names in first-appearance column order."""
        return list(dict.fromkeys(self.group_of[c] for c in self.column_names))

    def group_indices(self, group: str) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.column_names) if self.group_of[c] == group])

    def take_rows(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(self.column_names, self.values[rows], self.group_of)

    def hstack(self, names, values, group: str) -> "FeatureMatrix":
        """Append columns, all assigned to ``group``."""
        names = tuple(names)
        values = np.asarray(values, dtype=float).reshape(self.n_rows, len(names))
        group_of = dict(self.group_of)
        group_of.update({n: group for n in names})
        return FeatureMatrix(self.column_names + names, np.hstack([self.values, values]), group_of)


@dataclass(frozen=True)
class TargetVector:
    values: np.ndarray
    target_hour: int
    target_day: int

    def __len__(self) -> int:
        return len(self.values)


def encode_cyclic(value: float, period: float) -> tuple[float, float]:
    if not period > 0:
        raise NonpositivePeriod(f"period must be positive, got {period}")
    angle = 2.0 * np.pi * value / period
    return float(np.sin(angle)), float(np.cos(angle))


def _cyclic(values: np.ndarray, period: float) -> tuple[np.ndarray, np.ndarray]:
    angle = 2.0 * np.pi * np.asarray(values, dtype=float) / period
    return np.sin(angle), np.cos(angle)


def datetime_values(timestamps) -> np.ndarray:
    """n x 6 array: hour, day-of-week (Monday=0), day-of-year (Jan 1 = 0) pairs."""
    idx = pd.DatetimeIndex(timestamps)
    if len(idx) == 0:
        raise ValueError("need at least one timestamp")
    if idx.tz is not None:
        idx = idx.tz_convert("UTC")
    out = np.empty((len(idx), 6))
    out[:, 0], out[:, 1] = _cyclic(idx.hour, HOURS_PER_DAY)
    out[:, 2], out[:, 3] = _cyclic(idx.dayofweek, 7)
    out[:, 4], out[:, 5] = _cyclic(idx.dayofyear - 1, DOY_PERIOD)
    return out


def build_datetime_block(timestamps) -> FeatureMatrix:
    return FeatureMatrix(
        DATETIME_COLUMNS,
        datetime_values(timestamps),
        {c: DATETIME_GROUP for c in DATETIME_COLUMNS},
    )


@dataclass(frozen=True)
class FeatureLayout:
    """Column layout of one model family; a pure function of the table schema."""

    sources: tuple[str, ...]
    weather: tuple[str, ...]
    day_class: str

    @classmethod
    def for_table(cls, table: TimeSeriesTable, day_class: str) -> "FeatureLayout":
        sources = table.source_columns if day_class == DAY1 else ()
        return cls(tuple(sources), tuple(table.weather_columns), day_class)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(self.group_of)

    @property
    def group_of(self) -> dict[str, str]:
        groups: dict[str, str] = {}
        for h in range(HOURS_PER_DAY):
            groups[f"{CI_GROUP}_h{h:02d}"] = CI_GROUP
        for src in self.sources:
            for h in range(HOURS_PER_DAY):
                groups[f"hist_{src}_h{h:02d}"] = f"hist_{src}"
        for name in DATETIME_COLUMNS:
            groups[name] = DATETIME_GROUP
        for var in self.weather:
            for h in range(HOURS_PER_DAY):
                groups[f"{var}_h{h:02d}"] = var
        return groups

    @property
    def width(self) -> int:
        return HOURS_PER_DAY * (1 + len(self.sources) + len(self.weather)) + len(DATETIME_COLUMNS)

    def assemble(self, ci_lags, source_lags, target_times, weather) -> FeatureMatrix:
        """Build a matrix from raw blocks.

        ``ci_lags`` is n x 24, ``source_lags`` n x S x 24 (ignored when the
        layout has no sources), ``weather`` n x W x 24 and ``target_times``
        the n target timestamps.
        """
        ci_lags = np.asarray(ci_lags, dtype=float)
        n = ci_lags.shape[0]
        blocks = [ci_lags.reshape(n, HOURS_PER_DAY)]
        if self.sources:
            blocks.append(np.asarray(source_lags, dtype=float).reshape(n, -1))
        if n:
            blocks.append(datetime_values(target_times))
        else:
            blocks.append(np.empty((0, len(DATETIME_COLUMNS))))
        if self.weather:
            blocks.append(np.asarray(weather, dtype=float).reshape(n, -1))
        values = np.hstack(blocks)
        return FeatureMatrix(self.column_names, values, self.group_of)


def forecast_day_positions(table: TimeSeriesTable) -> np.ndarray:
    """Row positions of midnights with a full previous day and a full day ahead."""
    idx = table.timestamps
    n = len(idx)
    if n < 2 * HOURS_PER_DAY:
        return np.empty(0, dtype=int)
    pos = np.flatnonzero(idx.hour == 0)
    pos = pos[(pos >= HOURS_PER_DAY) & (pos + HOURS_PER_DAY <= n)]
    ns = idx.asi8
    span = ns[pos + HOURS_PER_DAY - 1] - ns[pos - HOURS_PER_DAY]
    return pos[span == (2 * HOURS_PER_DAY - 1) * 3_600_000_000_000]


def _windows(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """values[..., s:s+24] for each s, stacked on a leading axis."""
    offsets = starts[:, None] + np.arange(HOURS_PER_DAY)[None, :]
    return np.moveaxis(values[..., offsets], -2, 0) if values.ndim > 1 else values[offsets]


def raw_blocks(table: TimeSeriesTable, positions: np.ndarray):
    """Context and forward blocks for the given forecast-day positions."""
    frame = table.frame
    prev = positions - HOURS_PER_DAY
    ci = frame[CI_COLUMN].to_numpy(dtype=float)
    sources = frame[list(table.source_columns)].to_numpy(dtype=float).T
    weather = frame[list(table.weather_columns)].to_numpy(dtype=float).T
    return {
        "ci_lags": _windows(ci, prev),
        "source_lags": _windows(sources, prev),
        "weather": _windows(weather, positions),
        "ci_day": _windows(ci, positions),
        "origins": table.timestamps[positions],
    }


def _examples(table: TimeSeriesTable, target_hour: int, day_class: str):
    if not 0 <= target_hour < HOURS_PER_DAY:
        raise ValueError(f"target_hour must be in 0..23, got {target_hour}")
    if len(table) < 2 * HOURS_PER_DAY + 1:
        raise InsufficientHistory(f"need at least 49 hours, table has {len(table)}")
    positions = forecast_day_positions(table)
    if len(positions) == 0:
        raise InsufficientHistory("no forecast day has a full previous day of context")
    blocks = raw_blocks(table, positions)
    layout = FeatureLayout.for_table(table, day_class)
    X = layout.assemble(
        blocks["ci_lags"], blocks["source_lags"],
        blocks["origins"] + pd.Timedelta(hours=target_hour), blocks["weather"],
    )
    y = TargetVector(blocks["ci_day"][:, target_hour].copy(), target_hour,
                     1 if day_class == DAY1 else 2)
    return X, y


def build_day1_examples(table: TimeSeriesTable, target_hour: int):
    return _examples(table, target_hour, DAY1)


def build_dayN_examples(table: TimeSeriesTable, target_hour: int):
    """Day 2-4 examples: no source lags; CI lags are the previous day's truth."""
    return _examples(table, target_hour, DAYN)
