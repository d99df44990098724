"""Hourly grid CSV ingestion, gap repair and chronological splitting.

The expected file layout is one row per hour::

    datetime,carbon_intensity,coal,nat_gas,...,forecast_dswrf,forecast_temp,...

``datetime`` is ISO-8601 (normalized to UTC), source columns come from
:data:`SOURCE_COLUMNS` and weather forecast columns carry a ``forecast_``
prefix. Missing hours may be encoded either as absent rows or blank cells.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    CutoffOutOfRange,
    DataError,
    DuplicateTimestamp,
    GapTooLarge,
    MissingColumn,
    NegativeValue,
    UnorderedTimestamps,
    UnparseableTimestamp,
)

logger = logging.getLogger(__name__)

CI_COLUMN = "carbon_intensity"
TIME_COLUMN = "datetime"
SOURCE_COLUMNS = (
    "coal", "nat_gas", "nuclear", "oil", "hydro",
    "solar", "wind", "geothermal", "biomass", "unknown",
)
WEATHER_PREFIX = "forecast_"
DEFAULT_WEATHER = (
    "forecast_dswrf", "forecast_temp", "forecast_dewpoint",
    "forecast_precip", "forecast_wind_speed",
)
DEFAULT_MAX_GAP_HOURS = 6
HOUR = pd.Timedelta(hours=1)


@dataclass(frozen=True)
class TimeSeriesTable:
    """Hourly records of one grid.

    ``frame`` is indexed by a UTC ``DatetimeIndex`` and holds the
    ``carbon_intensity`` column followed by source columns (in
    :data:`SOURCE_COLUMNS` order) and weather columns (sorted by name).
    Treat it as read-only.
    """

    grid_id: str
    frame: pd.DataFrame

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def source_columns(self) -> tuple[str, ...]:
        return tuple(c for c in self.frame.columns if c in SOURCE_COLUMNS)

    @property
    def weather_columns(self) -> tuple[str, ...]:
        return tuple(c for c in self.frame.columns if c.startswith(WEATHER_PREFIX))

    @property
    def schema(self) -> frozenset[str]:
        return frozenset(self.source_columns) | frozenset(self.weather_columns)

    @property
    def carbon_intensity(self) -> np.ndarray:
        return self.frame[CI_COLUMN].to_numpy(dtype=float)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def start(self) -> pd.Timestamp:
        return self.frame.index[0]

    @property
    def end(self) -> pd.Timestamp:
        return self.frame.index[-1]

    def is_contiguous(self) -> bool:
        idx = self.frame.index
        if len(idx) < 2:
            return not self.frame.isna().any().any()
        steps = np.diff(idx.asi8)
        return bool(np.all(steps == HOUR.value)) and not self.frame.isna().any().any()

    def between(self, start, end) -> "TimeSeriesTable":
        """Records with ``start <= timestamp < end``."""
        idx = self.frame.index
        mask = (idx >= pd.Timestamp(start)) & (idx < pd.Timestamp(end))
        return TimeSeriesTable(self.grid_id, self.frame.loc[mask])


def ordered_columns(columns) -> list[str]:
    """Canonical column order: CI, sources in catalogue order, weather by name."""
    cols = set(columns)
    out = [CI_COLUMN] if CI_COLUMN in cols else []
    out += [c for c in SOURCE_COLUMNS if c in cols]
    out += sorted(c for c in cols if c.startswith(WEATHER_PREFIX))
    return out


def table_from_frame(frame: pd.DataFrame, grid_id: str) -> TimeSeriesTable:
    """Wrap an in-memory frame (UTC DatetimeIndex) with canonical column order."""
    idx = pd.DatetimeIndex(frame.index)
    if idx.tz is None:
        idx = idx.tz_localize("UTC")
    else:
        idx = idx.tz_convert("UTC")
    frame = frame.set_axis(idx).loc[:, ordered_columns(frame.columns)].astype(float)
    frame.index.name = TIME_COLUMN
    return TimeSeriesTable(grid_id, frame)


def _first_bad_row(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0]) + 1


def load_grid_csv(path, grid_id: str) -> TimeSeriesTable:
    """Parse one grid CSV.

    Rows are numbered from 1 for the first data row (the header is row 0),
    which is the number reported in every row-level error.
    """
    path = Path(path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    raw.columns = [c.strip() for c in raw.columns]
    for required in (TIME_COLUMN, CI_COLUMN):
        if required not in raw.columns:
            raise MissingColumn(required)

    known = [c for c in raw.columns
             if c in (TIME_COLUMN, CI_COLUMN) or c in SOURCE_COLUMNS or c.startswith(WEATHER_PREFIX)]
    ignored = [c for c in raw.columns if c not in known]
    if ignored:
        warnings.warn(f"{path.name}: ignoring unrecognized columns {ignored}", stacklevel=2)

    text_ts = raw[TIME_COLUMN].str.strip()
    ts = pd.to_datetime(text_ts, utc=True, errors="coerce", format="ISO8601")
    bad = ts.isna().to_numpy()
    if bad.any():
        raise UnparseableTimestamp(_first_bad_row(bad))
    off_hour = ((ts.dt.minute != 0) | (ts.dt.second != 0) | (ts.dt.microsecond != 0)).to_numpy()
    if off_hour.any():
        raise UnparseableTimestamp(_first_bad_row(off_hour), "timestamp not on an hour boundary")

    dup = ts.duplicated().to_numpy()
    if dup.any():
        raise DuplicateTimestamp(ts.iloc[int(np.flatnonzero(dup)[0])])
    steps = np.diff(ts.dt.tz_convert(None).to_numpy().astype("datetime64[ns]").astype(np.int64))
    if (steps <= 0).any():
        raise UnorderedTimestamps(int(np.flatnonzero(steps <= 0)[0]) + 2)

    values = {}
    for col in known:
        if col == TIME_COLUMN:
            continue
        text = raw[col].str.strip()
        num = pd.to_numeric(text.replace("", np.nan), errors="coerce").to_numpy(dtype=float)
        garbage = np.isnan(num) & (text != "").to_numpy()
        if garbage.any():
            raise DataError(f"row {_first_bad_row(garbage)}: non-numeric value in column {col!r}")
        if col == CI_COLUMN or col in SOURCE_COLUMNS:
            neg = num < 0
            if neg.any():
                raise NegativeValue(_first_bad_row(neg), col)
        values[col] = num

    frame = pd.DataFrame(values, index=pd.DatetimeIndex(ts, name=TIME_COLUMN))
    table = table_from_frame(frame, grid_id)
    logger.info("loaded %s: %d rows, schema %s", path, len(table), sorted(table.schema))
    return table


def _nan_runs(mask: np.ndarray):
    """Yield (start, length) for runs of True."""
    if not mask.any():
        return
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    for s, e in zip(edges[::2], edges[1::2]):
        yield int(s), int(e - s)


def repair_gaps(table: TimeSeriesTable, max_gap_hours: int = DEFAULT_MAX_GAP_HOURS) -> TimeSeriesTable:
    """Fill short gaps by per-column linear interpolation.

    Absent hours and blank cells are treated alike. Any run of more than
    ``max_gap_hours`` consecutive missing hours, or a blank that has no
    bounding record on one side, raises :class:`GapTooLarge`.
    """
    if max_gap_hours < 1:
        raise ValueError("max_gap_hours must be positive")
    if table.is_contiguous():
        return table

    full_index = pd.date_range(table.start, table.end, freq="h", name=TIME_COLUMN)
    frame = table.frame.reindex(full_index)

    absent = ~full_index.isin(table.frame.index)
    for start, length in _nan_runs(absent):
        if length > max_gap_hours:
            raise GapTooLarge(full_index[start], length)
    for col in frame.columns:
        missing = frame[col].isna().to_numpy()
        for start, length in _nan_runs(missing):
            if length > max_gap_hours or start == 0 or start + length == len(frame):
                raise GapTooLarge(full_index[start], length)

    # positions are uniform, so index-based interpolation is time interpolation
    repaired = frame.interpolate(method="linear", axis=0, limit_area="inside")
    return TimeSeriesTable(table.grid_id, repaired)


def split_train_test(table: TimeSeriesTable, cutoff) -> tuple[TimeSeriesTable, TimeSeriesTable]:
    cutoff = to_utc(cutoff)
    if not (table.start < cutoff <= table.end):
        raise CutoffOutOfRange(
            f"cutoff {cutoff} must lie in ({table.start}, {table.end}]"
        )
    mask = table.frame.index < cutoff
    return (TimeSeriesTable(table.grid_id, table.frame.loc[mask]),
            TimeSeriesTable(table.grid_id, table.frame.loc[~mask]))


def to_utc(ts) -> pd.Timestamp:
    ts = pd.Timestamp(ts)
    return ts.tz_localize("UTC") if ts.tz is None else ts.tz_convert("UTC")


def inspect_table(table: TimeSeriesTable) -> str:
    """Plain-text schema and gap report."""
    lines = [
        f"grid: {table.grid_id}",
        f"rows: {len(table)}",
        f"range: {table.start.isoformat()} .. {table.end.isoformat()}",
        f"sources: {', '.join(table.source_columns) or '(none)'}",
        f"weather: {', '.join(table.weather_columns) or '(none)'}",
    ]
    full_index = pd.date_range(table.start, table.end, freq="h")
    absent = ~full_index.isin(table.frame.index)
    gaps = list(_nan_runs(absent))
    lines.append(f"absent-row gaps: {len(gaps)}")
    for start, length in gaps:
        lines.append(f"  {full_index[start].isoformat()}  {length} h")
    blanks = table.frame.isna().sum()
    blanks = blanks[blanks > 0]
    lines.append(f"blank cells: {int(blanks.sum())}")
    for col, n in blanks.items():
        lines.append(f"  {col}: {int(n)}")
    return "\n".join(lines)
