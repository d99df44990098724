"""Exception hierarchy.

Every error carries the exit code the CLI maps it to: 2 for user/config
mistakes, 3 for bad data, 4 for internal invariant failures.
"""

from __future__ import annotations


class GridcastError(Exception):
    exit_code = 4


class ConfigError(GridcastError):
    exit_code = 2


class DataError(GridcastError):
    exit_code = 3


# -- dataset -----------------------------------------------------------------

class MissingColumn(DataError):
    def __init__(self, name: str):
        super().__init__(f"missing required column {name!r}")
        self.name = name


class UnparseableTimestamp(DataError):
    def __init__(self, row: int, detail: str = "cannot parse timestamp"):
        super().__init__(f"row {row}: {detail}")
        self.row = row


class NegativeValue(DataError):
    def __init__(self, row: int, column: str):
        super().__init__(f"row {row}: negative value in column {column!r}")
        self.row = row
        self.column = column


class DuplicateTimestamp(DataError):
    def __init__(self, ts):
        super().__init__(f"duplicate timestamp {ts}")
        self.ts = ts


class UnorderedTimestamps(DataError):
    def __init__(self, row: int):
        super().__init__(f"row {row}: timestamp not after the previous row")
        self.row = row


class GapTooLarge(DataError):
    def __init__(self, start_ts, length: int):
        super().__init__(f"gap of {length} h starting at {start_ts} exceeds the repair limit")
        self.start_ts = start_ts
        self.length = length


class CutoffOutOfRange(ConfigError):
    pass


# -- features / pipeline -----------------------------------------------------

class InsufficientHistory(DataError):
    pass


class MissingWeather(DataError):
    def __init__(self, hour):
        super().__init__(f"no weather forecast for target hour {hour}")
        self.hour = hour


class MissingContext(DataError):
    pass


class NonpositivePeriod(ValueError):
    pass


# -- learners ----------------------------------------------------------------

class TooFewRows(DataError):
    pass


class NonfiniteLoss(GridcastError):
    pass


class ColumnMismatch(GridcastError):
    exit_code = 2


class VersionMismatch(ConfigError):
    pass


class EmptyCandidates(ValueError):
    pass


# -- evaluation --------------------------------------------------------------

class LengthMismatch(ValueError):
    pass


class NonpositiveGroundtruth(ValueError):
    def __init__(self, index: int):
        super().__init__(f"groundtruth at index {index} is not positive")
        self.index = index


class NoValidHours(DataError):
    def __init__(self, day: int):
        super().__init__(f"no valid groundtruth hours for day-{day}")
        self.day = day


class UnknownGroup(ConfigError):
    def __init__(self, group: str):
        super().__init__(f"unknown feature group {group!r}")
        self.group = group
