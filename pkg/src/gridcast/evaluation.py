"""MAPE metrics, multi-seed reports and permutation feature importance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .dataset import CI_COLUMN, TimeSeriesTable
from .ensemble import StackedHourEnsemble, ensemble_predict
from .errors import LengthMismatch, NoValidHours, NonpositiveGroundtruth, UnknownGroup
from .features import CI_GROUP, DATETIME_GROUP, FeatureMatrix
from .seeding import derive_seed

N_DAYS = 4
HOURS_PER_DAY = 24


def mape(y, yhat) -> float:
    """Mean absolute percentage error in percent."""
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape or y.size == 0:
        raise LengthMismatch(f"need equal nonzero lengths, got {y.size} and {yhat.size}")
    bad = np.flatnonzero(~(y > 0))
    if bad.size:
        raise NonpositiveGroundtruth(int(bad[0]))
    return float(100.0 / y.size * np.sum(np.abs(y - yhat) / y))


def per_day_mape(forecasts, truth: TimeSeriesTable, return_skipped: bool = False):
    """Pooled MAPE for day-1..day-4 across all forecast origins.

    An origin contributes to day ``d`` only if truth has every hour of that
    day; hours with CI <= 0 are dropped and counted as skipped.
    """
    ci = truth.frame[CI_COLUMN]
    ys = [[] for _ in range(N_DAYS)]
    yhats = [[] for _ in range(N_DAYS)]
    skipped = 0
    for fc in forecasts:
        actual = ci.reindex(fc.timestamps).to_numpy(dtype=float)
        for d in range(N_DAYS):
            sl = slice(d * HOURS_PER_DAY, (d + 1) * HOURS_PER_DAY)
            y_day, p_day = actual[sl], fc.values[sl]
            if np.isnan(y_day).any():
                skipped += int(np.isnan(y_day).sum())
                continue
            ok = y_day > 0
            skipped += int((~ok).sum())
            ys[d].append(y_day[ok])
            yhats[d].append(p_day[ok])
    out = []
    for d in range(N_DAYS):
        y = np.concatenate(ys[d]) if ys[d] else np.empty(0)
        if y.size == 0:
            raise NoValidHours(d + 1)
        out.append(mape(y, np.concatenate(yhats[d])))
    return (out, skipped) if return_skipped else out


@dataclass
class EvalReport:
    grid_id: str
    per_seed: dict[int, list[float]]
    mean: list[float]
    skipped_hours: int = 0
    origins_evaluated: int = 0
    origins_skipped: int = 0
    metadata: dict = field(default_factory=lambda: {
        "aggregation": "pooled over all origins per day",
        "origins": "every midnight UTC of the test period",
    })

    @classmethod
    def from_runs(cls, grid_id: str, per_seed: dict, **kwargs) -> "EvalReport":
        rows = [list(map(float, per_seed[s])) for s in per_seed]
        mean = [sum(r[d] for r in rows) / len(rows) for d in range(N_DAYS)]
        return cls(grid_id, {int(s): list(map(float, v)) for s, v in per_seed.items()},
                   mean, **kwargs)

    def to_dict(self) -> dict:
        return {
            "grid_id": self.grid_id,
            "per_seed": {str(s): v for s, v in self.per_seed.items()},
            "mean": self.mean,
            "skipped_hours": self.skipped_hours,
            "origins_evaluated": self.origins_evaluated,
            "origins_skipped": self.origins_skipped,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        return cls(d["grid_id"], {int(s): v for s, v in d["per_seed"].items()}, d["mean"],
                   d["skipped_hours"], d["origins_evaluated"], d["origins_skipped"],
                   d.get("metadata", {}))

    def to_text(self) -> str:
        head = f"{'MAPE %':<10}" + "".join(f"{'day-' + str(d + 1):>9}" for d in range(N_DAYS))
        lines = [f"grid {self.grid_id}", head]
        for s, row in self.per_seed.items():
            lines.append(f"{'seed ' + str(s):<10}" + "".join(f"{v:9.3f}" for v in row))
        lines.append(f"{'mean':<10}" + "".join(f"{v:9.3f}" for v in self.mean))
        lines.append(f"origins evaluated: {self.origins_evaluated}, skipped: "
                     f"{self.origins_skipped}; skipped hours: {self.skipped_hours}")
        return "\n".join(lines)


@dataclass
class ImportanceReport:
    scores: dict[str, tuple[float, float]]
    repeats: int
    baseline_mape: float

    def to_dict(self) -> dict:
        return {
            "baseline_mape": self.baseline_mape,
            "repeats": self.repeats,
            "groups": {g: {"mean_mape_increase": m, "std": s} for g, (m, s) in self.scores.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"baseline MAPE {self.baseline_mape:.3f}%  ({self.repeats} repeats)",
                 f"{'group':<24}{'increase (pp)':>14}{'std':>10}"]
        for g, score in top_k_features(self, len(self.scores)):
            lines.append(f"{g:<24}{score:14.4f}{self.scores[g][1]:10.4f}")
        return "\n".join(lines)


def top_k_features(report: ImportanceReport, k: int) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(report.scores.items(), key=lambda kv: (-kv[1][0], kv[0]))
    return [(g, s[0]) for g, s in ranked[:k]]


@dataclass(frozen=True)
class ForecastInputs:
    """Raw inputs of a batch of 96-hour forecasts (see ``pipeline.forecast_blocks``)."""

    ci: np.ndarray
    sources: np.ndarray
    weather: np.ndarray
    origins: pd.DatetimeIndex
    source_names: tuple[str, ...] = ()
    weather_names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.origins)

    def groups(self) -> list[str]:
        return [CI_GROUP, *(f"hist_{s}" for s in self.source_names), DATETIME_GROUP,
                *self.weather_names]

    def permuted(self, group: str, perm: np.ndarray) -> "ForecastInputs":
        ci, src, wx, origins = self.ci, self.sources, self.weather, self.origins
        if group == CI_GROUP:
            ci = ci[perm]
        elif group == DATETIME_GROUP:
            origins = origins[perm]
        elif group.startswith("hist_") and group[5:] in self.source_names:
            src = src.copy()
            i = self.source_names.index(group[5:])
            src[:, i] = src[perm, i]
        elif group in self.weather_names:
            wx = wx.copy()
            i = self.weather_names.index(group)
            wx[:, i] = wx[perm, i]
        else:
            raise UnknownGroup(group)
        return ForecastInputs(ci, src, wx, origins, self.source_names, self.weather_names)


def forecast_inputs(day1, table: TimeSeriesTable, origins):
    """Inputs and n x 96 groundtruth for a pair-level importance run."""
    from .pipeline import HORIZON, context_blocks

    ci, src, wx, origins = context_blocks(day1, table, origins)
    truth = np.empty((len(origins), HORIZON))
    series = table.frame[CI_COLUMN]
    for i, o in enumerate(origins):
        truth[i] = series.reindex(pd.date_range(o, periods=HORIZON, freq="h")).to_numpy()
    inputs = ForecastInputs(ci, src, wx, origins, tuple(day1.layout.sources),
                            tuple(day1.layout.weather))
    return inputs, truth


def _valid_mape(y, yhat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    ok = y > 0
    return mape(y[ok], yhat[ok])


def permutation_importance(model, X_val, y_val, repeats: int = 10, seed: int = 0,
                           groups: Sequence[str] | None = None) -> ImportanceReport:
    """Mean MAPE increase (percentage points) when a feature group is shuffled.

    ``model`` is either a :class:`StackedHourEnsemble` with ``X_val`` a
    :class:`FeatureMatrix`, or a ``(day1, dayN)`` pair with ``X_val`` a
    :class:`ForecastInputs` and ``y_val`` the n x 96 groundtruth. All columns
    of a group are permuted across rows with one shared permutation.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if isinstance(model, StackedHourEnsemble):
        if not isinstance(X_val, FeatureMatrix):
            raise TypeError("single-ensemble importance needs a FeatureMatrix")
        all_groups = X_val.groups
        n = X_val.n_rows

        def score(g, perm):
            if g is None:
                return _valid_mape(y_val, ensemble_predict(model, X_val))
            values = X_val.values.copy()
            cols = X_val.group_indices(g)
            values[:, cols] = values[perm][:, cols]
            shuffled = FeatureMatrix(X_val.column_names, values, X_val.group_of)
            return _valid_mape(y_val, ensemble_predict(model, shuffled))
    else:
        from .pipeline import forecast_blocks

        day1, dayN = model
        if not isinstance(X_val, ForecastInputs):
            raise TypeError("horizon-pair importance needs ForecastInputs")
        all_groups = X_val.groups()
        n = X_val.n

        def score(g, perm):
            inp = X_val if g is None else X_val.permuted(g, perm)
            pred = forecast_blocks(day1, dayN, inp.ci, inp.sources, inp.weather, inp.origins)
            return _valid_mape(y_val, pred)

    if groups is None:
        groups = all_groups
    for g in groups:
        if g not in all_groups:
            raise UnknownGroup(g)

    baseline = score(None, None)
    scores = {}
    for gi, g in enumerate(all_groups):
        if g not in groups:
            continue
        deltas = []
        for r in range(repeats):
            rng = np.random.default_rng(derive_seed(seed, gi, r))
            deltas.append(score(g, rng.permutation(n)) - baseline)
        deltas = np.array(deltas)
        scores[g] = (float(deltas.mean()), float(deltas.std()))
    return ImportanceReport(scores, repeats, baseline)
