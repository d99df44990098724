"""Training the day-1 and day-2..4 horizon models and 96-hour forecasting.

The day-1 model sees the previous day's CI and source production; the
day-2..4 model sees only CI lags, which at inference are its own previous
24 predictions. Each model is 24 independent per-hour ensembles.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .dataset import CI_COLUMN, TimeSeriesTable, load_grid_csv, repair_gaps, split_train_test, to_utc
from .ensemble import EnsembleSettings, StackedHourEnsemble, ensemble_predict, fit_hour_ensemble
from .errors import ConfigError, InsufficientHistory, MissingContext, MissingWeather
from .features import (
    DAY1, DAY_CLASSES, DAYN, HOURS_PER_DAY, FeatureLayout, build_day1_examples,
    build_dayN_examples,
)
from .seeding import derive_seed
from .sublearners.base import FORMAT_VERSION, check_format_version

logger = logging.getLogger(__name__)

HORIZON = 96
DAY_BOUNDARIES = (0, 24, 48, 72)
MIN_TRAINING_DAYS = 60


@dataclass(frozen=True)
class HorizonModel:
    hour_ensembles: tuple
    day_class: str
    grid_id: str
    training_window: tuple[str, str]
    seed: int
    layout: FeatureLayout

    def __post_init__(self):
        object.__setattr__(self, "hour_ensembles", tuple(self.hour_ensembles))
        if len(self.hour_ensembles) != HOURS_PER_DAY:
            raise ValueError(f"need {HOURS_PER_DAY} hour ensembles, got {len(self.hour_ensembles)}")
        for h, e in enumerate(self.hour_ensembles):
            if e.target_hour != h:
                raise ValueError(f"ensemble at index {h} predicts hour {e.target_hour}")

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "day_class": self.day_class,
            "grid_id": self.grid_id,
            "training_window": list(self.training_window),
            "seed": self.seed,
            "layout": {"sources": list(self.layout.sources),
                       "weather": list(self.layout.weather)},
            "hour_ensembles": [e.to_dict() for e in self.hour_ensembles],
        }

    @classmethod
    def from_dict(cls, d) -> "HorizonModel":
        check_format_version(d)
        layout = FeatureLayout(tuple(d["layout"]["sources"]), tuple(d["layout"]["weather"]),
                               d["day_class"])
        return cls(
            hour_ensembles=[StackedHourEnsemble.from_dict(e) for e in d["hour_ensembles"]],
            day_class=d["day_class"],
            grid_id=d["grid_id"],
            training_window=tuple(d["training_window"]),
            seed=int(d["seed"]),
            layout=layout,
        )


@dataclass(frozen=True)
class ForecastResult:
    origin: pd.Timestamp
    values: np.ndarray
    seed: int
    day_boundaries: tuple[int, ...] = DAY_BOUNDARIES

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (HORIZON,):
            raise ValueError(f"forecast must have {HORIZON} values, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("forecast contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.origin, periods=HORIZON, freq="h")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "datetime": [t.strftime("%Y-%m-%dT%H:%M:%SZ") for t in self.timestamps],
            "predicted_ci": self.values,
            "horizon_hour": np.arange(HORIZON),
            "seed": self.seed,
        })


def forecasts_to_csv(forecasts, path) -> None:
    """Forecast export: datetime, predicted_ci, horizon_hour, seed."""
    frames = [f.to_frame() for f in forecasts]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["datetime", "predicted_ci", "horizon_hour", "seed"])
    with open(path, "w", newline="") as fh:
        fh.write("datetime,predicted_ci,horizon_hour,seed\n")
        for row in frame.itertuples(index=False):
            fh.write(f"{row.datetime},{float(row.predicted_ci)!r},{int(row.horizon_hour)},{int(row.seed)}\n")


# -- training ------------------------------------------------------------------

def _fit_task(args):
    X, y, specs, settings, seed, hour, day_class = args
    return fit_hour_ensemble(X, y, specs, settings, seed, hour, day_class)


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("GRIDCAST_JOBS", "1"))
    return max(1, int(jobs))


def train_horizon_models(train: TimeSeriesTable, config: ExperimentConfig, seed: int,
                         jobs: int | None = 1) -> tuple[HorizonModel, HorizonModel]:
    span_days = (train.end - train.start) / pd.Timedelta(days=1)
    if len(train) == 0 or span_days < MIN_TRAINING_DAYS:
        raise InsufficientHistory(
            f"training data spans {span_days:.1f} days; at least {MIN_TRAINING_DAYS} required")
    specs = config.specs()
    settings: EnsembleSettings = config.ensemble

    tasks = []
    for c, (day_class, builder) in enumerate(((DAY1, build_day1_examples),
                                              (DAYN, build_dayN_examples))):
        for h in range(HOURS_PER_DAY):
            X, y = builder(train, h)
            tasks.append((X, y, specs, settings, derive_seed(seed, c, h), h, day_class))
    ensembles = _map(_fit_task, tasks, resolve_jobs(jobs))

    window = (train.start.isoformat(), train.end.isoformat())
    models = []
    for c, day_class in enumerate(DAY_CLASSES):
        models.append(HorizonModel(
            ensembles[c * HOURS_PER_DAY:(c + 1) * HOURS_PER_DAY], day_class, train.grid_id,
            window, seed, FeatureLayout.for_table(train, day_class),
        ))
    return models[0], models[1]


# -- forecasting -----------------------------------------------------------------

def forecast_blocks(day1: HorizonModel, dayN: HorizonModel, ci_ctx, source_ctx, weather,
                    origins) -> np.ndarray:
    """Batched 96-hour forecasts.

    ``ci_ctx`` is n x 24 (CI of the day before each origin), ``source_ctx``
    n x S x 24, ``weather`` n x W x 96 and ``origins`` n midnights.
    Returns an n x 96 array.
    """
    origins = pd.DatetimeIndex(origins)
    n = len(origins)
    out = np.empty((n, HORIZON))
    if n == 0:
        return out
    for h in range(HOURS_PER_DAY):
        X = day1.layout.assemble(ci_ctx, source_ctx, origins + pd.Timedelta(hours=h),
                                 weather[:, :, :HOURS_PER_DAY])
        out[:, h] = ensemble_predict(day1.hour_ensembles[h], X)
    for it in range(1, 4):
        lo = it * HOURS_PER_DAY
        lags = out[:, lo - HOURS_PER_DAY:lo].copy()
        day_weather = weather[:, :, lo:lo + HOURS_PER_DAY]
        for h in range(HOURS_PER_DAY):
            X = dayN.layout.assemble(lags, None, origins + pd.Timedelta(hours=lo + h), day_weather)
            out[:, lo + h] = ensemble_predict(dayN.hour_ensembles[h], X)
    return out


def _check_origin(origin) -> pd.Timestamp:
    origin = to_utc(origin)
    if origin != origin.normalize():
        raise ConfigError(f"forecast origin {origin} is not a UTC midnight")
    return origin


def context_blocks(day1: HorizonModel, table: TimeSeriesTable, origins):
    """Gather context and weather inputs for the given origins from one table.

    Only rows in ``[origin - 24 h, origin)`` contribute CI/source values;
    weather comes from ``[origin, origin + 96 h)``. Raises if anything is
    missing.
    """
    frame = table.frame
    origins = pd.DatetimeIndex([_check_origin(o) for o in origins])
    sources = list(day1.layout.sources)
    weather_cols = list(day1.layout.weather)
    missing = [c for c in [CI_COLUMN, *sources] if c not in frame.columns]
    if missing:
        raise MissingContext(f"context lacks columns {missing}")
    missing = [c for c in weather_cols if c not in frame.columns]
    if missing:
        raise MissingWeather(f"columns {missing}")

    n = len(origins)
    ci = np.empty((n, HOURS_PER_DAY))
    src = np.empty((n, len(sources), HOURS_PER_DAY))
    wx = np.empty((n, len(weather_cols), HORIZON))
    for i, origin in enumerate(origins):
        ctx_idx = pd.date_range(origin - pd.Timedelta(hours=HOURS_PER_DAY), periods=HOURS_PER_DAY,
                                freq="h")
        ctx = frame.reindex(ctx_idx)[[CI_COLUMN, *sources]]
        if ctx.isna().any().any():
            raise MissingContext(f"incomplete 24 h context before {origin}")
        ci[i] = ctx[CI_COLUMN].to_numpy()
        src[i] = ctx[sources].to_numpy().T
        fut_idx = pd.date_range(origin, periods=HORIZON, freq="h")
        fut = frame.reindex(fut_idx)[weather_cols]
        bad = fut.isna().any(axis=1).to_numpy()
        if bad.any():
            raise MissingWeather(int(np.flatnonzero(bad)[0]))
        wx[i] = fut.to_numpy().T
    return ci, src, wx, origins


def forecast_96h(day1: HorizonModel, dayN: HorizonModel, context: TimeSeriesTable,
                 future_weather, origin) -> ForecastResult:
    """One 96-hour forecast.

    ``context`` must cover the 24 hours before ``origin`` (later rows are
    ignored); ``future_weather`` is a table or frame whose weather columns
    cover ``origin .. origin + 95 h``.
    """
    origin = _check_origin(origin)
    wframe = future_weather.frame if isinstance(future_weather, TimeSeriesTable) else future_weather
    wframe = wframe.copy()
    if wframe.index.tz is None:
        wframe.index = wframe.index.tz_localize("UTC")
    ctx_frame = context.frame.loc[context.frame.index < origin]
    cols = [c for c in ctx_frame.columns if c in (CI_COLUMN, *day1.layout.sources)]
    combined = pd.concat([ctx_frame[cols], wframe.loc[wframe.index >= origin,
                                                       [c for c in wframe.columns
                                                        if c in day1.layout.weather]]],
                         axis=0, sort=False)
    table = TimeSeriesTable(context.grid_id, combined)
    ci, src, wx, origins = context_blocks(day1, table, [origin])
    values = forecast_blocks(day1, dayN, ci, src, wx, origins)[0]
    return ForecastResult(origin, values, day1.seed)


def evaluation_origins(table: TimeSeriesTable, start, end=None):
    """Midnights in ``[start, end]`` split into (usable, skipped).

    An origin is usable when the table has its full 24 h context and 96 h of
    weather and groundtruth after it.
    """
    start = to_utc(start)
    end = table.end if end is None else to_utc(end)
    first = start.ceil("D")
    candidates = pd.date_range(first, end, freq="D") if first <= end else pd.DatetimeIndex([])
    present = table.frame.dropna().index
    usable, skipped = [], []
    for o in candidates:
        need = pd.date_range(o - pd.Timedelta(hours=HOURS_PER_DAY),
                             periods=HOURS_PER_DAY + HORIZON, freq="h")
        (usable if need.isin(present).all() else skipped).append(o)
    return pd.DatetimeIndex(usable), pd.DatetimeIndex(skipped)


def forecast_origins(day1: HorizonModel, dayN: HorizonModel, table: TimeSeriesTable,
                     origins) -> list[ForecastResult]:
    if len(origins) == 0:
        return []
    ci, src, wx, origins = context_blocks(day1, table, origins)
    values = forecast_blocks(day1, dayN, ci, src, wx, origins)
    return [ForecastResult(o, v, day1.seed) for o, v in zip(origins, values)]


# -- experiments -------------------------------------------------------------------

@dataclass
class ExperimentRun:
    report: "EvalReport"
    forecasts: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)


def load_experiment_data(config: ExperimentConfig):
    table = repair_gaps(load_grid_csv(config.data_path, config.grid_id), config.max_gap_hours)
    train, test = split_train_test(table, config.cutoff)
    return table, train, test


def run_experiment(config: ExperimentConfig, jobs: int | None = 1, models=None) -> ExperimentRun:
    """Train (unless ``models`` maps seed -> (day1, dayN)) and evaluate every seed."""
    from .evaluation import EvalReport, per_day_mape

    table, train, test = load_experiment_data(config)
    origins, skipped = evaluation_origins(table, test.start, test.end)
    logger.info("%s: %d usable origins, %d skipped", config.grid_id, len(origins), len(skipped))

    per_seed, forecasts, trained = {}, {}, {}
    skipped_hours = 0
    for seed in config.seeds:
        if models is not None:
            day1, dayN = models[seed]
        else:
            day1, dayN = train_horizon_models(train, config, seed, jobs)
        trained[seed] = (day1, dayN)
        results = forecast_origins(day1, dayN, table, origins)
        forecasts[seed] = results
        mapes, skipped_hours = per_day_mape(results, table, return_skipped=True)
        per_seed[seed] = mapes
        logger.info("seed %d: day MAPE %s", seed, ["%.3f" % m for m in mapes])
    report = EvalReport.from_runs(config.grid_id, per_seed, skipped_hours=skipped_hours,
                                  origins_evaluated=len(origins), origins_skipped=len(skipped))
    return ExperimentRun(report, forecasts, trained)
