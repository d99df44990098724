"""``gridcast`` command line.

Subcommands: train, forecast, evaluate, importance, inspect-data,
print-config. ``--jobs`` (or ``GRIDCAST_JOBS``) sets the number of worker
processes used to fit hour ensembles; results do not depend on it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import CONFIG_KEYS, ExperimentConfig, default_config_dict, load_config
from .dataset import inspect_table, load_grid_csv, repair_gaps, split_train_test, to_utc
from .errors import ConfigError, DataError, GridcastError
from .evaluation import forecast_inputs, permutation_importance, top_k_features
from .features import DAY1, DAYN
from .pipeline import (
    HorizonModel, evaluation_origins, forecast_96h, forecasts_to_csv,
    resolve_jobs, run_experiment, train_horizon_models,
)
from .sublearners.base import FORMAT_VERSION, check_format_version

logger = logging.getLogger("gridcast")

MANIFEST = "manifest.json"


def _version() -> str:
    return f"v{__version__}"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj, compact: bool = False) -> None:
    if compact:
        text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    else:
        text = json.dumps(obj, sort_keys=True, indent=2)
    path.write_text(text + "\n")


def _load_table(path, grid_id: str, max_gap_hours: int | None = None):
    """Load (and optionally repair) a CSV, prefixing errors with file:line."""
    try:
        table = load_grid_csv(path, grid_id)
    except FileNotFoundError as exc:
        raise DataError(f"{path}: file not found") from exc
    except DataError as exc:
        row = getattr(exc, "row", None)
        where = f"{path}:{row + 1}" if row is not None else str(path)
        exc.args = (f"{where}: {exc}",)
        raise
    if max_gap_hours is not None:
        table = repair_gaps(table, max_gap_hours)
    return table


def model_filename(day_class: str, seed: int) -> str:
    return f"{day_class}_seed{seed}.json"


def save_bundle(out_dir: Path, config: ExperimentConfig, models: dict) -> dict:
    """Write every (day1, dayN) pair plus a manifest; return the manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seed, pair in models.items():
        for model in pair:
            name = model_filename(model.day_class, seed)
            _write_json(out_dir / name, model.to_dict(), compact=True)
            entries.append({
                "file": name,
                "day_class": model.day_class,
                "seed": seed,
                "n_ensembles": len(model.hour_ensembles),
                "sha256": _sha256(out_dir / name),
            })
    manifest = {
        "format_version": FORMAT_VERSION,
        "version": _version(),
        "grid_id": config.grid_id,
        "config_sha256": config.digest(),
        "config": config.to_dict(),
        "data_sha256": _sha256(config.data_path),
        "training_window": list(next(iter(models.values()))[0].training_window),
        "models": entries,
    }
    manifest["config"].pop("output_dir")
    _write_json(out_dir / MANIFEST, manifest)
    return manifest


def load_bundle(model_dir, seeds=None) -> tuple[dict, dict]:
    """Read a bundle; returns (manifest, seed -> (day1, dayN))."""
    model_dir = Path(model_dir)
    path = model_dir / MANIFEST
    if not path.is_file():
        raise ConfigError(f"{model_dir}: no {MANIFEST}; not a model directory")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    check_format_version(manifest)
    available = sorted({e["seed"] for e in manifest["models"]})
    if seeds is None:
        seeds = available
    models = {}
    for seed in seeds:
        if seed not in available:
            raise ConfigError(f"{model_dir}: no models for seed {seed} (have {available})")
        pair = []
        for day_class in (DAY1, DAYN):
            file = model_dir / model_filename(day_class, seed)
            try:
                d = json.loads(file.read_text())
            except FileNotFoundError as exc:
                raise ConfigError(f"{file}: listed in manifest but missing") from exc
            pair.append(HorizonModel.from_dict(d))
        models[seed] = tuple(pair)
    return manifest, models


# -- commands ------------------------------------------------------------------

def cmd_train(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.output_dir)
    table, train, _ = _experiment_data(config)
    jobs = resolve_jobs(args.jobs)
    models = {}
    for seed in config.seeds:
        logger.info("training seed %d", seed)
        models[seed] = train_horizon_models(train, config, seed, jobs)
    manifest = save_bundle(out_dir, config, models)
    print(f"wrote {len(manifest['models'])} models to {out_dir}")
    return 0


def _experiment_data(config):
    table = _load_table(config.data_path, config.grid_id, config.max_gap_hours)
    train, test = split_train_test(table, config.cutoff)
    return table, train, test


def cmd_forecast(args) -> int:
    seeds = None if args.seed is None else [args.seed]
    manifest, models = load_bundle(args.model_dir, seeds)
    seed = min(models) if args.seed is None else args.seed
    day1, dayN = models[seed]
    table = _load_table(args.context_csv, manifest["grid_id"])
    result = forecast_96h(day1, dayN, table, table, args.origin)
    if args.out:
        forecasts_to_csv([result], args.out)
    else:
        frame = result.to_frame()
        sys.stdout.write("datetime,predicted_ci,horizon_hour,seed\n")
        for row in frame.itertuples(index=False):
            sys.stdout.write(f"{row.datetime},{float(row.predicted_ci)!r},"
                             f"{int(row.horizon_hour)},{int(row.seed)}\n")
    return 0


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.output_dir)
    models = None
    if args.model_dir:
        manifest, models = load_bundle(args.model_dir, list(config.seeds))
        if manifest.get("config_sha256") != config.digest():
            logger.warning("model bundle was trained with a different config")
    _load_table(config.data_path, config.grid_id)
    run = run_experiment(config, resolve_jobs(args.jobs), models)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(run.report.to_json() + "\n")
    (out_dir / "report.txt").write_text(run.report.to_text() + "\n")
    forecasts_to_csv([f for s in config.seeds for f in run.forecasts[s]],
                     out_dir / "forecasts.csv")
    if models is None:
        save_bundle(out_dir, config, run.models)
    print(run.report.to_text())
    return 0


def cmd_importance(args) -> int:
    manifest, models = load_bundle(args.model_dir, None if args.seed is None else [args.seed])
    seed = min(models) if args.seed is None else args.seed
    day1, dayN = models[seed]
    table = _load_table(args.data, manifest["grid_id"], args.max_gap_hours)
    # prefer origins after the training window; fall back to the whole file
    start = max(table.start, to_utc(day1.training_window[1]))
    origins, _ = evaluation_origins(table, start) if start <= table.end else ([], [])
    if len(origins) == 0:
        origins, _ = evaluation_origins(table, table.start)
    if len(origins) < 2:
        raise DataError(f"{args.data}: need at least 2 complete forecast origins, "
                        f"found {len(origins)}")
    inputs, truth = forecast_inputs(day1, table, origins)
    report = permutation_importance((day1, dayN), inputs, truth, repeats=args.repeats,
                                    seed=args.importance_seed)
    out = Path(args.out) if args.out else Path(args.model_dir) / "importance.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n")
    print(report.to_text())
    print("top-3: " + ", ".join(g for g, _ in top_k_features(report, 3)))
    return 0


def cmd_inspect_data(args) -> int:
    table = _load_table(args.data, args.grid_id)
    print(inspect_table(table))
    return 0


def cmd_print_config(args) -> int:
    if args.keys:
        for key, doc in CONFIG_KEYS.items():
            print(f"{key:<20}{doc}")
    else:
        print(json.dumps(default_config_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridcast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version())
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def jobs(p):
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: $GRIDCAST_JOBS or 1)")

    p = sub.add_parser("train", help="fit day-1 and day-2..4 models for every seed")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="bundle directory (default: config output_dir)")
    jobs(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="96-hour forecast from a trained bundle")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--origin", required=True, help="UTC midnight, e.g. 2022-07-01T00:00:00Z")
    p.add_argument("--context-csv", required=True,
                   help="CSV with the 24 h before the origin and 96 h of weather after it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="train (or load) and score every seed on the test period")
    p.add_argument("--config", required=True)
    p.add_argument("--model-dir", help="reuse a trained bundle instead of training")
    p.add_argument("--out", help="report directory (default: config output_dir)")
    jobs(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="group permutation importance of a trained bundle")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--data", required=True, help="CSV covering the validation period")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=None, help="which trained seed to use")
    p.add_argument("--importance-seed", type=int, default=0, help="shuffle seed")
    p.add_argument("--max-gap-hours", type=int, default=6)
    p.add_argument("--out", help="report JSON (default: <model-dir>/importance.json)")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("inspect-data", help="schema and gap report for a grid CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--grid-id", default="GRID")
    p.set_defaults(func=cmd_inspect_data)

    p = sub.add_parser("print-config", help="print the default configuration")
    p.add_argument("--keys", action="store_true", help="document each key instead")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "repeats", 1) < 1:
        print("error: --repeats must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except GridcastError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
