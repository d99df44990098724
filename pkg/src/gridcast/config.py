"""Experiment configuration (JSON)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import pandas as pd

from .dataset import DEFAULT_MAX_GAP_HOURS, to_utc
from .ensemble import EnsembleSettings
from .errors import ConfigError
from .sublearners import KINDS, SublearnerSpec
from .sublearners.base import validate_hyperparameters

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_POOL = ("gbdt_a", "gbdt_b", "mlp")

CONFIG_KEYS = {
    "grid_id": "grid label, e.g. CISO",
    "data_path": "hourly CSV; relative paths resolve against the config file",
    "train_test_cutoff": "ISO-8601 UTC instant; training rows are strictly before it",
    "seeds": "list of distinct integer seeds, one full run each",
    "pool": "sublearner kinds used in both stages",
    "sublearners": "kind -> hyperparameter overrides",
    "ensemble": "k_folds, selection_iterations, validation_fraction",
    "max_gap_hours": "longest gap repaired by interpolation",
    "importance_repeats": "shuffles per feature group",
    "output_dir": "where train/evaluate write artifacts",
}


@dataclass(frozen=True)
class ExperimentConfig:
    grid_id: str
    data_path: str
    train_test_cutoff: str
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    pool: tuple[str, ...] = DEFAULT_POOL
    sublearners: dict[str, dict[str, Any]] = field(default_factory=dict)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    max_gap_hours: int = DEFAULT_MAX_GAP_HOURS
    importance_repeats: int = 10
    output_dir: str = "runs"

    def __post_init__(self):
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds or len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be a nonempty list of distinct integers")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "pool", tuple(self.pool))
        if not self.pool:
            raise ConfigError("pool must name at least one sublearner kind")
        for kind in self.pool:
            if kind not in KINDS:
                raise ConfigError(f"unknown sublearner kind {kind!r} in pool")
        for kind, overrides in self.sublearners.items():
            validate_hyperparameters(kind, overrides)
        ens = self.ensemble
        if isinstance(ens, dict):
            unknown = set(ens) - {"k_folds", "selection_iterations", "validation_fraction"}
            if unknown:
                raise ConfigError(f"unknown ensemble keys {sorted(unknown)}")
            ens = EnsembleSettings(**ens)
            object.__setattr__(self, "ensemble", ens)
        if not 0 < ens.validation_fraction < 0.5:
            raise ConfigError("ensemble.validation_fraction must lie in (0, 0.5)")
        if ens.k_folds < 2:
            raise ConfigError("ensemble.k_folds must be >= 2")
        if ens.selection_iterations < 1:
            raise ConfigError("ensemble.selection_iterations must be >= 1")
        if self.max_gap_hours < 1:
            raise ConfigError("max_gap_hours must be positive")
        if self.importance_repeats < 1:
            raise ConfigError("importance_repeats must be >= 1")
        try:
            to_utc(self.train_test_cutoff)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad train_test_cutoff {self.train_test_cutoff!r}: {exc}") from exc

    @property
    def cutoff(self) -> pd.Timestamp:
        return to_utc(self.train_test_cutoff)

    def specs(self) -> list[SublearnerSpec]:
        return [SublearnerSpec(kind, dict(self.sublearners.get(kind, {}))) for kind in self.pool]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["pool"] = list(self.pool)
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        unknown = set(d) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("grid_id", "data_path", "train_test_cutoff"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        d = dict(d)
        if base_dir is not None:
            for key in ("data_path", "output_dir"):
                if key in d and not Path(d[key]).is_absolute():
                    d[key] = str((base_dir / d[key]).resolve())
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def digest(self) -> str:
        """sha256 of the canonical JSON form, ignoring ``output_dir``."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(canonical_json(d).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


def default_config_dict() -> dict:
    from .sublearners import DEFAULT_HYPERPARAMETERS

    return {
        "grid_id": "CISO",
        "data_path": "CISO.csv",
        "train_test_cutoff": "2022-07-01T00:00:00Z",
        "seeds": list(DEFAULT_SEEDS),
        "pool": list(DEFAULT_POOL),
        "sublearners": {k: dict(v) for k, v in DEFAULT_HYPERPARAMETERS.items()},
        "ensemble": asdict(EnsembleSettings()),
        "max_gap_hours": DEFAULT_MAX_GAP_HOURS,
        "importance_repeats": 10,
        "output_dir": "runs/CISO",
    }
