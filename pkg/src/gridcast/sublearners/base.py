"""Uniform spec / fitted-model types shared by every sublearner kind."""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from ..errors import ColumnMismatch, ConfigError, GridcastError
from ..features import FeatureMatrix

FORMAT_VERSION = 1
GBDT_KINDS = ("gbdt_a", "gbdt_b")
MLP_KIND = "mlp"
KINDS = GBDT_KINDS + (MLP_KIND,)

_GBDT_COMMON = {
    "max_depth": 6,
    "learning_rate": 0.05,
    "n_rounds": 500,
    "subsample": 1.0,
    "l2_leaf": 0.0,
    "min_samples_leaf": 20,
    "min_split_gain": 0.0,
    "early_stopping_patience": 20,
    "validation_fraction": 0.1,
}

DEFAULT_HYPERPARAMETERS: dict[str, dict[str, Any]] = {
    "gbdt_a": {**_GBDT_COMMON, "max_depth": 6, "learning_rate": 0.05,
               "n_rounds": 500, "subsample": 0.8},
    "gbdt_b": {**_GBDT_COMMON, "max_depth": 8, "learning_rate": 0.03,
               "n_rounds": 800, "l2_leaf": 1.0, "subsample": 1.0},
    "mlp": {
        "hidden": [200, 100],
        "batch_size": 256,
        "epochs": 50,
        "learning_rate": 1e-3,
        "dropout": 0.1,
        "early_stopping_patience": 10,
        "validation_fraction": 0.1,
        "bn_momentum": 0.1,
        "bn_eps": 1e-5,
    },
}

# key -> (type, lower bound, upper bound); bounds inclusive, None = open
_RULES = {
    "max_depth": (int, 0, 30),
    "learning_rate": (float, 0.0, None),
    "n_rounds": (int, 1, None),
    "subsample": (float, 0.0, 1.0),
    "l2_leaf": (float, 0.0, None),
    "min_samples_leaf": (int, 1, None),
    "min_split_gain": (float, 0.0, None),
    "early_stopping_patience": (int, 0, None),
    "validation_fraction": (float, 0.0, 0.5),
    "batch_size": (int, 2, None),
    "epochs": (int, 1, None),
    "dropout": (float, 0.0, 0.99),
    "bn_momentum": (float, 0.0, 1.0),
    "bn_eps": (float, 0.0, None),
}


def _freeze(value):
    if isinstance(value, np.ndarray):
        value = value.copy()
        value.setflags(write=False)
        return value
    if isinstance(value, Mapping):
        return MappingProxyType({k: _freeze(v) for k, v in value.items()})
    return value


def _thaw(value):
    if isinstance(value, Mapping):
        return {k: _thaw(v) for k, v in value.items()}
    return value


def validate_hyperparameters(kind: str, hyperparameters: Mapping[str, Any]) -> dict[str, Any]:
    """Fill defaults for ``kind`` and check every value; returns a new dict."""
    if kind not in KINDS:
        raise ConfigError(f"unknown sublearner kind {kind!r}; expected one of {KINDS}")
    defaults = DEFAULT_HYPERPARAMETERS[kind]
    unknown = set(hyperparameters) - set(defaults)
    if unknown:
        raise ConfigError(f"{kind}: unknown hyperparameters {sorted(unknown)}")
    merged = {**defaults, **hyperparameters}
    for key, value in merged.items():
        if key == "hidden":
            if not (isinstance(value, (list, tuple)) and value
                    and all(isinstance(w, int) and w > 0 for w in value)):
                raise ConfigError(f"{kind}.hidden must be a nonempty list of positive ints")
            merged[key] = [int(w) for w in value]
            continue
        typ, lo, hi = _RULES[key]
        if typ is int and (isinstance(value, bool) or not float(value).is_integer()):
            raise ConfigError(f"{kind}.{key} must be an integer, got {value!r}")
        value = typ(value)
        if (lo is not None and value < lo) or (hi is not None and value > hi):
            raise ConfigError(f"{kind}.{key}={value} outside [{lo}, {hi}]")
        merged[key] = value
    if merged.get("learning_rate", 1.0) <= 0:
        raise ConfigError(f"{kind}.learning_rate must be positive")
    if kind in GBDT_KINDS and merged["subsample"] <= 0:
        raise ConfigError(f"{kind}.subsample must be positive")
    return merged


@dataclass(frozen=True)
class SublearnerSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hyperparameters",
                           validate_hyperparameters(self.kind, self.hyperparameters))
        object.__setattr__(self, "seed", int(self.seed))

    def with_seed(self, seed: int) -> "SublearnerSpec":
        return SublearnerSpec(self.kind, dict(self.hyperparameters), seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SublearnerSpec":
        return cls(d["kind"], dict(d.get("hyperparameters", {})), d.get("seed", 0))


@dataclass(frozen=True)
class TrainedSublearner:
    """A fitted model. ``parameters`` maps names to read-only arrays."""

    spec: SublearnerSpec
    feature_columns: tuple[str, ...]
    parameters: Mapping[str, Any]

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        object.__setattr__(self, "parameters", _freeze(dict(self.parameters)))

    def __reduce__(self):
        # mappingproxy is not picklable; rebuild through __init__
        return (type(self), (self.spec, self.feature_columns, _thaw(self.parameters)))

    @property
    def kind(self) -> str:
        return self.spec.kind

    def predict(self, X: FeatureMatrix) -> np.ndarray:
        return predict(self, X)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "spec": self.spec.to_dict(),
            "feature_columns": list(self.feature_columns),
            "parameters": {k: encode_array(v) if isinstance(v, np.ndarray) else v
                           for k, v in self.parameters.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainedSublearner":
        check_format_version(d)
        params = {k: decode_array(v) if isinstance(v, Mapping) and "b64" in v else v
                  for k, v in d["parameters"].items()}
        return cls(SublearnerSpec.from_dict(d["spec"]), tuple(d["feature_columns"]), params)


def check_format_version(d: Mapping) -> None:
    from ..errors import VersionMismatch

    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"model format_version {version!r}, expected {FORMAT_VERSION}")


def encode_array(a: np.ndarray) -> dict:
    """Bit-exact JSON-able encoding (little-endian raw bytes, base64)."""
    a = np.ascontiguousarray(a)
    dtype = a.dtype.newbyteorder("<")
    return {
        "dtype": dtype.str,
        "shape": list(a.shape),
        "b64": base64.b64encode(a.astype(dtype, copy=False).tobytes()).decode("ascii"),
    }


def decode_array(d: Mapping) -> np.ndarray:
    raw = base64.b64decode(d["b64"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).astype(
        np.dtype(d["dtype"]).newbyteorder("="))


def check_columns(model, X: FeatureMatrix) -> None:
    if tuple(X.column_names) != tuple(model.feature_columns):
        raise ColumnMismatch(
            f"model expects {len(model.feature_columns)} columns "
            f"({model.feature_columns[:3]}...), got {len(X.column_names)} "
            f"({tuple(X.column_names)[:3]}...)"
        )


def predict(model: TrainedSublearner, X: FeatureMatrix) -> np.ndarray:
    check_columns(model, X)
    if X.n_rows == 0:
        return np.empty(0)
    if model.kind in GBDT_KINDS:
        from .gbdt import predict_gbdt
        return predict_gbdt(model.parameters, X.values)
    if model.kind == MLP_KIND:
        from .mlp import predict_mlp
        return predict_mlp(model.parameters, X.values)
    raise GridcastError(f"cannot predict with kind {model.kind!r}")


def train_sublearner(X: FeatureMatrix, y, spec: SublearnerSpec) -> TrainedSublearner:
    """Dispatch on ``spec.kind``."""
    if spec.kind in GBDT_KINDS:
        from .gbdt import train_gbdt
        return train_gbdt(X, y, spec)
    from .mlp import train_mlp
    return train_mlp(X, y, spec)


def chronological_tail(n: int, fraction: float) -> int:
    """Number of trailing rows held out for early stopping (0 disables)."""
    if fraction <= 0 or n < 2:
        return 0
    return min(n - 1, max(1, int(round(fraction * n))))
