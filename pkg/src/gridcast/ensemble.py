"""Two-stage stacking with greedy ensemble selection.

Base sublearners are trained on the raw features; their out-of-fold
predictions are appended to the raw features to train the stack
sublearners; a greedy forward selection over the stack predictions on a
chronological holdout yields the final blending weights.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyCandidates, NonpositiveGroundtruth, TooFewRows
from .features import FeatureMatrix
from .seeding import derive_seed
from .sublearners import SublearnerSpec, TrainedSublearner, train_sublearner
from .sublearners.base import check_format_version, FORMAT_VERSION

logger = logging.getLogger(__name__)

BASE_PRED_GROUP = "base_predictions"
TIE_RTOL = 1e-12
_STAGE_OOF, _STAGE_BASE, _STAGE_STACK = 0, 1, 2


@dataclass(frozen=True)
class OOFMatrix:
    predictions: np.ndarray
    fold_of: np.ndarray
    k: int
    column_names: tuple[str, ...]


def fold_bounds(n: int, k: int) -> list[tuple[int, int]]:
    """Contiguous chronological folds; the first ``n % k`` folds get one extra row."""
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    ends = np.cumsum(sizes)
    return [(int(e - s), int(e)) for s, e in zip(sizes, ends)]


def prediction_column_names(specs: Sequence[SublearnerSpec]) -> tuple[str, ...]:
    kinds = [s.kind for s in specs]
    names = []
    for i, kind in enumerate(kinds):
        names.append(f"base_pred_{kind}" if kinds.count(kind) == 1 else f"base_pred_{kind}_{i}")
    return tuple(names)


def _as_values(y) -> np.ndarray:
    return np.asarray(getattr(y, "values", y), dtype=float).ravel()


def generate_oof(specs: Sequence[SublearnerSpec], X: FeatureMatrix, y, k: int = 5,
                 seed: int = 0, fit: Callable = train_sublearner) -> OOFMatrix:
    """Out-of-fold predictions of every spec.

    ``fit(X, y, spec)`` must return an object with ``predict(X)``; it
    defaults to the sublearner dispatcher.
    """
    n = X.n_rows
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < 2 * k:
        raise TooFewRows(f"need at least {2 * k} rows for {k} folds, got {n}")
    yv = _as_values(y)
    preds = np.full((n, len(specs)), np.nan)
    fold_of = np.empty(n, dtype=np.int64)
    for f, (lo, hi) in enumerate(fold_bounds(n, k)):
        fold_of[lo:hi] = f
        train_rows = np.r_[0:lo, hi:n]
        X_tr, y_tr = X.take_rows(train_rows), yv[train_rows]
        X_te = X.take_rows(slice(lo, hi))
        for i, spec in enumerate(specs):
            model = fit(X_tr, y_tr, spec.with_seed(derive_seed(seed, _STAGE_OOF, f, i)))
            preds[lo:hi, i] = model.predict(X_te)
    if np.isnan(preds).any():
        raise ValueError("out-of-fold matrix has unfilled entries")
    return OOFMatrix(preds, fold_of, k, prediction_column_names(specs))


def stack_features(X_raw: FeatureMatrix, names, predictions) -> FeatureMatrix:
    if len(names) == 0:
        return X_raw
    return X_raw.hstack(names, predictions, BASE_PRED_GROUP)


def train_stack_layer(specs: Sequence[SublearnerSpec], X_raw: FeatureMatrix, oof: OOFMatrix,
                      y, seed: int = 0, fit: Callable = train_sublearner) -> list:
    if oof.predictions.shape[0] != X_raw.n_rows:
        raise ValueError("OOF rows do not match raw feature rows")
    if len(oof.column_names) == 0:
        warnings.warn("no base predictions; stack layer trains on raw features only",
                      stacklevel=2)
    X_stack = stack_features(X_raw, oof.column_names, oof.predictions)
    yv = _as_values(y)
    return [fit(X_stack, yv, spec.with_seed(derive_seed(seed, _STAGE_STACK, i)))
            for i, spec in enumerate(specs)]


def blend(predictions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of prediction columns, accumulated in column order.

    Zero-weight columns are skipped, so a one-hot weight vector returns its
    column exactly.
    """
    out = None
    for j in np.flatnonzero(weights):
        term = weights[j] * predictions[:, j]
        out = term if out is None else out + term
    if out is None:
        return np.zeros(predictions.shape[0])
    return out


def _mape(y, yhat) -> float:
    return float(np.mean(np.abs(y - yhat) / y) * 100.0)


def ensemble_select(candidate_preds, y_val, iterations: int = 50, seed=None,
                    return_trace: bool = False):
    """Greedy forward selection with replacement, minimizing validation MAPE.

    Each step adds the candidate whose inclusion gives the lowest MAPE of
    the count-weighted average (ties go to the lowest index). The weights
    are the normalized selection counts at the step with the lowest MAPE
    (ties go to the earliest step); scores within a relative ``TIE_RTOL``
    count as ties. ``seed`` is accepted for interface symmetry; the
    procedure is deterministic.
    """
    P = np.asarray(candidate_preds, dtype=float)
    if P.ndim != 2 or P.shape[1] == 0:
        raise EmptyCandidates("ensemble selection needs at least one candidate")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    y = _as_values(y_val)
    if P.shape[0] != y.shape[0]:
        raise ValueError("candidate rows do not match validation targets")
    bad = np.flatnonzero(y <= 0)
    if bad.size:
        raise NonpositiveGroundtruth(int(bad[0]))
    m = P.shape[1]
    if m == 1:
        w = np.ones(1)
        return (w, [_mape(y, P[:, 0])]) if return_trace else w

    counts = np.zeros(m)
    best_score, best_counts = np.inf, None
    trace = []
    for step in range(1, iterations + 1):
        scores = np.empty(m)
        for j in range(m):
            trial = counts.copy()
            trial[j] += 1
            scores[j] = _mape(y, blend(P, trial / step))
        # blending equal columns differs from either only by rounding; treat
        # scores within TIE_RTOL of the minimum as ties
        low = scores.min()
        j_best = int(np.flatnonzero(scores <= low + TIE_RTOL * abs(low))[0])
        counts[j_best] += 1
        trace.append(float(scores[j_best]))
        if best_counts is None or scores[j_best] < best_score - TIE_RTOL * abs(best_score):
            best_score, best_counts = scores[j_best], counts.copy()
    weights = best_counts / best_counts.sum()
    return (weights, trace) if return_trace else weights


@dataclass(frozen=True)
class StackedHourEnsemble:
    base_models: tuple
    stack_models: tuple
    weights: np.ndarray
    target_hour: int
    day_class: str
    base_columns: tuple[str, ...] = ()
    validation_mape: float = float("nan")

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "base_models", tuple(self.base_models))
        object.__setattr__(self, "stack_models", tuple(self.stack_models))
        if len(w) != len(self.stack_models):
            raise ValueError("one weight per stack model required")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1, got {w}")

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "target_hour": self.target_hour,
            "day_class": self.day_class,
            "weights": [float(x) for x in self.weights],
            "base_columns": list(self.base_columns),
            "validation_mape": self.validation_mape,
            "base_models": [m.to_dict() for m in self.base_models],
            "stack_models": [m.to_dict() for m in self.stack_models],
        }

    @classmethod
    def from_dict(cls, d) -> "StackedHourEnsemble":
        check_format_version(d)
        return cls(
            base_models=[TrainedSublearner.from_dict(m) for m in d["base_models"]],
            stack_models=[TrainedSublearner.from_dict(m) for m in d["stack_models"]],
            weights=np.array(d["weights"], dtype=float),
            target_hour=int(d["target_hour"]),
            day_class=d["day_class"],
            base_columns=tuple(d["base_columns"]),
            validation_mape=float(d["validation_mape"]),
        )


def ensemble_predict(e: StackedHourEnsemble, X_raw: FeatureMatrix) -> np.ndarray:
    if e.base_models:
        base = np.column_stack([m.predict(X_raw) for m in e.base_models])
    else:
        base = np.empty((X_raw.n_rows, 0))
    X_stack = stack_features(X_raw, e.base_columns, base)
    preds = np.zeros((X_raw.n_rows, len(e.stack_models)))
    for j in np.flatnonzero(e.weights):
        preds[:, j] = e.stack_models[j].predict(X_stack)
    return blend(preds, e.weights)


@dataclass(frozen=True)
class EnsembleSettings:
    k_folds: int = 5
    selection_iterations: int = 50
    validation_fraction: float = 0.1


def fit_hour_ensemble(X: FeatureMatrix, y, specs: Sequence[SublearnerSpec],
                      settings: EnsembleSettings, seed: int, target_hour: int,
                      day_class: str) -> StackedHourEnsemble:
    """Train base, stack and selection stages for one forecast hour.

    The last ``validation_fraction`` of rows (chronological) is held out of
    both learner stages and used only for ensemble selection.
    """
    yv = _as_values(y)
    n = X.n_rows
    n_val = max(1, int(round(settings.validation_fraction * n)))
    n_fit = n - n_val
    X_fit, X_val = X.take_rows(slice(0, n_fit)), X.take_rows(slice(n_fit, n))
    y_fit, y_val = yv[:n_fit], yv[n_fit:]

    oof = generate_oof(specs, X_fit, y_fit, settings.k_folds, seed)
    base_models = [train_sublearner(X_fit, y_fit, s.with_seed(derive_seed(seed, _STAGE_BASE, i)))
                   for i, s in enumerate(specs)]
    stack_models = train_stack_layer(specs, X_fit, oof, y_fit, seed)

    base_val = np.column_stack([m.predict(X_val) for m in base_models])
    X_val_stack = stack_features(X_val, oof.column_names, base_val)
    stack_val = np.column_stack([m.predict(X_val_stack) for m in stack_models])
    positive = y_val > 0
    if not positive.any():
        raise NonpositiveGroundtruth(int(n_fit))
    weights, trace = ensemble_select(stack_val[positive], y_val[positive],
                                     settings.selection_iterations, return_trace=True)
    val_mape = _mape(y_val[positive], blend(stack_val[positive], weights))
    logger.debug("%s h%02d weights %s val MAPE %.3f", day_class, target_hour, weights, val_mape)
    return StackedHourEnsemble(base_models, stack_models, weights, target_hour, day_class,
                               oof.column_names, val_mape)
