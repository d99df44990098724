"""Gradient-boosted regression trees on squared error.

The model starts from the mean target; every round fits a depth-limited
tree to the current residuals with exact greedy splits and adds it scaled by
the learning rate. Training stops after ``n_rounds`` or when the loss on a
chronological validation tail has not improved for
``early_stopping_patience`` rounds, in which case the ensemble is truncated
to its best round.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from ..errors import TooFewRows
from ..features import FeatureMatrix
from . import _tree_kernels as K
from .base import GBDT_KINDS, SublearnerSpec, TrainedSublearner, chronological_tail

logger = logging.getLogger(__name__)

MIN_ROWS = 10


class DegenerateTarget(UserWarning):
    """Constant target; the fitted model predicts that constant."""


def _target_array(y, n: int) -> np.ndarray:
    values = np.asarray(getattr(y, "values", y), dtype=float).ravel()
    if values.shape[0] != n:
        raise ValueError(f"target has {values.shape[0]} rows, features have {n}")
    if not np.isfinite(values).all():
        raise ValueError("target contains NaN or infinite values")
    return values


def _empty_forest(base: float, train_loss=(), val_loss=(), best_round=0) -> dict:
    return {
        "base": float(base),
        "feature": np.empty(0, dtype=np.int64),
        "threshold": np.empty(0),
        "left": np.empty(0, dtype=np.int64),
        "right": np.empty(0, dtype=np.int64),
        "value": np.empty(0),
        "roots": np.empty(0, dtype=np.int64),
        "train_loss": np.asarray(train_loss, dtype=float),
        "val_loss": np.asarray(val_loss, dtype=float),
        "best_round": int(best_round),
    }


def train_gbdt(X: FeatureMatrix, y, spec: SublearnerSpec) -> TrainedSublearner:
    if spec.kind not in GBDT_KINDS:
        raise ValueError(f"train_gbdt needs a gbdt kind, got {spec.kind!r}")
    n = X.n_rows
    if n < MIN_ROWS:
        raise TooFewRows(f"gbdt needs at least {MIN_ROWS} rows, got {n}")
    yv = _target_array(y, n)
    hp = spec.hyperparameters

    if np.all(yv == yv[0]):
        warnings.warn(f"{spec.kind}: constant target, fitting mean-only model",
                      DegenerateTarget, stacklevel=2)
        return TrainedSublearner(spec, X.column_names, _empty_forest(yv[0]))

    patience = hp["early_stopping_patience"]
    n_val = chronological_tail(n, hp["validation_fraction"]) if patience > 0 else 0
    n_fit = n - n_val

    Xv = np.ascontiguousarray(X.values, dtype=np.float64)
    X_fit, X_val = Xv[:n_fit], Xv[n_fit:]
    y_fit, y_val = yv[:n_fit], yv[n_fit:]

    base = float(np.mean(y_fit))
    F = np.full(n_fit, base)
    F_val = np.full(n_val, base)
    order_all, values_all = K.presort(X_fit, np.arange(n_fit, dtype=np.int64))
    rng = np.random.default_rng(spec.seed)
    n_sub = max(1, int(round(hp["subsample"] * n_fit)))
    all_rows = np.ones(n_fit, dtype=np.bool_)

    trees = []
    train_loss = [float(np.mean((y_fit - F) ** 2))]
    val_loss = [float(np.mean((y_val - F_val) ** 2))] if n_val else []
    best_round, best_val = 0, val_loss[0] if n_val else np.inf

    for t in range(hp["n_rounds"]):
        residual = y_fit - F
        if n_sub < n_fit:
            keep = np.zeros(n_fit, dtype=np.bool_)
            keep[rng.permutation(n_fit)[:n_sub]] = True
        else:
            keep = all_rows
        tree = K.grow_tree(X_fit, order_all, values_all, residual, keep, hp["max_depth"],
                           hp["min_samples_leaf"], hp["l2_leaf"], hp["min_split_gain"],
                           hp["learning_rate"])
        K.predict_tree(X_fit, *tree, F)
        trees.append(tree)
        train_loss.append(float(np.mean((y_fit - F) ** 2)))
        if n_val:
            K.predict_tree(X_val, *tree, F_val)
            loss = float(np.mean((y_val - F_val) ** 2))
            val_loss.append(loss)
            if loss < best_val:
                best_val, best_round = loss, t + 1
            elif t + 1 - best_round >= patience:
                break

    if not n_val:
        best_round = len(trees)
    trees = trees[:best_round]
    logger.debug("%s: kept %d/%d rounds", spec.kind, best_round, len(train_loss) - 1)

    params = _empty_forest(base, train_loss, val_loss, best_round)
    if trees:
        sizes = np.array([len(t[0]) for t in trees], dtype=np.int64)
        params.update(
            feature=np.concatenate([t[0] for t in trees]),
            threshold=np.concatenate([t[1] for t in trees]),
            left=np.concatenate([t[2] for t in trees]),
            right=np.concatenate([t[3] for t in trees]),
            value=np.concatenate([t[4] for t in trees]),
            roots=np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64),
        )
    return TrainedSublearner(spec, X.column_names, params)


def predict_gbdt(params, values: np.ndarray) -> np.ndarray:
    Xv = np.ascontiguousarray(values, dtype=np.float64)
    out = np.empty(Xv.shape[0])
    K.predict_forest(Xv, float(params["base"]), params["feature"], params["threshold"],
                     params["left"], params["right"], params["value"], params["roots"], out)
    return out


def n_trees(model: TrainedSublearner) -> int:
    return int(model.parameters["roots"].shape[0])
