"""Tabular multilayer perceptron for regression, in plain numpy.

Each hidden block is ``linear -> batch norm -> ReLU -> dropout``; the output
layer is a single linear unit. Inputs and target are z-scored with training
statistics that are stored in the model. Training is mini-batch Adam on mean
squared error with early stopping on a chronological validation tail.
"""

from __future__ import annotations

import re

import numpy as np

from ..errors import NonfiniteLoss, TooFewRows
from ..features import FeatureMatrix
from .base import MLP_KIND, SublearnerSpec, TrainedSublearner, chronological_tail
from .gbdt import MIN_ROWS, _target_array

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
_WEIGHT_KEY = re.compile(r"(W|b|gamma|beta)\d+")


def init_params(d: int, hidden, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """He-normal weights, zero biases, unit BN scale."""
    params = {}
    widths = [d, *hidden]
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        params[f"W{i}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
        params[f"gamma{i}"] = np.ones(fan_out)
        params[f"beta{i}"] = np.zeros(fan_out)
    out = len(hidden) + 1
    params[f"W{out}"] = rng.normal(0.0, np.sqrt(1.0 / widths[-1]), size=(widths[-1], 1))
    params[f"b{out}"] = np.zeros(1)
    return params


def n_hidden(params) -> int:
    return sum(1 for k in params if k.startswith("gamma"))


def forward(params, X, *, train: bool, masks=None, running=None, eps=1e-5):
    """Forward pass on standardized inputs.

    In training mode batch statistics are used and ``masks`` (one per hidden
    layer, already scaled by ``1/(1-p)``, or None) applies dropout. In
    inference mode ``running`` supplies ``mean{i}``/``var{i}``.
    Returns the output vector and a cache for :func:`backward`.
    """
    h = X
    cache = []
    for i in range(1, n_hidden(params) + 1):
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
        else:
            mu = running[f"mean{i}"]
            var = running[f"var{i}"]
        inv_std = 1.0 / np.sqrt(var + eps)
        zhat = (z - mu) * inv_std
        a = params[f"gamma{i}"] * zhat + params[f"beta{i}"]
        r = np.maximum(a, 0.0)
        mask = None if masks is None else masks[i - 1]
        out = r if mask is None else r * mask
        cache.append((h, z, mu, var, inv_std, zhat, a, mask))
        h = out
    k = n_hidden(params) + 1
    yhat = (h @ params[f"W{k}"] + params[f"b{k}"])[:, 0]
    cache.append(h)
    return yhat, cache


def backward(params, cache, dyhat):
    """Gradients of a scalar loss given d loss / d yhat (training-mode cache)."""
    grads = {}
    k = n_hidden(params) + 1
    h_last = cache[-1]
    dy = dyhat[:, None]
    grads[f"W{k}"] = h_last.T @ dy
    grads[f"b{k}"] = dy.sum(axis=0)
    dh = dy @ params[f"W{k}"].T
    for i in range(k - 1, 0, -1):
        h, z, mu, var, inv_std, zhat, a, mask = cache[i - 1]
        dr = dh if mask is None else dh * mask
        da = dr * (a > 0)
        grads[f"gamma{i}"] = (da * zhat).sum(axis=0)
        grads[f"beta{i}"] = da.sum(axis=0)
        dzhat = da * params[f"gamma{i}"]
        m = z.shape[0]
        dz = inv_std / m * (m * dzhat - dzhat.sum(axis=0) - zhat * (dzhat * zhat).sum(axis=0))
        grads[f"W{i}"] = h.T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        if i > 1:
            dh = dz @ params[f"W{i}"].T
    return grads


def loss_and_grad(params, X, y, masks=None, eps=1e-5):
    """Mean squared error and its gradient, training mode."""
    yhat, cache = forward(params, X, train=True, masks=masks, eps=eps)
    diff = yhat - y
    loss = float(np.mean(diff ** 2))
    return loss, backward(params, cache, 2.0 * diff / diff.shape[0])


def _standardize_stats(a: np.ndarray, axis=0):
    mean = a.mean(axis=axis)
    std = a.std(axis=axis)
    return mean, np.where(std > 0, std, 1.0)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    starts = list(range(0, n, batch_size))
    # a final batch of one row has no batch variance; fold it into the previous one
    if len(starts) > 1 and n - starts[-1] < 2:
        starts.pop()
    bounds = starts[1:] + [n]
    return [perm[s:e] for s, e in zip(starts, bounds)]


def train_mlp(X: FeatureMatrix, y, spec: SublearnerSpec) -> TrainedSublearner:
    if spec.kind != MLP_KIND:
        raise ValueError(f"train_mlp needs kind 'mlp', got {spec.kind!r}")
    n = X.n_rows
    if n < MIN_ROWS:
        raise TooFewRows(f"mlp needs at least {MIN_ROWS} rows, got {n}")
    yv = _target_array(y, n)
    hp = spec.hyperparameters
    rng = np.random.default_rng(spec.seed)

    patience = hp["early_stopping_patience"]
    n_val = chronological_tail(n, hp["validation_fraction"]) if patience > 0 else 0
    n_fit = n - n_val
    x_mean, x_std = _standardize_stats(X.values[:n_fit])
    y_mean, y_std = _standardize_stats(yv[:n_fit])
    Xs = (X.values - x_mean) / x_std
    ys = (yv - y_mean) / y_std
    X_fit, y_fit, X_val, y_val = Xs[:n_fit], ys[:n_fit], Xs[n_fit:], ys[n_fit:]

    hidden = hp["hidden"]
    params = init_params(X.n_cols, hidden, rng)
    running = {}
    for i, w in enumerate(hidden, start=1):
        running[f"mean{i}"] = np.zeros(w)
        running[f"var{i}"] = np.ones(w)
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    lr, p_drop = hp["learning_rate"], hp["dropout"]
    momentum, eps = hp["bn_momentum"], hp["bn_eps"]

    step = 0
    best = (np.inf, None, None)
    since_best = 0
    history = []
    for epoch in range(hp["epochs"]):
        epoch_loss = 0.0
        for idx in _batches(n_fit, hp["batch_size"], rng):
            xb, yb = X_fit[idx], y_fit[idx]
            masks = None
            if p_drop > 0:
                masks = [(rng.random((len(idx), w)) >= p_drop) / (1.0 - p_drop) for w in hidden]
            yhat, cache = forward(params, xb, train=True, masks=masks, eps=eps)
            diff = yhat - yb
            loss = float(np.mean(diff ** 2))
            if not np.isfinite(loss):
                raise NonfiniteLoss(f"mlp loss became {loss} at epoch {epoch}")
            grads = backward(params, cache, 2.0 * diff / len(idx))
            for i in range(1, len(hidden) + 1):
                _, z, mu, var, *_ = cache[i - 1]
                unbiased = var * len(idx) / (len(idx) - 1)
                running[f"mean{i}"] = (1 - momentum) * running[f"mean{i}"] + momentum * mu
                running[f"var{i}"] = (1 - momentum) * running[f"var{i}"] + momentum * unbiased
            step += 1
            for k, g in grads.items():
                m1[k] = ADAM_BETA1 * m1[k] + (1 - ADAM_BETA1) * g
                m2[k] = ADAM_BETA2 * m2[k] + (1 - ADAM_BETA2) * g * g
                mhat = m1[k] / (1 - ADAM_BETA1 ** step)
                vhat = m2[k] / (1 - ADAM_BETA2 ** step)
                params[k] = params[k] - lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
            epoch_loss += loss * len(idx)
        history.append(epoch_loss / n_fit)

        if n_val:
            pred, _ = forward(params, X_val, train=False, running=running, eps=eps)
            val_loss = float(np.mean((pred - y_val) ** 2))
            if not np.isfinite(val_loss):
                raise NonfiniteLoss(f"mlp validation loss became {val_loss} at epoch {epoch}")
            if val_loss < best[0]:
                best = (val_loss, {k: v.copy() for k, v in params.items()},
                        {k: v.copy() for k, v in running.items()})
                since_best = 0
            else:
                since_best += 1
                if since_best >= patience:
                    break

    if best[1] is not None:
        params, running = best[1], best[2]
    out = {**params, **running,
           "x_mean": x_mean, "x_std": x_std,
           "y_mean": float(y_mean), "y_std": float(y_std),
           "bn_eps": float(eps), "train_loss": np.asarray(history)}
    return TrainedSublearner(spec, X.column_names, out)


def predict_mlp(params, values: np.ndarray) -> np.ndarray:
    Xs = (np.asarray(values, dtype=float) - params["x_mean"]) / params["x_std"]
    weights = {k: v for k, v in params.items() if _WEIGHT_KEY.fullmatch(k)}
    running = {k: params[k] for k in params if k.startswith(("mean", "var"))}
    yhat, _ = forward(weights, Xs, train=False, running=running, eps=params["bn_eps"])
    return yhat * params["y_std"] + params["y_mean"]
