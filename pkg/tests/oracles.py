"""Slow, direct reference implementations used to check the real code."""

import math

import numpy as np
from scipy import integrate


def mape_direct(y, yhat) -> float:
    terms = [abs(a - b) / a for a, b in zip(y, yhat)]
    return 100.0 * math.fsum(terms) / len(terms)


class OracleTree:
    """Recursive exhaustive-search regression tree on squared error.

    Every distinct value of every feature is tried as a cut (``x <= v``
    goes left); the best gain wins, earlier features and smaller cuts win
    ties. ``near_tie`` is set when the runner-up is within ``tie_tol``
    relative gain, since then the winner depends on rounding.
    """

    def __init__(self, X, r, max_depth, min_leaf, l2=0.0, min_gain=0.0, scale=1.0,
                 tie_tol=1e-9):
        self.X, self.r = X, r
        self.max_depth, self.min_leaf = max_depth, min_leaf
        self.l2, self.min_gain, self.scale, self.tie_tol = l2, min_gain, scale, tie_tol
        self.near_tie = False
        self.root = self._grow(np.arange(len(r)), 0)

    def _score(self, g, n):
        return g * g / (n + self.l2) if n + self.l2 > 0 else 0.0

    def _grow(self, rows, depth):
        g = math.fsum(self.r[rows])
        n = len(rows)
        leaf = ("leaf", self.scale * g / (n + self.l2))
        if depth >= self.max_depth or n < 2 * self.min_leaf:
            return leaf
        parent = self._score(g, n)
        gains = []
        for j in range(self.X.shape[1]):
            col = self.X[rows, j]
            for v in np.unique(col)[:-1]:
                left = rows[col <= v]
                right = rows[col > v]
                if len(left) < self.min_leaf or len(right) < self.min_leaf:
                    continue
                gain = (self._score(math.fsum(self.r[left]), len(left))
                        + self._score(math.fsum(self.r[right]), len(right)) - parent)
                gains.append((gain, j, v, left, right))
        if not gains:
            return leaf
        best = gains[0]
        for cand in gains[1:]:
            if cand[0] > best[0]:
                best = cand
        ranked = sorted(c[0] for c in gains)
        top = ranked[-1]
        if len(ranked) > 1 and top - ranked[-2] <= self.tie_tol * max(1.0, abs(top)):
            self.near_tie = True
        if abs(best[0] - self.min_gain) <= self.tie_tol * max(1.0, abs(best[0])):
            self.near_tie = True
        if not best[0] > self.min_gain:
            return leaf
        _, j, v, left, right = best
        return ("split", j, v, self._grow(left, depth + 1), self._grow(right, depth + 1))

    def predict(self, X):
        out = np.empty(len(X))
        for i, x in enumerate(X):
            node = self.root
            while node[0] == "split":
                node = node[3] if x[node[1]] <= node[2] else node[4]
            out[i] = node[1]
        return out


def oracle_boost(X, y, rounds, max_depth, min_leaf, learning_rate, l2=0.0):
    """Plain gradient boosting with :class:`OracleTree`; returns (predict, near_tie)."""
    base = float(np.mean(y))
    F = np.full(len(y), base)
    trees = []
    near_tie = False
    for _ in range(rounds):
        tree = OracleTree(X, y - F, max_depth, min_leaf, l2=l2, scale=learning_rate)
        near_tie |= tree.near_tie
        F = F + tree.predict(X)
        trees.append(tree)

    def predict(Z):
        out = np.full(len(Z), base)
        for t in trees:
            out = out + t.predict(Z)
        return out

    return predict, near_tie


class Memorizer:
    """Returns the stored target of the nearest training row."""

    def __init__(self, X, y):
        self.X, self.y = X.values.copy(), np.asarray(y, dtype=float).copy()

    def predict(self, X):
        d = ((X.values[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        return self.y[np.argmin(d, axis=1)]


def memorize(X, y, spec):
    return Memorizer(X, y)


def uniform_memorizer_floor(a: float, b: float) -> float:
    """E|Y - Y'| / Y in percent for independent Y, Y' ~ U[a, b].

    The inner expectation over Y' is ((y-a)^2 + (b-y)^2) / (2 (b-a)).
    """
    def inner(y):
        return ((y - a) ** 2 + (b - y) ** 2) / (2.0 * (b - a)) / y

    value, _ = integrate.quad(inner, a, b)
    return 100.0 * value / (b - a)


def numeric_grad(f, params, h=1e-6):
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up = f()
            arr[idx] = old - h
            down = f()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return grads
