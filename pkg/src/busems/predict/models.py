"""Passenger load-factor predictors: hourly average, CART, gradient boosting, MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LOAD_FACTOR_CAP, WEATHER_CARDINALITY, FeatureVector, LoadDataset, check_features


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; retry with a smaller learning rate."""


class Predictor:
    kind = "base"
    weather_cardinality = WEATHER_CARDINALITY

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        check_features(X, self.weather_cardinality)
        return self._forward(X)

    def predict(self, x: FeatureVector) -> float:
        return float(self.predict_many(x.as_array()[None, :])[0])

    def _forward(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def predict(model: Predictor, x: FeatureVector) -> float:
    return model.predict(x)


def clamp_load_factor(value):
    """Clip a raw prediction to the range the EMS accepts."""
    return np.clip(value, 0.0, LOAD_FACTOR_CAP)


# ---------------------------------------------------------------------------
# hourly average

@dataclass(frozen=True)
class AverageModel(Predictor):
    table: np.ndarray          # (7, 24), nan where no training rows
    global_mean: float
    kind = "average"

    def _forward(self, X):
        d = X[:, 0].astype(int)
        h = X[:, 1].astype(int)
        v = self.table[d, h]
        return np.where(np.isnan(v), self.global_mean, v)


def train_average(data: LoadDataset) -> AverageModel:
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    sums = np.zeros((7, 24))
    counts = np.zeros((7, 24))
    d = data.features[:, 0].astype(int)
    h = data.features[:, 1].astype(int)
    np.add.at(sums, (d, h), data.targets)
    np.add.at(counts, (d, h), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        table = np.where(counts > 0, sums / counts, np.nan)
    return AverageModel(table, float(np.mean(data.targets)))


# ---------------------------------------------------------------------------
# regression tree

LEAF = -1


@dataclass(frozen=True)
class TreeModel(Predictor):
    """Flat binary tree; node 0 is the root and ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    kind = "tree"

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return node
            rows = np.nonzero(inner)[0]
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def _forward(self, X):
        return self.value[self.apply(X)]


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exhaustive search for the split minimising total child squared error.

    Ties go to the lowest feature index, then the lowest threshold.
    Returns ``(sse, feature, threshold)`` or ``None``.
    """
    n = y.size
    best = None
    for k in range(X.shape[1]):
        order = np.argsort(X[:, k], kind="stable")
        xs, ys = X[order, k], y[order]
        # candidate cut after position i (left = first i+1 rows) where the value changes
        cut = np.nonzero(xs[1:] > xs[:-1])[0]
        n_left = cut + 1
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        cut, n_left = cut[ok], n_left[ok]
        if cut.size == 0:
            continue
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        sl, ql = csum[cut], csq[cut]
        sr, qr = csum[-1] - sl, csq[-1] - ql
        n_right = n - n_left
        sse = (ql - sl * sl / n_left) + (qr - sr * sr / n_right)
        i = int(np.argmin(sse))
        if best is None or sse[i] < best[0]:
            best = (float(sse[i]), k, 0.5 * (xs[cut[i]] + xs[cut[i] + 1]))
    return best


def _grow(X, y, depth, max_depth, min_leaf, min_decrease, nodes):
    idx = len(nodes["feature"])
    for key, v in (("feature", LEAF), ("threshold", 0.0), ("left", -1), ("right", -1),
                   ("value", float(np.mean(y)))):
        nodes[key].append(v)
    if depth >= max_depth or y.size < 2 * min_leaf:
        return idx
    if np.all(y == y[0]):
        return idx
    parent = float(np.sum((y - y.mean()) ** 2))
    if parent <= 0.0:
        return idx
    split = _best_split(X, y, min_leaf)
    if split is None:
        return idx
    sse, k, t = split
    if (parent - sse) / parent < min_decrease:
        return idx
    mask = X[:, k] <= t
    nodes["feature"][idx] = k
    nodes["threshold"][idx] = t
    nodes["left"][idx] = _grow(X[mask], y[mask], depth + 1, max_depth, min_leaf, min_decrease, nodes)
    nodes["right"][idx] = _grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf, min_decrease, nodes)
    return idx


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int = 8, min_leaf: int = 5,
             min_impurity_decrease: float = 1e-4) -> TreeModel:
    """CART regression tree on a raw feature matrix.

    A node stays a leaf when the best split lowers its squared error by less
    than ``min_impurity_decrease`` relative to the node's own squared error.
    """
    if y.size == 0:
        raise ValueError("cannot train on an empty dataset")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value")}
    _grow(np.asarray(X, float), np.asarray(y, float), 0, max_depth, min_leaf, min_impurity_decrease, nodes)
    return TreeModel(np.array(nodes["feature"], dtype=np.int64), np.array(nodes["threshold"]),
                     np.array(nodes["left"], dtype=np.int64), np.array(nodes["right"], dtype=np.int64),
                     np.array(nodes["value"]))


def train_regression_tree(data: LoadDataset, max_depth: int = 8, min_leaf: int = 5,
                          min_impurity_decrease: float = 1e-4) -> TreeModel:
    return fit_tree(data.features, data.targets, max_depth, min_leaf, min_impurity_decrease)


# ---------------------------------------------------------------------------
# gradient boosting

@dataclass(frozen=True)
class GbdtModel(Predictor):
    baseline: float
    learning_rate: float
    trees: tuple = ()
    kind = "gbdt"

    def _forward(self, X):
        out = np.full(X.shape[0], self.baseline)
        for tree in self.trees:
            out = out + self.learning_rate * tree._forward(X)
        return out

    def truncated(self, n_trees: int) -> "GbdtModel":
        return GbdtModel(self.baseline, self.learning_rate, self.trees[:n_trees])


def train_gbdt(data: LoadDataset, n_trees: int = 100, learning_rate: float = 0.1, max_depth: int = 4,
               min_leaf: int = 5) -> GbdtModel:
    """Least-squares boosting: each tree fits the current residuals."""
    if n_trees < 0:
        raise ValueError("n_trees must be non-negative")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must be in (0, 1]")
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    X, y = data.features, data.targets
    base = float(np.mean(y))
    fitted = np.full(y.size, base)
    trees = []
    for _ in range(n_trees):
        tree = fit_tree(X, y - fitted, max_depth, min_leaf, 0.0)
        fitted = fitted + learning_rate * tree._forward(X)
        trees.append(tree)
    return GbdtModel(base, learning_rate, tuple(trees))


# ---------------------------------------------------------------------------
# multilayer perceptron

NN_INPUT_DIM = 7 + 1 + WEATHER_CARDINALITY + 2 + 1 + 1


def encode_features(X: np.ndarray, weather_cardinality: int = WEATHER_CARDINALITY) -> np.ndarray:
    """One-hot day and weather, scaled hour/temperatures/wind, 0/1 holiday."""
    X = np.atleast_2d(X)
    n = X.shape[0]
    dow = np.zeros((n, 7))
    dow[np.arange(n), X[:, 0].astype(int)] = 1.0
    wx = np.zeros((n, weather_cardinality))
    wx[np.arange(n), X[:, 2].astype(int)] = 1.0
    return np.hstack([dow, X[:, 1:2] / 23.0, wx, X[:, 3:5] / 40.0, X[:, 5:6] / 10.0, X[:, 6:7]])


@dataclass(frozen=True)
class NnModel(Predictor):
    weights: tuple
    biases: tuple
    activations: tuple = ("relu", "relu", "linear")
    kind = "nn"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or len(self.weights) != len(self.activations):
            raise ValueError("weights, biases and activations differ in count")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("layer dimensions do not chain")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape does not match its layer")
        if set(self.activations) - {"relu", "linear"}:
            raise ValueError("activations must be relu or linear")

    def _forward(self, X):
        return forward_encoded(self, encode_features(X))[-1][:, 0]


def forward_encoded(model: NnModel, A: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first."""
    acts = [A]
    for w, b, f in zip(model.weights, model.biases, model.activations):
        z = acts[-1] @ w + b
        acts.append(np.maximum(z, 0.0) if f == "relu" else z)
    return acts


def init_nn(input_dim: int, hidden=(32, 16), seed: int = 0) -> NnModel:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = (input_dim, *hidden, 1)
    ws = tuple(rng.normal(0.0, np.sqrt(2.0 / m), size=(m, n)) for m, n in zip(dims[:-1], dims[1:]))
    bs = tuple(np.zeros(n) for n in dims[1:])
    return NnModel(ws, bs, ("relu",) * len(hidden) + ("linear",))


def mse_loss(model: NnModel, A: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((forward_encoded(model, A)[-1][:, 0] - y) ** 2))


def nn_gradients(model: NnModel, A: np.ndarray, y: np.ndarray):
    """Backprop gradients of the mean squared error w.r.t. weights and biases."""
    acts = forward_encoded(model, A)
    delta = (2.0 / y.size) * (acts[-1] - y[:, None])
    gw, gb = [], []
    for layer in range(len(model.weights) - 1, -1, -1):
        if model.activations[layer] == "relu":
            delta = delta * (acts[layer + 1] > 0.0)
        gw.append(acts[layer].T @ delta)
        gb.append(delta.sum(axis=0))
        delta = delta @ model.weights[layer].T
    return gw[::-1], gb[::-1]


def train_nn(data: LoadDataset, epochs: int = 200, learning_rate: float = 0.01, seed: int = 0,
             hidden=(32, 16)) -> NnModel:
    """Full-batch gradient descent on the mean squared error."""
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be positive")
    A = encode_features(data.features)
    y = data.targets
    model = init_nn(A.shape[1], hidden, seed)
    ws, bs = [w.copy() for w in model.weights], [b.copy() for b in model.biases]
    for epoch in range(epochs):
        # overflow is detected below and reported as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            gw, gb = nn_gradients(NnModel(tuple(ws), tuple(bs), model.activations), A, y)
            for i in range(len(ws)):
                ws[i] -= learning_rate * gw[i]
                bs[i] -= learning_rate * gb[i]
        if not all(np.all(np.isfinite(w)) for w in ws):
            raise TrainingDivergedError(f"non-finite weights after epoch {epoch + 1}")
    out = NnModel(tuple(ws), tuple(bs), model.activations)
    if len(y) and not np.isfinite(mse_loss(out, A, y)):
        raise TrainingDivergedError("non-finite training loss")
    return out



MODEL_KINDS = ("average", "tree", "gbdt", "nn")
