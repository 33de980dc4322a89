from __future__ import annotations

import numpy as np

from ..errors import EmptyInputError, SchemaError


def check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if len(X) == 0 or len(y) == 0:
        raise EmptyInputError("cannot fit on empty input")
    if len(X) != len(y):
        raise SchemaError(f"X has {len(X)} rows but y has {len(y)}")
    return X, y


class Regressor:
    """Uniform fitted-model contract.

    Subclasses set ``family``, ``hyperparams``, ``n_features`` and ``seed``
    and implement ``_predict`` on a validated matrix.
    """

    family = None

    def __init__(self, hyperparams=None, n_features=0, seed=None):
        self.hyperparams = dict(hyperparams or {})
        self.n_features = int(n_features)
        self.seed = seed

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1) if self.n_features > 1 else X.reshape(-1, 1)
        if X.shape[1] != self.n_features:
            raise SchemaError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return self._predict(X)

    def _predict(self, X):
        raise NotImplementedError

    def __repr__(self):
        hp = ", ".join(f"{k}={v!r}" for k, v in self.hyperparams.items())
        return f"{type(self).__name__}({hp})"


class MeanRegressor(Regressor):
    """Constant prediction; fallback for clusters too small to cross-validate."""

    family = "mean"

    def __init__(self, value, n_features):
        super().__init__({}, n_features)
        self.value = float(value)

    def _predict(self, X):
        return np.full(len(X), self.value)


def fit_mean(X, y, hp=None, seed=None):
    X, y = check_xy(X, y)
    return MeanRegressor(y.mean(), X.shape[1])
