"""Single-hidden-layer regression network trained with mini-batch Adam."""
from __future__ import annotations

import numpy as np

from ..errors import DivergenceError, InvalidHyperparameterError
from .base import Regressor, check_xy

NN_DEFAULTS = {
    "n_neurons": 20, "weight_decay": 1e-3, "learning_rate": 5e-3,
    "batch_size": 256, "epochs": 500, "init_scale": 1.0,
}
_BETA1, _BETA2, _EPS = 0.9, 0.999, 1e-8


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def unpack(theta, p, h):
    i = 0
    W1 = theta[i : i + p * h].reshape(p, h)
    i += p * h
    b1 = theta[i : i + h]
    i += h
    w2 = theta[i : i + h]
    b2 = theta[i + h]
    return W1, b1, w2, b2


def n_params(p, h):
    return p * h + 2 * h + 1


def forward(theta, X, h):
    W1, b1, w2, b2 = unpack(theta, X.shape[1], h)
    a = sigmoid(X @ W1 + b1)
    return a @ w2 + b2, a


def loss_and_grad(theta, X, t, h, weight_decay):
    """Batch loss ``0.5*mean((f-t)^2) + 0.5*wd*(|W1|^2 + |w2|^2)/B`` and its gradient."""
    B, p = X.shape
    W1, b1, w2, b2 = unpack(theta, p, h)
    out, a = forward(theta, X, h)
    r = out - t
    loss = 0.5 * np.mean(r * r) + 0.5 * weight_decay * ((W1 * W1).sum() + (w2 * w2).sum()) / B
    d_out = r / B
    g_w2 = a.T @ d_out + weight_decay * w2 / B
    g_b2 = d_out.sum()
    d_z = np.outer(d_out, w2) * a * (1.0 - a)
    g_W1 = X.T @ d_z + weight_decay * W1 / B
    g_b1 = d_z.sum(0)
    return loss, np.concatenate([g_W1.ravel(), g_b1, g_w2, [g_b2]])


class NeuralNetRegressor(Regressor):
    family = "nn"

    def __init__(self, theta, n_hidden, y_mean, y_scale, hyperparams, n_features, seed,
                 loss_history=()):
        super().__init__(hyperparams, n_features, seed)
        self.theta = theta
        self.n_hidden = n_hidden
        self.y_mean = float(y_mean)
        self.y_scale = float(y_scale)
        self.loss_history = tuple(loss_history)

    @property
    def output_bias(self):
        return self.y_mean + self.y_scale * self.theta[-1]

    def _predict(self, X):
        out, _ = forward(self.theta, X, self.n_hidden)
        return self.y_mean + self.y_scale * out


def init_params(p, h, rng, scale=1.0):
    limit = scale * np.sqrt(6.0 / (p + h))
    W1 = rng.uniform(-limit, limit, size=(p, h))
    limit2 = scale * np.sqrt(6.0 / (h + 1))
    w2 = rng.uniform(-limit2, limit2, size=h)
    return np.concatenate([W1.ravel(), np.zeros(h), w2, [0.0]])


def fit_nn(X, y, hp=None, seed=0):
    """Sigmoid hidden layer, linear output, MSE plus L2 weight decay.

    The target is standardized for training and mapped back at prediction.
    Mini-batches are reshuffled every epoch from a generator seeded by
    ``seed``; Adam updates the parameters.
    """
    X, y = check_xy(X, y)
    hp = {**NN_DEFAULTS, **(hp or {})}
    h = int(hp["n_neurons"])
    if h < 1 or int(hp["batch_size"]) < 1 or int(hp["epochs"]) < 0:
        raise InvalidHyperparameterError("n_neurons and batch_size must be >= 1, epochs >= 0")
    lr = float(hp["learning_rate"])
    wd = float(hp["weight_decay"])
    if lr <= 0 or wd < 0:
        raise InvalidHyperparameterError("learning_rate must be positive, weight_decay nonnegative")
    n, p = X.shape
    rng = np.random.default_rng(seed)
    y_mean = float(y.mean())
    y_scale = float(y.std()) or 1.0
    t = (y - y_mean) / y_scale
    theta = init_params(p, h, rng, float(hp["init_scale"]))
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    bs = min(int(hp["batch_size"]), n)
    step = 0
    history = []
    for epoch in range(int(hp["epochs"])):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            b = perm[start : start + bs]
            loss, g = loss_and_grad(theta, X[b], t[b], h, wd)
            if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            step += 1
            m = _BETA1 * m + (1 - _BETA1) * g
            v = _BETA2 * v + (1 - _BETA2) * g * g
            mhat = m / (1 - _BETA1**step)
            vhat = v / (1 - _BETA2**step)
            theta = theta - lr * mhat / (np.sqrt(vhat) + _EPS)
            total += loss * len(b)
        history.append(total / n)
    return NeuralNetRegressor(theta, h, y_mean, y_scale, hp, p, seed, history)
