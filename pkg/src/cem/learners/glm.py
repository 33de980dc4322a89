"""Linear, log-linear and Poisson regression baselines."""
from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError, InvalidHyperparameterError
from .base import Regressor, check_xy

GLM_FAMILIES = ("linear", "log_linear", "poisson")
RIDGE_JITTER = 1e-8
_COND_LIMIT = 1e12
_ETA_CLIP = 50.0


def _design(X):
    return np.column_stack([np.ones(len(X)), X])


def solve_normal_equations(A, b, weights=None):
    """Least squares through ``A'WA beta = A'Wb``, jittered when near-singular."""
    if weights is None:
        AtA = A.T @ A
        Atb = A.T @ b
    else:
        Aw = A * weights[:, None]
        AtA = A.T @ Aw
        Atb = Aw.T @ b
    if np.linalg.cond(AtA) > _COND_LIMIT:
        AtA = AtA + RIDGE_JITTER * np.eye(len(AtA))
    return np.linalg.solve(AtA, Atb)


class GlmRegressor(Regressor):
    """``coef[0]`` is the intercept."""

    def __init__(self, family, coef, hyperparams, n_features, deviance=None, n_iter=0):
        super().__init__(hyperparams, n_features)
        self.family = family
        self.coef = coef
        self.deviance = deviance
        self.n_iter = n_iter

    @property
    def intercept(self):
        return float(self.coef[0])

    def linear_predictor(self, X):
        return self.coef[0] + X @ self.coef[1:]

    def _predict(self, X):
        eta = self.linear_predictor(X)
        if self.family == "linear":
            return eta
        if self.family == "log_linear":
            return np.expm1(eta)
        return np.exp(np.clip(eta, -_ETA_CLIP, _ETA_CLIP))


def poisson_deviance(y, mu):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def _fit_poisson(A, y, tol, max_iter):
    if np.any(y < 0):
        raise InvalidHyperparameterError("poisson targets must be nonnegative")
    ybar = y.mean()
    if ybar <= 0:
        raise ConvergenceError("poisson fit needs at least one positive count")
    beta = np.zeros(A.shape[1])
    beta[0] = np.log(ybar)
    eta = A @ beta
    mu = np.exp(eta)
    dev = poisson_deviance(y, mu)
    for it in range(1, max_iter + 1):
        z = eta + (y - mu) / mu
        beta = solve_normal_equations(A, z, weights=mu)
        eta = np.clip(A @ beta, -_ETA_CLIP, _ETA_CLIP)
        mu = np.exp(eta)
        new_dev = poisson_deviance(y, mu)
        if not np.isfinite(new_dev):
            raise ConvergenceError(f"poisson IRLS diverged at iteration {it}")
        if abs(new_dev - dev) / (abs(new_dev) + 0.1) < tol:
            return beta, new_dev, it
        dev = new_dev
    raise ConvergenceError(f"poisson IRLS did not converge in {max_iter} iterations "
                           f"(deviance {dev:.6g})")


def fit_glm(X, y, family="linear", hp=None, seed=None):
    """OLS (``linear``), OLS on ``log(y+1)`` (``log_linear``) or Poisson IRLS.

    Poisson starts from the intercept-only optimum ``log(mean(y))`` and stops
    when the relative deviance change drops below ``tol`` (default 1e-8).
    """
    X, y = check_xy(X, y)
    hp = {"tol": 1e-8, "max_iter": 100, **(hp or {})}
    A = _design(X)
    if family == "linear":
        coef, dev, it = solve_normal_equations(A, y), None, 0
    elif family == "log_linear":
        if np.any(y < 0):
            raise InvalidHyperparameterError("log_linear targets must be nonnegative")
        coef, dev, it = solve_normal_equations(A, np.log1p(y)), None, 0
    elif family == "poisson":
        coef, dev, it = _fit_poisson(A, y, float(hp["tol"]), int(hp["max_iter"]))
    else:
        raise InvalidHyperparameterError(f"unknown GLM family {family!r}")
    return GlmRegressor(family, coef, hp, X.shape[1], dev, it)


def fit_linear(X, y, hp=None, seed=None):
    return fit_glm(X, y, "linear", hp)


def fit_log_linear(X, y, hp=None, seed=None):
    return fit_glm(X, y, "log_linear", hp)


def fit_poisson(X, y, hp=None, seed=None):
    return fit_glm(X, y, "poisson", hp)
