"""The nine regression families behind one ``fit(X, y, hp, seed)`` contract."""
from __future__ import annotations

import pickle

from ..errors import DataError, InvalidHyperparameterError
from .base import MeanRegressor, Regressor, fit_mean
from .glm import GlmRegressor, fit_glm, fit_linear, fit_log_linear, fit_poisson
from .nn import NeuralNetRegressor, fit_nn
from .svr import SvrRegressor, fit_svr
from .trees import (
    BoostedTreesRegressor,
    CartRegressor,
    RandomForestRegressor,
    Tree,
    fit_cart,
    fit_gbdt,
    fit_random_forest,
    fit_xgb,
    grow_tree,
)

FITTERS = {
    "cart": fit_cart,
    "random_forest": fit_random_forest,
    "gbdt": fit_gbdt,
    "xgb": fit_xgb,
    "svr": fit_svr,
    "nn": fit_nn,
    "linear": fit_linear,
    "log_linear": fit_log_linear,
    "poisson": fit_poisson,
}
FAMILIES = tuple(FITTERS)

# row labels used in the model-comparison tables
DISPLAY_NAMES = {
    "cart": "DT",
    "random_forest": "RF",
    "gbdt": "GBDT",
    "xgb": "XGBoost",
    "svr": "SVM",
    "nn": "ANN",
    "linear": "LR",
    "log_linear": "Log-LR",
    "poisson": "Poisson",
    "mean": "Mean",
}


def fit_regressor(family, X, y, hp=None, seed=0):
    try:
        fitter = FITTERS[family]
    except KeyError:
        raise InvalidHyperparameterError(f"unknown model family {family!r}") from None
    return fitter(X, y, hp, seed=seed)


def predict(model, X):
    return model.predict(X)


MODEL_FORMAT = "cem-model"
MODEL_VERSION = 1


def save_model(obj, path, kind=None):
    """Pickle ``obj`` inside a versioned envelope (format tag, family, hyperparameters)."""
    envelope = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": kind or type(obj).__name__,
        "family": getattr(obj, "family", None),
        "hyperparams": getattr(obj, "hyperparams", None),
        "payload": obj,
    }
    with open(path, "wb") as fh:
        pickle.dump(envelope, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_model(path):
    with open(path, "rb") as fh:
        envelope = pickle.load(fh)
    if not isinstance(envelope, dict) or envelope.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a saved model")
    if envelope["version"] > MODEL_VERSION:
        raise DataError(f"model format version {envelope['version']} is newer than supported")
    return envelope["payload"]


__all__ = [
    "FAMILIES", "FITTERS", "DISPLAY_NAMES", "Regressor", "MeanRegressor", "CartRegressor",
    "RandomForestRegressor", "BoostedTreesRegressor", "SvrRegressor", "NeuralNetRegressor",
    "GlmRegressor", "Tree", "grow_tree", "fit_regressor", "predict", "fit_cart",
    "fit_random_forest", "fit_gbdt", "fit_xgb", "fit_svr", "fit_nn", "fit_glm", "fit_linear",
    "fit_log_linear", "fit_poisson", "fit_mean", "save_model", "load_model",
]
