"""Error metrics, k-fold splits, exhaustive grid search and per-cluster model choice."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CemError, EmptyInputError, InvalidKError, SchemaError, SelectionError
from .learners import FAMILIES, fit_regressor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Metrics:
    mae: float
    mse: float
    rmse: float


def compute_metrics(y_true, y_pred):
    """MAE, MSE and RMSE of ``y_pred`` against ``y_true``."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if len(y_true) != len(y_pred):
        raise SchemaError(f"length mismatch: {len(y_true)} vs {len(y_pred)}")
    if len(y_true) == 0:
        raise EmptyInputError("metrics need at least one observation")
    err = y_pred - y_true
    mse = float(np.mean(err * err))
    return Metrics(float(np.mean(np.abs(err))), mse, math.sqrt(mse))


def kfold_split(n, k=5, seed=0):
    """Split ``range(n)`` into ``k`` folds of near-equal size.

    Folds are contiguous blocks of a seeded permutation; the first ``n % k``
    folds get one extra index. Each fold is returned sorted.
    """
    if k < 2:
        raise InvalidKError("k-fold CV needs k >= 2")
    if k > n:
        raise InvalidKError(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class CvResult:
    family: str
    hyperparams: dict
    fold_mse: list
    errors: list = field(default_factory=list)

    @property
    def mean_mse(self):
        return float(np.mean(self.fold_mse))


@dataclass
class GridSearchResult:
    best: CvResult
    results: list  # every combination, in grid order

    @property
    def n_evaluated(self):
        return len(self.results)


def grid_combinations(grid):
    """Cartesian product of ``{name: [values]}`` in key-then-value order."""
    if not grid:
        return [{}]
    keys = list(grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in grid.values()]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def cross_validate(X, y, family, hp, folds, seed=0):
    fold_mse, errors = [], []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        train.sort()
        try:
            model = fit_regressor(family, X[train], y[train], hp, seed=seed)
            pred = model.predict(X[test])
            mse = compute_metrics(y[test], pred).mse
            if not np.isfinite(mse):
                raise CemError("non-finite predictions")
        except (CemError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            errors.append(f"fold {i}: {type(exc).__name__}: {exc}")
            mse = float("inf")
        fold_mse.append(mse)
    return CvResult(family, dict(hp), fold_mse, errors)


def grid_search(X, y, family, grid=None, k=5, seed=0, n_jobs=1):
    """Exhaustive k-fold CV over ``grid``; lowest mean MSE wins, first in grid order on ties.

    A failing fit scores ``inf`` for that fold and is listed in ``errors``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = kfold_split(len(y), k, seed)
    combos = grid_combinations(grid or {})
    if n_jobs and n_jobs > 1 and len(combos) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda hp: cross_validate(X, y, family, hp, folds, seed), combos))
    else:
        results = [cross_validate(X, y, family, hp, folds, seed) for hp in combos]
    for r in results:
        for e in r.errors:
            log.warning("%s %s: %s", family, r.hyperparams, e)
    best = min(range(len(results)), key=lambda i: (results[i].mean_mse, i))
    return GridSearchResult(results[best], results)


@dataclass
class SubmodelSelection:
    family: str
    model: object
    table: dict  # family -> best CvResult
    searches: dict = field(default_factory=dict, repr=False)

    @property
    def cv_result(self):
        return self.table[self.family]


def select_submodel(X, y, families=FAMILIES, grids=None, k=5, seed=0, n_jobs=1):
    """Tune every family by grid search, keep the lowest mean CV MSE, refit it on all rows."""
    if len(y) == 0:
        raise EmptyInputError("cannot select a model for an empty cluster")
    grids = grids or {}
    table, searches = {}, {}
    for fam in families:
        res = grid_search(X, y, fam, grids.get(fam), k=k, seed=seed, n_jobs=n_jobs)
        table[fam] = res.best
        searches[fam] = res
    finite = [f for f in families if np.isfinite(table[f].mean_mse)]
    if not finite:
        raise SelectionError("every candidate family failed cross-validation")
    winner = min(finite, key=lambda f: (table[f].mean_mse, list(families).index(f)))
    model = fit_regressor(winner, X, y, table[winner].hyperparams, seed=seed)
    return SubmodelSelection(winner, model, table, searches)


# ---------------------------------------------------------------------------
# default grids
# ---------------------------------------------------------------------------

# Tuned optima per data subset (columns: airport, downtown, low/moderate/high
# income clusters, all OD pairs), as reported for the Chicago study.
REPORTED_OPTIMA = {
    "cart": {
        "max_features": [40, 50, 10, 10, 20, 20],
        "min_samples_split": [10, 10, 26, 22, 20, 28],
        "ccp_alpha": [0.001, 0.019, 0.019, 0.016, 0.019, 0.004],
    },
    "random_forest": {
        "n_trees": [200, 400, 400, 300, 200, 300],
        "max_features": [6, 8, 6, 6, 8, 8],
    },
    "gbdt": {
        "n_trees": [400, 400, 400, 400, 400, 400],
        "max_features": [6, 8, 6, 8, 6, 8],
        "learning_rate": [0.05, 0.05, 0.05, 0.05, 0.05, 0.04],
        "max_depth": [5, 5, 5, 5, 5, 5],
    },
    "xgb": {
        "n_trees": [400, 400, 400, 400, 400, 400],
        "max_features": [8, 8, 8, 8, 8, 8],
        "learning_rate": [0.04, 0.05, 0.05, 0.05, 0.05, 0.05],
        "max_depth": [5, 5, 5, 5, 5, 5],
    },
    "svr": {"C": [10000] * 6, "kernel": ["rbf"] * 6},
    "nn": {
        "weight_decay": [0.1, 0.0001, 0.0001, 0.5, 0.1, 0.001],
        "n_neurons": [30, 30, 50, 30, 30, 20],
        "learning_rate": [0.1, 0.0005, 0.0001, 0.0001, 0.005, 0.005],
    },
}
REPORTED_SUBSETS = ("airport", "downtown", "low_income", "moderate_income", "high_income", "all")


def reported_optimum(family, subset="all"):
    """Hyperparameters reported as optimal for one family and data subset."""
    col = REPORTED_SUBSETS.index(subset)
    return {k: v[col] for k, v in REPORTED_OPTIMA.get(family, {}).items()}


def default_grid(family):
    """Grid around the all-OD-pairs optimum: that value and its neighbours on the ladder of reported values."""
    out = {}
    for name, values in REPORTED_OPTIMA.get(family, {}).items():
        ladder = sorted(set(values), key=lambda v: (isinstance(v, str), v))
        centre = ladder.index(values[-1])
        out[name] = ladder[max(0, centre - 1) : centre + 2]
    return out


def default_grids(families=FAMILIES):
    return {f: default_grid(f) for f in families}


def reported_grids(families=FAMILIES, subset="all"):
    """Single-point grids at the reported optima (the "reported" preset)."""
    return {f: {k: [v] for k, v in reported_optimum(f, subset).items()} for f in families}
