"""Cluster router plus per-cluster submodels, and the benchmark comparison."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .clustering import METHODS, KnowledgeRules, fit_cluster_model
from .errors import ConfigError, SchemaError
from .learners import DISPLAY_NAMES, FAMILIES, MeanRegressor, fit_regressor
from .schema import fit_normalizer
from .selection import compute_metrics, default_grids, select_submodel

log = logging.getLogger(__name__)


@dataclass
class CemConfig:
    """Everything ``fit_cem`` and ``benchmark_compare`` need besides the data.

    ``knowledge`` maps rule labels to tract ids, in rule order. ``grids=None``
    means the default grids for ``families``.
    """

    knowledge: dict = field(default_factory=dict)
    k_range: tuple = tuple(range(2, 8))
    n_seeds: int = 100
    methods: tuple = METHODS
    families: tuple = FAMILIES
    grids: dict = None
    cv_folds: int = 5
    seed: int = 0
    cluster_on: str = "train"
    clustering_columns: tuple = None
    cluster_max_iter: int = 300
    cluster_tol: float = 1e-8
    n_jobs: int = 1

    def __post_init__(self):
        if self.cluster_on not in ("train", "full"):
            raise ConfigError(f"cluster_on must be 'train' or 'full', got {self.cluster_on!r}")
        self.k_range = tuple(int(k) for k in self.k_range)
        self.families = tuple(self.families)
        self.methods = tuple(self.methods)
        if not self.families:
            raise ConfigError("at least one model family is required")

    def resolved_grids(self):
        grids = default_grids(self.families)
        grids.update(self.grids or {})
        return grids


@dataclass
class CemModel:
    router: object  # ClusterModel
    submodels: dict  # label -> Regressor
    normalizer: object
    provenance: dict  # label -> SubmodelSelection, or None for a mean fallback
    clustering: object = None  # ClusteringSelection
    train_sizes: dict = field(default_factory=dict)
    schema: object = None

    @property
    def labels(self):
        return self.router.labels

    def shares(self):
        total = sum(self.train_sizes.values())
        return {k: (100.0 * v / total if total else 0.0) for k, v in self.train_sizes.items()}

    def route(self, data):
        return self.router.route(data)

    def predict(self, data):
        return predict_cem(self, data)


def _normalized_X(data, normalizer):
    if tuple(data.feature_names) != normalizer.columns:
        raise SchemaError("dataset feature columns do not match the fitted model")
    return normalizer.transform(data.X)


def fit_cem(train, config, full=None):
    """Fit router and per-cluster submodels on ``train``.

    With ``config.cluster_on == "full"`` the normalizer and the data-driven
    clustering see ``full`` (train plus test); submodels still only see train.
    """
    cluster_data = train
    if config.cluster_on == "full":
        if full is None:
            raise ConfigError("cluster_on='full' needs the full dataset")
        cluster_data = full
    normalizer = fit_normalizer(cluster_data)
    rules = KnowledgeRules.from_mapping(config.knowledge)
    router, selection = fit_cluster_model(
        cluster_data, rules, normalizer, clustering_columns=config.clustering_columns,
        k_range=config.k_range, n_seeds=config.n_seeds, methods=config.methods,
        seed=config.seed, max_iter=config.cluster_max_iter, tol=config.cluster_tol,
        n_jobs=config.n_jobs,
    )
    labels = router.route(train)
    X = _normalized_X(train, normalizer)
    y = np.asarray(train.y, dtype=float)
    grids = config.resolved_grids()
    submodels, provenance, sizes = {}, {}, {}
    for label in router.labels:
        idx = np.flatnonzero(labels == label)
        sizes[label] = len(idx)
        if len(idx) < config.cv_folds:
            value = float(y[idx].mean()) if len(idx) else float(y.mean())
            warnings.warn(
                f"cluster {label!r} has {len(idx)} training rows (< {config.cv_folds} folds); "
                "using a constant-mean predictor",
                RuntimeWarning, stacklevel=2,
            )
            submodels[label] = MeanRegressor(value, X.shape[1])
            provenance[label] = None
            continue
        sel = select_submodel(X[idx], y[idx], config.families, grids, k=config.cv_folds,
                              seed=config.seed, n_jobs=config.n_jobs)
        submodels[label] = sel.model
        provenance[label] = sel
        log.info("cluster %s: %d rows (%.2f%%), %s selected (CV MSE %.4g)", label, len(idx),
                 100.0 * len(idx) / len(y), sel.family, sel.cv_result.mean_mse)
    return CemModel(router, submodels, normalizer, provenance, selection, sizes, train.schema)


def predict_cem(model, rows, return_labels=False):
    """Route every row and predict it with its cluster's submodel; input order is kept."""
    labels = model.router.route(rows)
    X = _normalized_X(rows, model.normalizer)
    pred = np.empty(len(rows))
    for label in model.labels:
        idx = np.flatnonzero(labels == label)
        if len(idx):
            pred[idx] = model.submodels[label].predict(X[idx])
    return (pred, labels) if return_labels else pred


def improvement_rate(benchmark, cem):
    """Percentage error reduction of ``cem`` relative to ``benchmark``."""
    if benchmark == 0:
        return 0.0 if cem == 0 else float("nan")
    return (benchmark - cem) / benchmark * 100.0


@dataclass
class GlobalModels:
    """The nine globally trained models, each at its CV-tuned hyperparameters."""

    selection: object  # SubmodelSelection over the whole training set
    models: dict  # family -> fitted Regressor

    @property
    def benchmark_family(self):
        return self.selection.family

    @property
    def benchmark(self):
        return self.models[self.benchmark_family]


def fit_global_models(train, config, normalizer):
    X = _normalized_X(train, normalizer)
    y = np.asarray(train.y, dtype=float)
    sel = select_submodel(X, y, config.families, config.resolved_grids(), k=config.cv_folds,
                          seed=config.seed, n_jobs=config.n_jobs)
    models = {}
    for fam in config.families:
        if fam == sel.family:
            models[fam] = sel.model
        elif np.isfinite(sel.table[fam].mean_mse):
            models[fam] = fit_regressor(fam, X, y, sel.table[fam].hyperparams, seed=config.seed)
    return GlobalModels(sel, models)


@dataclass
class ComparisonReport:
    model_metrics: dict  # display name -> Metrics on test (global models plus "CEM")
    benchmark_family: str
    cluster_table: pd.DataFrame
    overall: dict
    predictions: pd.DataFrame
    cem: CemModel = field(repr=False, default=None)
    globals: GlobalModels = field(repr=False, default=None)
    metadata: dict = field(default_factory=dict)

    @property
    def cem_metrics(self):
        return self.model_metrics["CEM"]

    @property
    def benchmark_metrics(self):
        return self.model_metrics[DISPLAY_NAMES[self.benchmark_family]]

    def benchmark_table(self):
        """Rows = models, columns = test MAE and RMSE."""
        return pd.DataFrame(
            [(name, m.mae, m.rmse) for name, m in self.model_metrics.items()],
            columns=["model", "MAE", "RMSE"],
        )


def _cluster_rows(y, cem_pred, bench_pred, labels, order):
    rows = []
    groups = [(label, labels == label) for label in order]
    groups.append(("All", np.ones(len(y), dtype=bool)))
    for label, mask in groups:
        n = int(mask.sum())
        if n == 0:
            rows.append({"cluster": label, "n_test": 0})
            continue
        c = compute_metrics(y[mask], cem_pred[mask])
        b = compute_metrics(y[mask], bench_pred[mask])
        rows.append({
            "cluster": label, "n_test": n,
            "benchmark_MAE": b.mae, "benchmark_RMSE": b.rmse,
            "CEM_MAE": c.mae, "CEM_RMSE": c.rmse,
            "MAE_improvement_pct": improvement_rate(b.mae, c.mae),
            "RMSE_improvement_pct": improvement_rate(b.rmse, c.rmse),
        })
    return pd.DataFrame(rows)


def benchmark_compare(train, test, config, full=None, cem=None):
    """Fit the global models and the CEM on ``train`` and score both on ``test``.

    The benchmark is the global family with the lowest CV MSE on the whole
    training set. Per-cluster rows group test pairs by their routed label.
    """
    if cem is None:
        cem = fit_cem(train, config, full=full)
    glob = fit_global_models(train, config, cem.normalizer)
    Xt = _normalized_X(test, cem.normalizer)
    y = np.asarray(test.y, dtype=float)
    metrics, preds = {}, {}
    for fam, model in glob.models.items():
        preds[fam] = model.predict(Xt)
        metrics[DISPLAY_NAMES[fam]] = compute_metrics(y, preds[fam])
    cem_pred, labels = predict_cem(cem, test, return_labels=True)
    metrics["CEM"] = compute_metrics(y, cem_pred)
    bench_pred = preds[glob.benchmark_family]
    table = _cluster_rows(y, cem_pred, bench_pred, labels, cem.labels)
    b, c = metrics[DISPLAY_NAMES[glob.benchmark_family]], metrics["CEM"]
    overall = {
        "benchmark": glob.benchmark_family,
        "MAE_improvement_pct": improvement_rate(b.mae, c.mae),
        "RMSE_improvement_pct": improvement_rate(b.rmse, c.rmse),
    }
    predictions = pd.DataFrame({
        "origin": test.origin, "destination": test.destination, "cluster": labels,
        "y_true": y, "y_pred": cem_pred, "y_benchmark": bench_pred,
    })
    meta = {"test_cluster_labels": "routed", "cluster_on": config.cluster_on}
    return ComparisonReport(metrics, glob.benchmark_family, table, overall, predictions, cem, glob, meta)


def train_test_split(data, train_fraction=0.9, seed=0):
    """Seeded random split of rows into ``(train, test)``."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train fraction must lie strictly between 0 and 1")
    n = len(data)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))
