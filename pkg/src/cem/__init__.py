"""Clustering-aided ensemble models for origin-destination demand.

Knowledge rules and data-driven clustering split OD pairs into clusters; each
cluster gets its own regression model chosen by cross-validated grid search,
and new pairs are routed to their cluster's model.
"""
__version__ = "0.1.0"

from .clustering import (
    ClusterModel,
    KnowledgeRules,
    apply_knowledge_rules,
    davies_bouldin,
    fit_cluster_model,
    fit_gmm,
    fit_kmeans,
    route,
    select_data_clustering,
)
from .ensemble import (
    CemConfig,
    CemModel,
    ComparisonReport,
    benchmark_compare,
    fit_cem,
    improvement_rate,
    predict_cem,
    train_test_split,
)
from .learners import FAMILIES, fit_regressor, load_model, save_model
from .schema import (
    FeatureSchema,
    NormalizationParams,
    ODPairDataset,
    apply_normalizer,
    fit_normalizer,
    load_dataset,
    od_schema,
)
from .selection import compute_metrics, grid_search, kfold_split, select_submodel
from .synthetic import SyntheticSpec, generate
