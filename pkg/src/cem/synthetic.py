"""Synthetic OD-pair data with planted clusters that need different regressions.

Cluster centres sit on a regular simplex with pairwise distance
``separation``; features are centre plus unit Gaussian noise. The target is a
Poisson count whose log-mean is linear in the centred features with
cluster-specific coefficients. A fraction of rows touch pseudo airport or
downtown tracts and follow their own coefficients, so knowledge rules can
split them off. Knowledge rows are centred on the origin, the centroid of
the simplex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .schema import DEPENDENT_VARIABLE, Column, FeatureSchema, ODPairDataset

AIRPORT_TRACTS = ("AIRPORT_1", "AIRPORT_2")
DOWNTOWN_TRACTS = tuple(f"DOWNTOWN_{i}" for i in range(1, 6))
IMPEDANCE_COLUMN = "Miles_median"


@dataclass
class SyntheticSpec:
    n_rows: int = 5000
    n_features: int = 4
    n_clusters: int = 3
    coefficients: list = None  # one vector per cluster; drawn when None
    intercepts: list = None
    separation: float = 4.0
    noise: float = 0.1
    knowledge_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if self.separation < 0:
            raise ConfigError("separation must be >= 0")
        if self.n_features < self.n_clusters:
            raise ConfigError("n_features must be >= n_clusters to place the cluster centres")
        if not 0.0 <= self.knowledge_fraction < 1.0:
            raise ConfigError("knowledge_fraction must lie in [0, 1)")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.coefficients is not None:
            coef = np.asarray(self.coefficients, dtype=float)
            if coef.shape != (self.n_clusters, self.n_features):
                raise ConfigError(f"coefficients must have shape ({self.n_clusters}, {self.n_features})")

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown synthetic spec keys: {sorted(extra)}")
        return cls(**doc)


@dataclass
class SyntheticData:
    data: ODPairDataset
    labels: np.ndarray  # planted label per row
    centers: np.ndarray
    coefficients: dict  # label -> coefficient vector
    intercepts: dict
    knowledge: dict = field(default_factory=dict)


def synthetic_schema(n_features):
    cols = [Column("origin", "key"), Column("destination", "key"),
            Column(DEPENDENT_VARIABLE, "dependent"), Column(IMPEDANCE_COLUMN, "travel_impedance")]
    cols += [Column(f"x{j + 1}", "socio_economic") for j in range(n_features)]
    return FeatureSchema(tuple(cols))


def simplex_centers(k, p, separation):
    """``k`` points in R^p with all pairwise distances equal to ``separation``."""
    C = np.zeros((k, p))
    if k > 1:
        C[:, :k] = np.eye(k) - 1.0 / k
        C *= separation / np.sqrt(2.0)
    return C


def _default_coefficients(k, p, rng):
    base = rng.uniform(0.2, 0.5, size=p)
    signs = np.empty((k, p))
    for c in range(k):
        if c % 3 == 0:
            signs[c] = 1.0
        elif c % 3 == 1:
            signs[c] = -1.0
        else:
            signs[c] = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    jitter = rng.uniform(0.8, 1.2, size=(k, p))
    return base * signs * jitter


def knowledge_sets():
    return {"airport": list(AIRPORT_TRACTS), "downtown": list(DOWNTOWN_TRACTS)}


def generate(spec):
    """Draw a dataset from ``spec``; identical specs give identical data.

    With ``noise == 0`` the target is the exact mean ``exp(eta)``, so a
    least-squares fit of ``log(y)`` per cluster returns the planted
    coefficients. Otherwise ``y ~ Poisson(exp(eta + noise * z))``.
    """
    rng = np.random.default_rng(spec.seed)
    k, p, n = spec.n_clusters, spec.n_features, spec.n_rows
    centers = simplex_centers(k, p, spec.separation)
    if spec.coefficients is None:
        coef = _default_coefficients(k, p, rng)
    else:
        coef = np.asarray(spec.coefficients, dtype=float)
    if spec.intercepts is None:
        icpt = np.log(60.0) + 0.4 * np.arange(k)
    else:
        icpt = np.asarray(spec.intercepts, dtype=float)

    n_know = int(round(spec.knowledge_fraction * n))
    n_air = n_know // 3
    n_down = n_know - n_air
    n_data = n - n_know
    data_labels = rng.integers(0, k, size=n_data)
    labels = np.concatenate([
        np.full(n_air, "airport", dtype=object),
        np.full(n_down, "downtown", dtype=object),
        np.array([f"planted_{c + 1}" for c in data_labels], dtype=object),
    ])

    # knowledge rows sit at the simplex centroid (the origin) with their own response
    noise_x = rng.standard_normal((n, p))
    X = noise_x.copy()
    X[n_know:] += centers[data_labels]
    know_coef = {
        "airport": rng.uniform(-0.5, 0.5, size=p),
        "downtown": rng.uniform(-0.5, 0.5, size=p),
    }
    know_icpt = {"airport": np.log(150.0), "downtown": np.log(100.0)}
    eta = np.empty(n)
    eta[:n_air] = know_icpt["airport"] + noise_x[:n_air] @ know_coef["airport"]
    eta[n_air:n_know] = know_icpt["downtown"] + noise_x[n_air:n_know] @ know_coef["downtown"]
    eta[n_know:] = icpt[data_labels] + np.einsum("ij,ij->i", noise_x[n_know:], coef[data_labels])

    if spec.noise == 0:
        y = np.exp(eta)
    else:
        y = rng.poisson(np.exp(eta + spec.noise * rng.standard_normal(n))).astype(float)
    miles = 1.0 + np.abs(rng.normal(0.0, 3.0, size=n))  # carries no signal

    origin = np.empty(n, dtype=object)
    destination = np.empty(n, dtype=object)
    for i in range(n_air):
        origin[i] = AIRPORT_TRACTS[i % 2]
        destination[i] = f"K{i:06d}"
    for i in range(n_air, n_know):
        origin[i] = f"K{i:06d}"
        destination[i] = DOWNTOWN_TRACTS[i % len(DOWNTOWN_TRACTS)]
    m = int(np.ceil(np.sqrt(max(n_data, 1))))
    for j in range(n_data):
        origin[n_know + j] = f"T{j // m:05d}"
        destination[n_know + j] = f"T{j % m:05d}"

    order = rng.permutation(n)
    schema = synthetic_schema(p)
    data = ODPairDataset(schema, origin[order], destination[order],
                         np.column_stack([miles, X])[order], y[order])
    coefs = {f"planted_{c + 1}": coef[c].copy() for c in range(k)}
    coefs.update(know_coef)
    icpts = {f"planted_{c + 1}": float(icpt[c]) for c in range(k)}
    icpts.update({key: float(v) for key, v in know_icpt.items()})
    return SyntheticData(data, labels[order], centers, coefs, icpts, knowledge_sets())
