"""Variable schema, OD-pair datasets, CSV ingestion and min-max scaling."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import DuplicateKeyError, EmptyInputError, ParseError, SchemaError

ROLES = (
    "key",
    "dependent",
    "travel_impedance",
    "socio_economic",
    "built_environment",
    "transit_supply",
)
# roles that feed data-driven clustering
CLUSTERING_ROLES = ("socio_economic", "built_environment", "transit_supply")

# Variable codes of the ridesourcing study, grouped by role. Tract-level codes
# get _Ori/_Des suffixes when expanded into an OD schema.
TRAVEL_IMPEDANCE_VARIABLES = (
    "Fare_median",
    "Fare_sd",
    "Miles_median",
    "Miles_sd",
    "Seconds_median",
    "Seconds_sd",
)
PAIR_SOCIO_ECONOMIC_VARIABLES = ("Commuters_HW", "Commuters_WH")
TRACT_VARIABLES = {
    "socio_economic": (
        "Pcttransit", "Pctmidinc", "Pctmale", "Pctsinfam", "Pctmodinc",
        "Pctyoung", "Pctwhite", "Pcthisp", "Pctcarown", "Pctrentocc",
        "Pctasian", "Pctlowinc", "CrimeDen", "PctWacWorker54",
        "PctWacLowMidWage", "PctWacBachelor",
    ),
    "built_environment": (
        "Popden", "IntersDen", "EmpDen", "EmpRetailDen", "Walkscore", "RdNetwkDen",
    ),
    "transit_supply": (
        "SerHourBusRoutes", "SerHourRailRoutes", "PctBusBuf", "PctRailBuf",
        "BusStopDen", "RailStationDen",
    ),
}
DEPENDENT_VARIABLE = "Total_number_trips"


@dataclass(frozen=True)
class Column:
    name: str
    role: str


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered, role-tagged column list.

    The two ``key`` columns identify the origin and destination tracts (in
    that order), exactly one column is the ``dependent`` trip count, and every
    remaining column is a numeric feature.
    """

    columns: tuple

    def __post_init__(self):
        cols = tuple(c if isinstance(c, Column) else Column(*c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        names = [c.name for c in cols]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate column names: {dupes}")
        for c in cols:
            if c.role not in ROLES:
                raise SchemaError(f"column {c.name!r} has unknown role {c.role!r}")
        n_dep = sum(c.role == "dependent" for c in cols)
        if n_dep != 1:
            raise SchemaError(f"schema needs exactly one dependent column, got {n_dep}")
        n_key = sum(c.role == "key" for c in cols)
        if n_key != 2:
            raise SchemaError(f"schema needs origin and destination key columns, got {n_key}")

    @property
    def names(self):
        return [c.name for c in self.columns]

    @property
    def key_columns(self):
        return [c.name for c in self.columns if c.role == "key"]

    @property
    def dependent(self):
        return next(c.name for c in self.columns if c.role == "dependent")

    @property
    def feature_columns(self):
        """Non-key, non-dependent columns in schema order."""
        return [c.name for c in self.columns if c.role not in ("key", "dependent")]

    @property
    def clustering_columns(self):
        return self.columns_with_roles(CLUSTERING_ROLES)

    def columns_with_roles(self, roles):
        if isinstance(roles, str):
            roles = (roles,)
        return [c.name for c in self.columns if c.role in roles]

    def role(self, name):
        for c in self.columns:
            if c.name == name:
                return c.role
        raise SchemaError(f"unknown column {name!r}")

    @classmethod
    def from_dict(cls, doc):
        """Build from ``{"columns": [{"name": .., "role": ..}, ...]}``.

        A role-keyed mapping ``{"key": [...], "dependent": "...", ...}`` is
        accepted too; columns are then ordered key, dependent, then the other
        roles in the order given.
        """
        if "columns" in doc:
            cols = []
            for entry in doc["columns"]:
                if isinstance(entry, dict):
                    cols.append(Column(str(entry["name"]), str(entry["role"])))
                else:
                    name, role = entry
                    cols.append(Column(str(name), str(role)))
            return cls(tuple(cols))
        cols = []
        for role, names in doc.items():
            if isinstance(names, str):
                names = [names]
            cols.extend(Column(str(n), role) for n in names)
        cols.sort(key=lambda c: (c.role != "key", c.role != "dependent"))
        return cls(tuple(cols))

    @classmethod
    def from_yaml(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        if "schema" in doc:
            doc = doc["schema"]
        return cls.from_dict(doc)

    def to_dict(self):
        return {"columns": [{"name": c.name, "role": c.role} for c in self.columns]}


def od_schema(
    tract_variables=None,
    pair_variables=PAIR_SOCIO_ECONOMIC_VARIABLES,
    travel_impedance=TRAVEL_IMPEDANCE_VARIABLES + ("Euclidean_distance",),
    origin="origin",
    destination="destination",
    dependent=DEPENDENT_VARIABLE,
):
    """Expand tract-level variable codes into an OD schema (``_Ori``/``_Des``)."""
    if tract_variables is None:
        tract_variables = TRACT_VARIABLES
    cols = [Column(origin, "key"), Column(destination, "key"), Column(dependent, "dependent")]
    cols += [Column(name, "travel_impedance") for name in travel_impedance]
    cols += [Column(name, "socio_economic") for name in pair_variables]
    for role, names in tract_variables.items():
        for name in names:
            cols.append(Column(f"{name}_Ori", role))
            cols.append(Column(f"{name}_Des", role))
    return FeatureSchema(tuple(cols))


@dataclass(frozen=True)
class ODPairDataset:
    """OD-pair rows: tract keys, a feature matrix and the trip-count target.

    ``X`` holds the schema's feature columns in schema order.
    """

    schema: FeatureSchema
    origin: np.ndarray
    destination: np.ndarray
    X: np.ndarray
    y: np.ndarray
    _validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=object)
        destination = np.asarray(self.destination, dtype=object)
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        n_feat = len(self.schema.feature_columns)
        if X.ndim == 1 and n_feat == 0:
            X = X.reshape(len(y), 0)
        for name, arr in (("origin", origin), ("destination", destination), ("y", y)):
            if arr.ndim != 1 or len(arr) != len(X):
                raise SchemaError(f"{name} length {len(arr)} does not match {len(X)} rows")
        if X.ndim != 2 or X.shape[1] != n_feat:
            raise SchemaError(f"feature matrix has shape {X.shape}, schema expects {n_feat} columns")
        for name, arr in (("origin", origin), ("destination", destination), ("X", X), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self._validate:
            if np.any(y < 0) or np.any(~np.isfinite(y)):
                bad = int(np.flatnonzero((y < 0) | ~np.isfinite(y))[0])
                raise SchemaError(f"target must be a nonnegative count (row {bad})")
            keys = pd.MultiIndex.from_arrays([origin, destination])
            if keys.has_duplicates:
                dup = keys[keys.duplicated()][0]
                raise DuplicateKeyError(f"duplicate OD pair {dup}")

    def __len__(self):
        return len(self.y)

    @property
    def feature_names(self):
        return self.schema.feature_columns

    def column(self, name):
        if name == self.schema.dependent:
            return self.y
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature column {name!r}") from None
        return self.X[:, j]

    def features(self, columns):
        idx = [self._index(c) for c in columns]
        return self.X[:, idx]

    def _index(self, name):
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SchemaError(f"missing column {name!r}") from None

    def subset(self, idx):
        idx = np.asarray(idx)
        return ODPairDataset(
            self.schema, self.origin[idx], self.destination[idx], self.X[idx], self.y[idx],
            _validate=False,
        )

    def with_features(self, X):
        return ODPairDataset(self.schema, self.origin, self.destination, X, self.y, _validate=False)

    def to_frame(self):
        o, d = self.schema.key_columns
        df = pd.DataFrame(self.X, columns=self.feature_names)
        df.insert(0, d, self.destination)
        df.insert(0, o, self.origin)
        df[self.schema.dependent] = self.y
        return df[self.schema.names]

    @classmethod
    def from_frame(cls, df, schema):
        missing = [n for n in schema.names if n not in df.columns]
        if missing:
            raise SchemaError(f"missing column {missing[0]!r}")
        o, d = schema.key_columns
        values = {}
        for name in schema.feature_columns + [schema.dependent]:
            values[name] = _numeric_column(df[name], name)
        X = (np.column_stack([values[n] for n in schema.feature_columns])
             if schema.feature_columns else np.empty((len(df), 0)))
        return cls(
            schema,
            df[o].astype(str).to_numpy(dtype=object),
            df[d].astype(str).to_numpy(dtype=object),
            X,
            values[schema.dependent],
        )


def _numeric_column(series, name):
    converted = pd.to_numeric(series, errors="coerce")
    bad = converted.isna() & ~series.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(
            f"non-numeric value {series.iloc[row]!r} in column {name!r} at row {row}",
            row=row, column=name,
        )
    if converted.isna().any():
        row = int(np.flatnonzero(converted.isna().to_numpy())[0])
        raise ParseError(f"missing value in column {name!r} at row {row}", row=row, column=name)
    return converted.to_numpy(dtype=float)


def load_dataset(path, schema):
    """Read an OD-pair CSV; the header must contain every schema column."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""], encoding="utf-8")
    return ODPairDataset.from_frame(df, schema)


def save_dataset(data, path):
    data.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class NormalizationParams:
    columns: tuple
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        mins = np.asarray(self.mins, dtype=float)
        maxs = np.asarray(self.maxs, dtype=float)
        if mins.shape != (len(self.columns),) or maxs.shape != mins.shape:
            raise SchemaError("normalization bounds do not match column count")
        if np.any(maxs < mins):
            raise SchemaError("normalization max below min")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def constant(self):
        return self.maxs == self.mins

    def transform(self, X, columns=None):
        """Scale a raw matrix whose columns are ``columns`` (default: all)."""
        X = np.asarray(X, dtype=float)
        idx = self._indices(columns, X.shape[1])
        lo, hi = self.mins[idx], self.maxs[idx]
        span = hi - lo
        const = span == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            Z = (X - lo) / np.where(const, 1.0, span)
        Z = np.clip(Z, 0.0, 1.0)
        Z[:, const] = 0.0
        return Z

    def inverse_transform(self, Z, columns=None):
        Z = np.asarray(Z, dtype=float)
        idx = self._indices(columns, Z.shape[1])
        return self.mins[idx] + Z * (self.maxs[idx] - self.mins[idx])

    def _indices(self, columns, width):
        if columns is None:
            columns = self.columns
        if len(columns) != width:
            raise SchemaError(f"matrix has {width} columns, expected {len(columns)}")
        try:
            return [self.columns.index(c) for c in columns]
        except ValueError as exc:
            raise SchemaError(f"column not covered by normalizer: {exc}") from None

    def to_dict(self):
        return {"columns": list(self.columns), "mins": self.mins.tolist(), "maxs": self.maxs.tolist()}


def fit_normalizer(data, columns=None):
    """Column-wise min/max over ``data`` (default: every feature column)."""
    if len(data) == 0:
        raise EmptyInputError("cannot fit a normalizer on an empty dataset")
    if columns is None:
        columns = data.feature_names
    X = data.features(columns)
    return NormalizationParams(tuple(columns), X.min(axis=0), X.max(axis=0))


def apply_normalizer(data, params):
    """Return a copy of ``data`` with the normalizer's columns scaled to [0, 1]."""
    missing = [c for c in params.columns if c not in data.feature_names]
    if missing:
        raise SchemaError(f"dataset lacks normalized column {missing[0]!r}")
    idx = [data.feature_names.index(c) for c in params.columns]
    X = np.array(data.X, dtype=float)
    X[:, idx] = params.transform(X[:, idx], params.columns)
    return data.with_features(X)


def denormalize(data, params):
    idx = [data.feature_names.index(c) for c in params.columns]
    X = np.array(data.X, dtype=float)
    X[:, idx] = params.inverse_transform(X[:, idx], params.columns)
    return data.with_features(X)
