"""Run configuration: YAML file, then environment overrides, then command-line overrides."""
from __future__ import annotations

import copy
import os
from pathlib import Path

import yaml

from .ensemble import CemConfig
from .errors import ConfigError
from .learners import FAMILIES
from .schema import FeatureSchema, od_schema
from .selection import default_grids, reported_grids
from .synthetic import SyntheticSpec

ENV_OUTPUT_DIR = "CEM_OUTPUT_DIR"
ENV_THREADS = "CEM_THREADS"
PATH_KEYS = ("trips", "centroids", "features", "od", "holidays", "model", "schema")
K_LIMITS = (1, 20)

DEFAULTS = {
    "seed": 0,
    "output_dir": "runs",
    "threads": None,
    "paths": {key: None for key in PATH_KEYS},
    "knowledge": {"airport": [], "downtown": []},
    "clustering": {
        "k_min": 2, "k_max": 7, "n_seeds": 100, "methods": ["kmeans", "gmm"],
        "cluster_on": "train", "columns": None, "max_iter": 300, "tol": 1e-8,
    },
    "models": {"families": list(FAMILIES), "preset": "default", "grids": {}, "cv_folds": 5},
    "split": {"train_fraction": 0.9, "seed": None},
    "prep": {"min_trips": 50, "column_map": None},
    "synthetic": {},
}


def deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key not in ("grids", "knowledge"):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_dotted(doc, dotted, value):
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted!r}: {key!r} is not a section")
    node[keys[-1]] = value


def parse_override(text):
    """``section.key=value`` with a YAML-typed value."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad value in override {text!r}: {exc}") from None
    return key.strip(), value


class RunConfig:
    """Merged, validated configuration for one CLI run."""

    def __init__(self, doc, base_dir="."):
        self.doc = doc
        self.base_dir = Path(base_dir)

    # -- construction -------------------------------------------------------

    @classmethod
    def load(cls, path=None, overrides=(), env=None):
        env = os.environ if env is None else env
        doc = copy.deepcopy(DEFAULTS)
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file {path} not found")
            try:
                with open(path, encoding="utf-8") as fh:
                    loaded = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path} must hold a mapping at top level")
            unknown = set(loaded) - set(DEFAULTS)
            if unknown:
                raise ConfigError(f"unknown config sections: {sorted(unknown)}")
            doc = deep_merge(doc, loaded)
            base_dir = path.parent.resolve()
        if env.get(ENV_OUTPUT_DIR):
            doc["output_dir"] = env[ENV_OUTPUT_DIR]
        if env.get(ENV_THREADS):
            try:
                doc["threads"] = int(env[ENV_THREADS])
            except ValueError:
                raise ConfigError(f"{ENV_THREADS} must be an integer") from None
        for item in overrides:
            key, value = item if isinstance(item, tuple) else parse_override(item)
            set_dotted(doc, key, value)
        return cls(doc, base_dir)

    # -- accessors ----------------------------------------------------------

    @property
    def seed(self):
        return int(self.doc["seed"])

    @property
    def threads(self):
        t = self.doc.get("threads")
        return int(t) if t else (os.cpu_count() or 1)

    @property
    def split_seed(self):
        s = self.doc["split"].get("seed")
        return self.seed if s is None else int(s)

    @property
    def train_fraction(self):
        return float(self.doc["split"]["train_fraction"])

    @property
    def k_range(self):
        c = self.doc["clustering"]
        return tuple(range(int(c["k_min"]), int(c["k_max"]) + 1))

    def path(self, key):
        value = self.doc["paths"].get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self):
        p = Path(self.doc["output_dir"])
        return p if p.is_absolute() else Path.cwd() / p

    def schema(self):
        p = self.path("schema")
        return FeatureSchema.from_yaml(p) if p else od_schema()

    def grids(self):
        m = self.doc["models"]
        families = tuple(m["families"])
        preset = m.get("preset", "default")
        if preset == "reported":
            grids = reported_grids(families)
        elif preset == "default":
            grids = default_grids(families)
        elif preset in (None, "none"):
            grids = {f: {} for f in families}
        else:
            raise ConfigError(f"unknown grid preset {preset!r}")
        grids.update(m.get("grids") or {})
        return grids

    def cem_config(self):
        c, m = self.doc["clustering"], self.doc["models"]
        knowledge = {str(k): [str(t) for t in (v or [])] for k, v in (self.doc["knowledge"] or {}).items()}
        return CemConfig(
            knowledge=knowledge, k_range=self.k_range, n_seeds=int(c["n_seeds"]),
            methods=tuple(c["methods"]), families=tuple(m["families"]), grids=self.grids(),
            cv_folds=int(m["cv_folds"]), seed=self.seed, cluster_on=c["cluster_on"],
            clustering_columns=tuple(c["columns"]) if c.get("columns") else None,
            cluster_max_iter=int(c["max_iter"]), cluster_tol=float(c["tol"]), n_jobs=self.threads,
        )

    def synthetic_spec(self):
        doc = dict(self.doc.get("synthetic") or {})
        doc.setdefault("seed", self.seed)
        return SyntheticSpec.from_dict(doc)

    def resolved(self):
        """The merged config with absolute paths, as echoed into run manifests."""
        out = copy.deepcopy(self.doc)
        out["paths"] = {k: (str(self.path(k)) if self.path(k) else None) for k in self.doc["paths"]}
        out["output_dir"] = str(self.output_dir())
        out["threads"] = self.threads
        return out

    # -- validation ---------------------------------------------------------

    def validate(self, required_paths=()):
        """Check every setting before any data is touched."""
        try:
            self._validate(required_paths)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None
        return self

    def _validate(self, required_paths):
        d = self.doc
        int(d["seed"])
        if d.get("threads") is not None and int(d["threads"]) < 1:
            raise ConfigError("threads must be >= 1")
        tf = self.train_fraction
        if not 0.0 < tf < 1.0:
            raise ConfigError(f"split.train_fraction must lie in (0, 1), got {tf}")
        c = d["clustering"]
        lo, hi = int(c["k_min"]), int(c["k_max"])
        if not (K_LIMITS[0] <= lo <= hi <= K_LIMITS[1]):
            raise ConfigError(f"clustering k range must satisfy 1 <= k_min <= k_max <= 20, got {lo}..{hi}")
        if int(c["n_seeds"]) < 1:
            raise ConfigError("clustering.n_seeds must be >= 1")
        bad = [mth for mth in c["methods"] if mth not in ("kmeans", "gmm")]
        if bad or not c["methods"]:
            raise ConfigError(f"clustering.methods must be a non-empty subset of kmeans, gmm; got {c['methods']}")
        if c["cluster_on"] not in ("train", "full"):
            raise ConfigError("clustering.cluster_on must be 'train' or 'full'")
        m = d["models"]
        bad = [f for f in m["families"] if f not in FAMILIES]
        if bad or not m["families"]:
            raise ConfigError(f"unknown model families {bad}; choose from {list(FAMILIES)}")
        if int(m["cv_folds"]) < 2:
            raise ConfigError("models.cv_folds must be >= 2")
        for fam, grid in (m.get("grids") or {}).items():
            if fam not in FAMILIES or not isinstance(grid, dict):
                raise ConfigError(f"grid for {fam!r} must be a mapping of hyperparameter lists")
        self.grids()
        if not isinstance(d["knowledge"], dict):
            raise ConfigError("knowledge must map cluster labels to tract id lists")
        if int(d["prep"]["min_trips"]) < 1:
            raise ConfigError("prep.min_trips must be >= 1")
        for key in d["paths"]:
            if key not in PATH_KEYS:
                raise ConfigError(f"unknown path key {key!r}")
            p = self.path(key)
            if p is not None and not p.exists():
                raise ConfigError(f"paths.{key} does not exist: {p}")
        for key in required_paths:
            if self.path(key) is None:
                raise ConfigError(f"paths.{key} is required for this command")
        if d.get("synthetic"):
            self.synthetic_spec()
