"""Trip-level preprocessing: from raw ridesourcing trips to OD-pair aggregates.

Trips are carried as a :class:`pandas.DataFrame` with the columns below; the
``*_tract`` columns are null for endpoints the source only reports at
community granularity.

=================  =========================================================
pickup_community   community area of the pick-up
pickup_tract       census tract of the pick-up (null: community-level only)
dropoff_community  community area of the drop-off
dropoff_tract      census tract of the drop-off (null: community-level only)
fare               trip fare in dollars
duration           trip duration in seconds
distance           trip distance in miles
date               optional; trip date, used for holiday filtering
=================  =========================================================
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError, UnknownTractError, UnresolvableCommunityError

log = logging.getLogger(__name__)

TRIP_COLUMNS = (
    "pickup_community", "pickup_tract", "dropoff_community", "dropoff_tract",
    "fare", "duration", "distance",
)
ENDPOINTS = ("pickup", "dropoff")

# Chicago Data Portal "Transportation Network Providers - Trips" export headers.
CHICAGO_COLUMN_MAP = {
    "Pickup Community Area": "pickup_community",
    "Pickup Census Tract": "pickup_tract",
    "Dropoff Community Area": "dropoff_community",
    "Dropoff Census Tract": "dropoff_tract",
    "Fare": "fare",
    "Trip Seconds": "duration",
    "Trip Miles": "distance",
    "Trip Start Timestamp": "date",
}

MIN_FARE = 0.0  # fares equal to this are dropped
MIN_DURATION = 60.0
MIN_DISTANCE = 0.25
IQR_MULTIPLIER = 3.0
OUTLIER_METRICS = ("distance", "duration")

AGGREGATE_COLUMNS = {
    "fare": ("Fare_median", "Fare_sd"),
    "distance": ("Miles_median", "Miles_sd"),
    "duration": ("Seconds_median", "Seconds_sd"),
}
COUNT_COLUMN = "Total_number_trips"
CENTROID_DISTANCE_COLUMN = "Euclidean_distance"


def _key(value):
    """Canonical string form for tract/community ids (``17031081500.0`` -> ``17031081500``)."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    if isinstance(value, (float, np.floating)) and float(value).is_integer():
        return str(int(value))
    s = str(value).strip()
    if s == "" or s.lower() == "nan":
        return None
    if s.endswith(".0") and s[:-2].isdigit():
        s = s[:-2]
    return s


def normalize_trips(df, column_map=None):
    """Rename source columns and coerce types into the trip-frame contract."""
    if column_map:
        df = df.rename(columns=column_map)
    missing = [c for c in TRIP_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"trip data missing column {missing[0]!r}")
    out = pd.DataFrame(index=range(len(df)))
    for end in ENDPOINTS:
        out[f"{end}_community"] = [_key(v) for v in df[f"{end}_community"]]
        out[f"{end}_tract"] = [_key(v) for v in df[f"{end}_tract"]]
    for col in ("fare", "duration", "distance"):
        vals = pd.to_numeric(df[col].reset_index(drop=True), errors="coerce")
        if vals.isna().any():
            row = int(np.flatnonzero(vals.isna().to_numpy())[0])
            raise DataError(f"bad {col} value {df[col].iloc[row]!r} at trip row {row}")
        if (vals < 0).any():
            row = int(np.flatnonzero((vals < 0).to_numpy())[0])
            raise DataError(f"negative {col} at trip row {row}")
        out[col] = vals.to_numpy(dtype=float)
    if "date" in df.columns:
        out["date"] = pd.to_datetime(df["date"].reset_index(drop=True), errors="coerce").dt.date
    return out


def read_trips(path, column_map=None):
    df = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""])
    if column_map is None and "Trip Seconds" in df.columns:
        column_map = CHICAGO_COLUMN_MAP
    return normalize_trips(df, column_map)


def read_centroids(path):
    """Centroid CSV with columns ``tract, x, y`` (planar coordinates)."""
    df = pd.read_csv(path, dtype=str)
    cols = list(df.columns)
    if len(cols) < 3:
        raise SchemaError("centroid file needs tract id, x and y columns")
    out = {}
    for tract, x, y in zip(df[cols[0]], df[cols[1]], df[cols[2]]):
        out[_key(tract)] = (float(x), float(y))
    return out


def read_holidays(path):
    with open(path, encoding="utf-8") as fh:
        days = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    return set(pd.to_datetime(days).date)


@dataclass(frozen=True)
class TractDistribution:
    """Observed tract shares per community: ``{community: (tracts, probabilities)}``."""

    shares: dict = field(default_factory=dict)

    def __post_init__(self):
        for community, (tracts, probs) in self.shares.items():
            probs = np.asarray(probs, dtype=float)
            if len(tracts) != len(probs) or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
                raise DataError(f"invalid tract distribution for community {community!r}")

    def probabilities(self, community):
        tracts, probs = self.shares[community]
        return dict(zip(tracts, probs))

    def __contains__(self, community):
        return community in self.shares


def build_tract_distribution(trips):
    """Tract shares per community from tract-level endpoints (pick-ups and drop-offs pooled)."""
    counts = {}
    needed = set()
    for end in ENDPOINTS:
        comm = trips[f"{end}_community"]
        tract = trips[f"{end}_tract"]
        known = tract.notna()
        for (c, t), n in pd.DataFrame({"c": comm[known], "t": tract[known]}).value_counts().items():
            counts.setdefault(c, {}).setdefault(t, 0)
            counts[c][t] += int(n)
        needed.update(comm[~known].dropna())
    unresolved = needed - set(counts)
    if unresolved:
        raise UnresolvableCommunityError(unresolved)
    shares = {}
    for c in sorted(counts, key=str):
        tracts = sorted(counts[c], key=str)
        n = np.array([counts[c][t] for t in tracts], dtype=float)
        shares[c] = (tuple(tracts), n / n.sum())
    return TractDistribution(shares)


def stratified_assign(trips, dist, seed):
    """Fill community-level endpoints with tracts drawn from ``dist``.

    Draws go endpoint by endpoint (pick-up first), communities in sorted
    order, rows in frame order, from a single generator seeded by ``seed``.
    """
    rng = np.random.default_rng(seed)
    out = trips.copy()
    for end in ENDPOINTS:
        tract = out[f"{end}_tract"].to_numpy(dtype=object).copy()
        comm = out[f"{end}_community"].to_numpy(dtype=object)
        todo = pd.isna(pd.Series(tract)).to_numpy()
        if not todo.any():
            continue
        missing = {c for c in comm[todo] if c not in dist}
        if missing:
            raise UnresolvableCommunityError(missing)
        for c in sorted(set(comm[todo]), key=str):
            rows = np.flatnonzero(todo & (comm == c))
            tracts, probs = dist.shares[c]
            picks = rng.choice(len(tracts), size=len(rows), p=probs)
            tract[rows] = np.asarray(tracts, dtype=object)[picks]
        out[f"{end}_tract"] = tract
    return out


def filter_trips(trips, holidays=None):
    """Drop zero-fare, sub-minute and sub-quarter-mile trips (and listed holidays)."""
    keep = (trips["fare"] != MIN_FARE) & (trips["duration"] >= MIN_DURATION) & (
        trips["distance"] >= MIN_DISTANCE
    )
    if holidays and "date" in trips.columns:
        keep &= ~trips["date"].isin(holidays)
    return trips[keep.to_numpy()].reset_index(drop=True)


def _iqr_keep(values):
    if len(values) <= 2:
        return np.ones(len(values), dtype=bool)
    q1, q3 = np.percentile(values, [25, 75])  # linear interpolation ("type 7")
    iqr = q3 - q1
    return (values >= q1 - IQR_MULTIPLIER * iqr) & (values <= q3 + IQR_MULTIPLIER * iqr)


def outlier_mask(trips):
    """Boolean keep-mask of the per-OD 3-IQR rule on distance and duration."""
    keep = np.ones(len(trips), dtype=bool)
    groups = trips.groupby(["pickup_tract", "dropoff_tract"], sort=False).indices
    for rows in groups.values():
        ok = np.ones(len(rows), dtype=bool)
        for metric in OUTLIER_METRICS:
            ok &= _iqr_keep(trips[metric].to_numpy()[rows])
        keep[rows] = ok
    return keep


def remove_od_outliers(trips, until_stable=False):
    """Drop trips whose distance or duration lies beyond 3 IQR of their OD group.

    A single pass is the default. Removing points moves the quartiles, so a
    second pass can flag new trips; ``until_stable=True`` repeats the rule
    until nothing changes.
    """
    while True:
        keep = outlier_mask(trips)
        trips = trips[keep].reset_index(drop=True)
        if not until_stable or keep.all():
            return trips


def aggregate_od(trips, centroids, min_trips=50):
    """Per-OD count, median/sd of fare, distance and duration, and centroid distance.

    Pairs with fewer than ``min_trips`` trips are dropped. Standard deviations
    use the n-1 denominator (0 for single-trip pairs).
    """
    grouped = trips.groupby(["pickup_tract", "dropoff_tract"], sort=True)
    agg = grouped.agg(
        **{COUNT_COLUMN: ("fare", "size")},
        **{med: (src, "median") for src, (med, _) in AGGREGATE_COLUMNS.items()},
        **{sd: (src, "std") for src, (_, sd) in AGGREGATE_COLUMNS.items()},
    ).reset_index()
    agg = agg[agg[COUNT_COLUMN] >= min_trips].reset_index(drop=True)
    sd_cols = [sd for _, sd in AGGREGATE_COLUMNS.values()]
    agg[sd_cols] = agg[sd_cols].fillna(0.0)
    dist = np.empty(len(agg))
    for i, (o, d) in enumerate(zip(agg["pickup_tract"], agg["dropoff_tract"])):
        for t in (o, d):
            if t not in centroids:
                raise UnknownTractError(f"no centroid for tract {t!r}")
        (x0, y0), (x1, y1) = centroids[o], centroids[d]
        dist[i] = float(np.hypot(x1 - x0, y1 - y0))
    agg[CENTROID_DISTANCE_COLUMN] = dist
    agg = agg.rename(columns={"pickup_tract": "origin", "dropoff_tract": "destination"})
    order = ["origin", "destination", COUNT_COLUMN]
    order += [c for pair in AGGREGATE_COLUMNS.values() for c in pair] + [CENTROID_DISTANCE_COLUMN]
    return agg[order]


def join_tract_features(od, features, tract_column=None):
    """Attach tract-level features to both ends with ``_Ori``/``_Des`` suffixes."""
    tract_column = tract_column or features.columns[0]
    feats = features.copy()
    feats[tract_column] = [_key(v) for v in feats[tract_column]]
    value_cols = [c for c in feats.columns if c != tract_column]
    ori = feats.rename(columns={c: f"{c}_Ori" for c in value_cols})
    des = feats.rename(columns={c: f"{c}_Des" for c in value_cols})
    out = od.merge(ori, left_on="origin", right_on=tract_column, how="left").drop(columns=tract_column)
    out = out.merge(des, left_on="destination", right_on=tract_column, how="left").drop(columns=tract_column)
    lacking = out[[f"{c}_Ori" for c in value_cols] + [f"{c}_Des" for c in value_cols]].isna().any(axis=1)
    if lacking.any():
        row = out[lacking].iloc[0]
        raise UnknownTractError(f"no features for OD pair ({row['origin']}, {row['destination']})")
    return out


def run_pipeline(trips, centroids, seed=0, min_trips=50, holidays=None):
    """Full prep: stratified assignment, filtering, outliers, aggregation.

    Returns ``(od_frame, log)`` where ``log`` counts the rows each rule removed.
    """
    report = {"trips_in": int(len(trips))}
    needs_assignment = trips["pickup_tract"].isna() | trips["dropoff_tract"].isna()
    report["endpoints_assigned"] = int(
        trips["pickup_tract"].isna().sum() + trips["dropoff_tract"].isna().sum()
    )
    if needs_assignment.any():
        trips = stratified_assign(trips, build_tract_distribution(trips), seed)
    n = len(trips)
    trips = filter_trips(trips, holidays)
    report["dropped_by_filter"] = n - len(trips)
    n = len(trips)
    trips = remove_od_outliers(trips)
    report["dropped_as_outliers"] = n - len(trips)
    all_pairs = trips.groupby(["pickup_tract", "dropoff_tract"]).ngroups
    od = aggregate_od(trips, centroids, min_trips=min_trips)
    report["od_pairs_total"] = int(all_pairs)
    report["od_pairs_below_min_trips"] = int(all_pairs - len(od))
    report["od_pairs_out"] = int(len(od))
    if len(od) == 0:
        log.warning("no OD pair reached %d trips; output is empty", min_trips)
    return od, report
