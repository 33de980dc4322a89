from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from audit_prep import audit
from cem.errors import UnknownTractError, UnresolvableCommunityError
from cem.prep import (
    _iqr_keep,
    aggregate_od,
    build_tract_distribution,
    filter_trips,
    join_tract_features,
    read_centroids,
    read_trips,
    remove_od_outliers,
    run_pipeline,
    stratified_assign,
)

FIXTURES = Path(__file__).parent / "fixtures"


def trips_frame(rows):
    """rows of (pickup_comm, pickup_tract, dropoff_comm, dropoff_tract, fare, duration, distance)."""
    cols = ["pickup_community", "pickup_tract", "dropoff_community", "dropoff_tract",
            "fare", "duration", "distance"]
    return pd.DataFrame(rows, columns=cols)


def od_trips(pair_values, metric="distance"):
    rows = []
    for v in pair_values:
        rows.append(("1", "A", "2", "B", 10.0, 600.0 if metric != "duration" else v,
                     v if metric == "distance" else 2.0))
    return trips_frame(rows)


# -- tract distribution --------------------------------------------------------

def test_tract_distribution_shares():
    t = trips_frame([("1", "A", "9", "Z", 5, 600, 1)] * 3 + [("1", "B", "9", "Z", 5, 600, 1)]
                    + [("1", None, "9", "Z", 5, 600, 1)])
    dist = build_tract_distribution(t)
    probs = dist.probabilities("1")
    assert probs == pytest.approx({"A": 0.75, "B": 0.25}, abs=1e-15)
    assert dist.probabilities("9") == {"Z": 1.0}


def test_tract_distribution_unresolvable():
    t = trips_frame([("1", "A", "2", None, 5, 600, 1), ("3", None, "1", "A", 5, 600, 1)])
    with pytest.raises(UnresolvableCommunityError) as info:
        build_tract_distribution(t)
    assert set(info.value.communities) == {"2", "3"}


def test_stratified_assign_identity_and_forced():
    t = trips_frame([("1", "A", "2", "B", 5, 600, 1)] * 4)
    out = stratified_assign(t, build_tract_distribution(t), seed=0)
    pd.testing.assert_frame_equal(out, t)
    t2 = trips_frame([("1", "A", "2", "B", 5, 600, 1), ("1", None, "2", None, 5, 600, 1)])
    out2 = stratified_assign(t2, build_tract_distribution(t2), seed=3)
    assert out2["pickup_tract"].tolist() == ["A", "A"]
    assert out2["dropoff_tract"].tolist() == ["B", "B"]


def test_stratified_assign_law_of_large_numbers():
    base = [("1", "A", "2", "Q", 5, 600, 1)] * 3 + [("1", "B", "2", "Q", 5, 600, 1)]
    todo = [("1", None, "2", "Q", 5, 600, 1)] * 10_000
    t = trips_frame(base + todo)
    dist = build_tract_distribution(t)
    for seed in (0, 1):
        out = stratified_assign(t, dist, seed=seed)
        drawn = out["pickup_tract"].iloc[len(base):]
        share_a = (drawn == "A").mean()
        assert abs(share_a - 0.75) <= 0.02
        counts = [(drawn == "A").sum(), (drawn == "B").sum()]
        assert stats.chisquare(counts, [7500, 2500]).pvalue > 0.001


def test_stratified_assign_deterministic():
    t = trips_frame([("1", "A", "2", "Q", 5, 600, 1), ("1", "B", "2", "Q", 5, 600, 1)]
                    + [("1", None, "2", "Q", 5, 600, 1)] * 50)
    dist = build_tract_distribution(t)
    a = stratified_assign(t, dist, seed=11)
    b = stratified_assign(t, dist, seed=11)
    pd.testing.assert_frame_equal(a, b)


# -- filters and outliers ------------------------------------------------------

def test_filter_examples():
    t = trips_frame([
        ("1", "A", "2", "B", 0.0, 600, 1.0),
        ("1", "A", "2", "B", 5.0, 59, 1.0),
        ("1", "A", "2", "B", 5.0, 300, 0.24),
        ("1", "A", "2", "B", 5.0, 300, 1.0),
        ("1", "A", "2", "B", 5.0, 60, 0.25),
    ])
    out = filter_trips(t)
    assert out[["fare", "duration", "distance"]].values.tolist() == [[5.0, 300, 1.0], [5.0, 60, 0.25]]


def test_holiday_filter():
    import datetime as dt
    t = trips_frame([("1", "A", "2", "B", 5.0, 300, 1.0)] * 2)
    t["date"] = [dt.date(2019, 12, 25), dt.date(2019, 12, 26)]
    out = filter_trips(t, holidays={dt.date(2019, 12, 25)})
    assert out["date"].tolist() == [dt.date(2019, 12, 26)]


def test_outlier_quartile_oracle():
    # Q1 = Q3 = 1, IQR = 0, so 100 is far outside [1, 1]
    out = remove_od_outliers(od_trips([1, 1, 1, 1, 100]))
    assert out["distance"].tolist() == [1, 1, 1, 1]


def test_outlier_identical_and_pairs_untouched():
    assert len(remove_od_outliers(od_trips([3.0] * 7))) == 7
    assert len(remove_od_outliers(od_trips([1.0, 1000.0]))) == 2


def test_outlier_either_metric_removes():
    t = od_trips([2.0] * 6)
    t.loc[2, "duration"] = 99999.0
    out = remove_od_outliers(t)
    assert len(out) == 5 and out["duration"].max() == 600.0


def test_outlier_single_pass_not_idempotent_until_stable_is():
    # removing 1000 tightens the quartiles so 13 becomes an outlier on a second pass
    vals = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 13.0, 1000.0]
    once = remove_od_outliers(od_trips(vals))
    twice = remove_od_outliers(once)
    assert len(once) == 7 and len(twice) == 6
    stable = remove_od_outliers(od_trips(vals), until_stable=True)
    assert len(remove_od_outliers(stable, until_stable=True)) == len(stable) == 6


@given(st.lists(st.floats(0.25, 1e4, allow_nan=False), min_size=1, max_size=40))
def test_until_stable_idempotent(values):
    t = od_trips(values)
    once = remove_od_outliers(t, until_stable=True)
    again = remove_od_outliers(once, until_stable=True)
    assert len(once) == len(again)
    assert len(once) >= min(len(values), 1)


def quartiles_by_hand(v):
    s = sorted(v)
    def q(p):
        h = (len(s) - 1) * p
        lo = int(np.floor(h))
        hi = min(lo + 1, len(s) - 1)
        return s[lo] + (h - lo) * (s[hi] - s[lo])
    return q(0.25), q(0.75)


# quarter-mile steps keep every quartile exactly representable, so both formulas agree bit for bit
@given(st.lists(st.integers(0, 4000).map(lambda i: i / 4), min_size=3, max_size=30))
def test_iqr_rule_matches_hand_quartiles(values):
    v = np.array(values)
    q1, q3 = quartiles_by_hand(values)
    iqr = q3 - q1
    expected = (v >= q1 - 3 * iqr) & (v <= q3 + 3 * iqr)
    np.testing.assert_array_equal(_iqr_keep(v), expected)


# -- aggregation -----------------------------------------------------------------

def test_aggregate_examples():
    cent = {"A": (0.0, 0.0), "B": (3.0, 4.0)}
    rows = [("1", "A", "2", "B", 10.0, 600.0, 2.0)] * 50 + [("2", "B", "1", "A", 10.0, 600.0, 2.0)] * 49
    od = aggregate_od(trips_frame(rows), cent, min_trips=50)
    assert od[["origin", "destination"]].values.tolist() == [["A", "B"]]
    r = od.iloc[0]
    assert r["Total_number_trips"] == 50
    assert r["Fare_median"] == 10.0 and r["Fare_sd"] == 0.0
    assert r["Euclidean_distance"] == 5.0


def test_aggregate_unknown_tract():
    rows = [("1", "A", "2", "Z", 10.0, 600.0, 2.0)] * 3
    with pytest.raises(UnknownTractError):
        aggregate_od(trips_frame(rows), {"A": (0, 0)}, min_trips=1)


@given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from("ABC")), min_size=1, max_size=80),
       st.integers(1, 10))
def test_aggregate_floor_and_count(pairs, min_trips):
    rows = [("1", o, "2", d, 5.0, 600.0, 1.0) for o, d in pairs]
    cent = {"A": (0, 0), "B": (1, 0), "C": (0, 1)}
    od = aggregate_od(trips_frame(rows), cent, min_trips=min_trips)
    assert len(od) <= len(set(pairs))
    assert (od["Total_number_trips"] >= min_trips).all()


def test_pipeline_empty_output_warns(caplog):
    rows = [("1", "A", "2", "B", 10.0, 600.0, 2.0)] * 10
    od, report = run_pipeline(trips_frame(rows), {"A": (0, 0), "B": (1, 1)}, min_trips=50)
    assert len(od) == 0 and report["od_pairs_below_min_trips"] == 1
    assert "no OD pair" in caplog.text


def test_join_tract_features():
    od = pd.DataFrame({"origin": ["A"], "destination": ["B"], "Total_number_trips": [60]})
    feats = pd.DataFrame({"tract": ["A", "B"], "Popden": [1.0, 2.0]})
    out = join_tract_features(od, feats)
    assert out[["Popden_Ori", "Popden_Des"]].values.tolist() == [[1.0, 2.0]]
    with pytest.raises(UnknownTractError):
        join_tract_features(od, feats.iloc[:1])


# -- 200-trip fixture against the independent audit -------------------------------

def test_fixture_matches_independent_audit():
    trips = read_trips(FIXTURES / "trips200.csv")
    cent = read_centroids(FIXTURES / "centroids.csv")
    od, report = run_pipeline(trips, cent, seed=0, min_trips=50)
    expected = audit(FIXTURES / "trips200.csv", FIXTURES / "centroids.csv", min_trips=50)
    assert report["trips_in"] == 200
    assert report["dropped_by_filter"] == expected["dropped_by_filter"]
    assert report["dropped_as_outliers"] == sum(expected["outliers_removed"].values())
    assert report["od_pairs_total"] == expected["pairs_total"]
    got = {(r.origin, r.destination): r for r in od.itertuples(index=False)}
    assert set(got) == set(expected["od"])
    for key, want in expected["od"].items():
        row = got[key]._asdict()
        assert row["Total_number_trips"] == want["Total_number_trips"]
        for col in ("Fare_median", "Miles_median", "Seconds_median", "Euclidean_distance"):
            assert row[col] == want[col], col
        for col in ("Fare_sd", "Miles_sd", "Seconds_sd"):
            assert row[col] == pytest.approx(want[col], rel=1e-12, abs=0), col
