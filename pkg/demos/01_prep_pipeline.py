"""Trip records to an OD-pair table.

Runs the prep pipeline on the 200-trip test fixture and prints what each
cleaning rule removed, then the aggregated OD pairs.
"""
import json
from pathlib import Path

from cem.prep import read_centroids, read_trips, run_pipeline

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

trips = read_trips(FIXTURES / "trips200.csv")
centroids = read_centroids(FIXTURES / "centroids.csv")
print(f"{len(trips)} trips, {len(centroids)} tract centroids")

od, log = run_pipeline(trips, centroids, seed=0, min_trips=50)
print(json.dumps(log, indent=2, sort_keys=True))

cols = ["origin", "destination", "Total_number_trips", "Fare_median", "Miles_median",
        "Seconds_median", "Euclidean_distance"]
print(od[cols].to_string(index=False))

# the 50-trip floor drops the thin pairs; with a floor of 30 they survive
od30, _ = run_pipeline(trips, centroids, seed=0, min_trips=30)
print(f"\npairs kept with floor 50: {len(od)}, with floor 30: {len(od30)}")
