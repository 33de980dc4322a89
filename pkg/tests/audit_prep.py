"""Brute-force audit of OD aggregation using only the standard library.

Shares no code with the package: its own CSV reading, quartiles, medians and
standard deviations, so agreement with the pipeline is an independent check.
"""
import csv
import math
import statistics


def quartile(sorted_vals, q):
    """Linear-interpolation quantile on an ascending list."""
    h = (len(sorted_vals) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo])


def audit(trips_path, centroids_path, min_trips=50):
    with open(centroids_path, newline="", encoding="utf-8") as fh:
        cent = {r["tract"]: (float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)}
    groups = {}
    dropped_filter = 0
    with open(trips_path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            fare, secs, miles = float(r["Fare"]), float(r["Trip Seconds"]), float(r["Trip Miles"])
            if fare == 0 or secs < 60 or miles < 0.25:
                dropped_filter += 1
                continue
            key = (r["Pickup Census Tract"], r["Dropoff Census Tract"])
            groups.setdefault(key, []).append((fare, secs, miles))
    out, removed = {}, {}
    for key, trips in groups.items():
        keep = list(trips)
        if len(trips) > 2:
            for j in (1, 2):  # duration, distance
                vals = sorted(t[j] for t in trips)
                q1, q3 = quartile(vals, 0.25), quartile(vals, 0.75)
                iqr = q3 - q1
                keep = [t for t in keep if q1 - 3 * iqr <= t[j] <= q3 + 3 * iqr]
        removed[key] = len(trips) - len(keep)
        if len(keep) < min_trips:
            continue
        fares = [t[0] for t in keep]
        secs = [t[1] for t in keep]
        miles = [t[2] for t in keep]
        (x0, y0), (x1, y1) = cent[key[0]], cent[key[1]]
        out[key] = {
            "Total_number_trips": len(keep),
            "Fare_median": statistics.median(fares), "Fare_sd": statistics.stdev(fares),
            "Miles_median": statistics.median(miles), "Miles_sd": statistics.stdev(miles),
            "Seconds_median": statistics.median(secs), "Seconds_sd": statistics.stdev(secs),
            "Euclidean_distance": math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2),
        }
    return {"od": out, "outliers_removed": removed, "dropped_by_filter": dropped_filter,
            "pairs_total": len(groups)}


if __name__ == "__main__":
    import sys
    import pprint
    pprint.pprint(audit(sys.argv[1], sys.argv[2]))
