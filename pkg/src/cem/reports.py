"""Tables emitted by an experiment run: shares, descriptive statistics, CV and comparison tables, histograms."""
from __future__ import annotations

import numpy as np
import pandas as pd

from .learners import DISPLAY_NAMES

HISTOGRAM_BINS = 40
HISTOGRAM_METRICS = ("Fare_median", "Miles_median", "Seconds_median")


def cluster_shares(labels, y, order=None):
    """Number of OD pairs, share (%) and mean demand per cluster, plus an all-pairs row."""
    labels = np.asarray(labels, dtype=object)
    y = np.asarray(y, dtype=float)
    if order is None:
        order = list(dict.fromkeys(labels))
    rows = []
    for i, label in enumerate(order, start=1):
        mask = labels == label
        n = int(mask.sum())
        rows.append({
            "No.": str(i), "Cluster": label, "Number of OD Pairs": n,
            "Share (%)": 100.0 * n / len(y) if len(y) else 0.0,
            "Average Ridesourcing Demand": float(y[mask].mean()) if n else float("nan"),
        })
    rows.append({
        "No.": "-", "Cluster": "Original Dataset", "Number of OD Pairs": len(y),
        "Share (%)": 100.0 if len(y) else 0.0,
        "Average Ridesourcing Demand": float(y.mean()) if len(y) else float("nan"),
    })
    return pd.DataFrame(rows)


def descriptive_stats(data, labels, order=None, drop_suffix="_Des"):
    """Per-cluster mean and SD (ddof 1) of the raw target and features, one row per variable."""
    labels = np.asarray(labels, dtype=object)
    if order is None:
        order = list(dict.fromkeys(labels))
    names = [data.schema.dependent] + [c for c in data.feature_names
                                       if not (drop_suffix and c.endswith(drop_suffix))]
    values = np.column_stack([data.y] + [data.column(c) for c in names[1:]])
    out = pd.DataFrame({"Variable": names})
    for label in order:
        part = values[labels == label]
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = part.mean(axis=0) if len(part) else np.full(len(names), np.nan)
            sd = part.std(axis=0, ddof=1) if len(part) > 1 else np.full(len(names), np.nan)
        out[f"{label} Mean"] = mean
        out[f"{label} SD"] = sd
    return out


def cv_table(cem, global_selection=None):
    """Mean CV MSE of each family's tuned configuration; rows = families, columns = clusters."""
    cols = {}
    families = None
    for label, sel in cem.provenance.items():
        if sel is None:
            continue
        families = families or list(sel.table)
        cols[label] = {f: sel.table[f].mean_mse for f in sel.table}
    if global_selection is not None:
        families = families or list(global_selection.table)
        cols["All Clusters"] = {f: r.mean_mse for f, r in global_selection.table.items()}
    families = families or []
    out = pd.DataFrame({"Model": [DISPLAY_NAMES[f] for f in families]})
    for label, vals in cols.items():
        out[label] = [vals.get(f, np.nan) for f in families]
    return out


def selected_hyperparameters(cem):
    rows = []
    for label, sel in cem.provenance.items():
        if sel is None:
            rows.append({"cluster": label, "family": "mean", "hyperparameters": "{}"})
        else:
            rows.append({"cluster": label, "family": sel.family,
                         "hyperparameters": repr(sel.cv_result.hyperparams)})
    return pd.DataFrame(rows)


def histograms(data, labels, metrics=HISTOGRAM_METRICS, bins=HISTOGRAM_BINS, order=None):
    """Equal-width bin counts per cluster over each metric's pooled range (long format)."""
    labels = np.asarray(labels, dtype=object)
    if order is None:
        order = list(dict.fromkeys(labels))
    rows = []
    for metric in metrics:
        if metric not in data.feature_names:
            continue
        v = data.column(metric)
        lo, hi = float(v.min()), float(v.max())
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
        for label in order:
            counts, _ = np.histogram(v[labels == label], bins=edges)
            for b in range(bins):
                rows.append((metric, label, b, edges[b], edges[b + 1], int(counts[b])))
    return pd.DataFrame(rows, columns=["metric", "cluster", "bin", "left", "right", "count"])


def dbi_table(selection):
    if selection is None:
        return pd.DataFrame(columns=["method", "k", "mean_dbi", "valid_runs"])
    return pd.DataFrame(selection.dbi_table(), columns=["method", "k", "mean_dbi", "valid_runs"])


def _fmt(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else f"{v:.2f}"
    return str(v)


def text_table(df, title=None):
    """Fixed-width rendering of a DataFrame."""
    cells = [list(map(str, df.columns))] + [[_fmt(v) for v in row] for row in df.itertuples(index=False)]
    widths = [max(len(r[j]) for r in cells) for j in range(len(df.columns))]
    lines = []
    if title:
        lines.append(title)
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    lines.append(rule)
    for i, r in enumerate(cells):
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if i == 0:
            lines.append(rule)
    lines.append(rule)
    return "\n".join(lines)


def render_report(report, shares):
    parts = [
        text_table(shares, "Cluster-specific proportion of OD pairs and average demand"),
        text_table(report.benchmark_table(), "Test performance of the global models and CEM"),
        text_table(report.cluster_table, f"CEM against the best benchmark ({DISPLAY_NAMES[report.benchmark_family]})"),
        "Per-cluster test metrics use routed cluster labels.",
    ]
    return "\n\n".join(parts) + "\n"
