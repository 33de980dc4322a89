"""End to end: split, fit CEM and the global models, compare on the test set.

Uses a reduced family list and clustering budget so it finishes in about
a minute; the CLI runs the full configuration.
"""
from cem.ensemble import CemConfig, benchmark_compare, train_test_split
from cem.reports import cluster_shares, render_report
from cem.synthetic import SyntheticSpec, generate

synth = generate(SyntheticSpec(n_rows=8000, seed=0))
train, test = train_test_split(synth.data, 0.9, seed=0)
cfg = CemConfig(
    knowledge=synth.knowledge, k_range=range(2, 6), n_seeds=3,
    families=("cart", "gbdt", "linear", "log_linear", "poisson"),
    grids={"cart": {"max_depth": [6, 10]}, "gbdt": {"n_trees": [100], "max_depth": [3]}},
)
report = benchmark_compare(train, test, cfg, full=synth.data)
cem = report.cem
print(f"router: {cem.clustering.method}, k = {cem.clustering.k}; labels {cem.labels}")
for label, sel in cem.provenance.items():
    print(f"  {label:>10}: {sel.family}")
shares = cluster_shares(cem.route(synth.data), synth.data.y, list(cem.labels))
print(render_report(report, shares))
