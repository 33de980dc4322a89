"""The command-line workflow, driven from Python.

generate writes a synthetic OD table, experiment fits everything and
writes the report bundle, predict scores a CSV with the saved model.
Outputs go under a temporary directory.
"""
import tempfile
from pathlib import Path

import yaml

from cem.cli import main

root = Path(tempfile.mkdtemp(prefix="cem-demo-"))
out = ["--output-dir", str(root)]
main(["generate", *out, "--set", "synthetic.n_rows=3000"])
gen = next(root.glob("generate-*"))

cfg = root / "run.yaml"
cfg.write_text(yaml.safe_dump({
    "paths": {"od": str(gen / "synthetic_od.csv"), "schema": str(gen / "schema.yaml")},
    "knowledge": yaml.safe_load((gen / "knowledge.yaml").read_text())["knowledge"],
    "clustering": {"n_seeds": 3, "k_max": 5},
    "models": {"families": ["cart", "linear", "poisson"], "grids": {"cart": {"max_depth": [6]}}},
}))
main(["experiment", "-c", str(cfg), *out])
exp = next(root.glob("experiment-*"))
print("bundle:", sorted(p.name for p in exp.iterdir()))
main(["predict", "-c", str(cfg), *out, "--model", str(exp / "model.pkl"),
      "--input", str(gen / "synthetic_od.csv"), "--output", str(root / "scored.csv")])
print((root / "scored.csv").read_text().splitlines()[:4])
