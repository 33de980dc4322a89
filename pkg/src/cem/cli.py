"""Command-line front end: ``cem prep | generate | experiment | predict``."""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import pandas as pd
import yaml

from . import __version__
from .config import RunConfig
from .ensemble import benchmark_compare, predict_cem, train_test_split
from .errors import CemError, ConfigError, ConvergenceError, DataError, SelectionError
from .learners import load_model, save_model
from .prep import join_tract_features, read_centroids, read_holidays, read_trips, run_pipeline
from .reports import (
    cluster_shares,
    cv_table,
    dbi_table,
    descriptive_stats,
    histograms,
    render_report,
    selected_hyperparameters,
)
from .schema import load_dataset, save_dataset
from .synthetic import generate

log = logging.getLogger("cem")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3, 4
REPORT_FILES = (
    "cluster_shares.csv",
    "descriptive_stats.csv",
    "cv_table.csv",
    "benchmark_comparison.csv",
    "cluster_comparison.csv",
    "histograms.csv",
)
CSV_FLOAT = "%.10g"


# ---------------------------------------------------------------------------
# run directories and manifests
# ---------------------------------------------------------------------------


def make_run_dir(root, command):
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    base = root / f"{command}-{stamp}"
    path, i = base, 1
    while path.exists():
        path = Path(f"{base}-{i}")
        i += 1
    path.mkdir()
    return path


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(run_dir, command, cfg, seeds, outputs, extra=None):
    manifest = {
        "command": command,
        "created": _dt.datetime.now().isoformat(timespec="seconds"),
        "version": __version__,
        "config": cfg.resolved(),
        "seeds": seeds,
        "outputs": {name: _sha256(run_dir / name) for name in outputs},
    }
    manifest.update(extra or {})
    with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return manifest


def _csv(df, path):
    df.to_csv(path, index=False, float_format=CSV_FLOAT)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_prep(cfg):
    cfg.validate(required_paths=("trips", "centroids"))
    run_dir = make_run_dir(cfg.output_dir(), "prep")
    column_map = cfg.doc["prep"].get("column_map")
    trips = read_trips(cfg.path("trips"), column_map)
    centroids = read_centroids(cfg.path("centroids"))
    holidays = read_holidays(cfg.path("holidays")) if cfg.path("holidays") else None
    od, report = run_pipeline(trips, centroids, seed=cfg.seed,
                              min_trips=int(cfg.doc["prep"]["min_trips"]), holidays=holidays)
    if cfg.path("features") is not None and len(od):
        feats = pd.read_csv(cfg.path("features"), dtype={0: str})
        od = join_tract_features(od, feats)
    od.to_csv(run_dir / "od_pairs.csv", index=False, float_format="%.17g")
    with open(run_dir / "prep_log.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    write_manifest(run_dir, "prep", cfg, {"assignment": cfg.seed}, ["od_pairs.csv", "prep_log.json"])
    log.info("prep: %d OD pairs written to %s", len(od), run_dir)
    return run_dir


def cmd_generate(cfg):
    cfg.validate()
    spec = cfg.synthetic_spec()
    run_dir = make_run_dir(cfg.output_dir(), "generate")
    synth = generate(spec)
    save_dataset(synth.data, run_dir / "synthetic_od.csv")
    pd.DataFrame({"origin": synth.data.origin, "destination": synth.data.destination,
                  "label": synth.labels}).to_csv(run_dir / "planted_labels.csv", index=False)
    with open(run_dir / "schema.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(synth.data.schema.to_dict(), fh, sort_keys=False)
    with open(run_dir / "knowledge.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump({"knowledge": synth.knowledge}, fh, sort_keys=False)
    outputs = ["synthetic_od.csv", "planted_labels.csv", "schema.yaml", "knowledge.yaml"]
    write_manifest(run_dir, "generate", cfg, {"generator": spec.seed}, outputs,
                   {"synthetic_spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__}})
    log.info("generate: %d rows written to %s", len(synth.data), run_dir)
    return run_dir


def _experiment_data(cfg, synthetic):
    if synthetic:
        synth = generate(cfg.synthetic_spec())
        knowledge = cfg.doc["knowledge"]
        if not any(knowledge.values()):
            cfg.doc["knowledge"] = synth.knowledge
        return synth.data
    return load_dataset(cfg.path("od"), cfg.schema())


def cmd_experiment(cfg, synthetic=False):
    cfg.validate(required_paths=() if synthetic else ("od",))
    data = _experiment_data(cfg, synthetic)
    cem_cfg = cfg.cem_config()
    run_dir = make_run_dir(cfg.output_dir(), "experiment")
    train, test = train_test_split(data, cfg.train_fraction, seed=cfg.split_seed)
    log.info("experiment: %d training and %d test OD pairs", len(train), len(test))
    report = benchmark_compare(train, test, cem_cfg, full=data)
    cem = report.cem

    labels_all = cem.route(data)
    order = list(cem.labels)
    shares = cluster_shares(labels_all, data.y, order)
    _csv(shares, run_dir / "cluster_shares.csv")
    _csv(descriptive_stats(data, labels_all, order), run_dir / "descriptive_stats.csv")
    _csv(cv_table(cem, report.globals.selection), run_dir / "cv_table.csv")
    _csv(report.benchmark_table(), run_dir / "benchmark_comparison.csv")
    _csv(report.cluster_table, run_dir / "cluster_comparison.csv")
    _csv(histograms(data, labels_all, order=order), run_dir / "histograms.csv")
    _csv(dbi_table(cem.clustering), run_dir / "dbi_table.csv")
    _csv(selected_hyperparameters(cem), run_dir / "selected_models.csv")
    pd.DataFrame({"origin": data.origin, "destination": data.destination, "label": labels_all}
                 ).to_csv(run_dir / "cluster_assignments.csv", index=False)
    _csv(report.predictions, run_dir / "predictions.csv")
    (run_dir / "report.txt").write_text(render_report(report, shares), encoding="utf-8")
    save_model(cem, run_dir / "model.pkl", kind="cem")

    outputs = list(REPORT_FILES) + ["dbi_table.csv", "selected_models.csv", "cluster_assignments.csv",
                                    "predictions.csv", "report.txt", "model.pkl"]
    seeds = {
        "base": cfg.seed, "split": cfg.split_seed, "cv": cem_cfg.seed,
        "clustering_runs": "SeedSequence([base, crc32(method), k, run index])",
    }
    extra = {"benchmark": report.benchmark_family, "overall": report.overall,
             "metadata": report.metadata, "n_train": len(train), "n_test": len(test)}
    write_manifest(run_dir, "experiment", cfg, seeds, outputs, extra)
    print(render_report(report, shares))
    return run_dir


def cmd_predict(cfg, model_path, input_path, output_path=None):
    cfg.validate()
    for p in (model_path, input_path):
        if p is None or not Path(p).exists():
            raise ConfigError(f"required file not found: {p}")
    cem = load_model(model_path)
    if cem.schema is None:
        raise DataError("saved model carries no schema")
    data = load_dataset(input_path, cem.schema)
    pred, labels = predict_cem(cem, data, return_labels=True)
    out = pd.DataFrame({"origin": data.origin, "destination": data.destination,
                        "cluster": labels, "y_pred": pred})
    if output_path is None:
        run_dir = make_run_dir(cfg.output_dir(), "predict")
        output_path = run_dir / "predictions.csv"
        _csv(out, output_path)
        write_manifest(run_dir, "predict", cfg, {}, ["predictions.csv"],
                       {"model": str(model_path), "input": str(input_path)})
    else:
        _csv(out, output_path)
    return Path(output_path)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="cem", description="Clustering-aided ensemble demand models")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. clustering.n_seeds=10 (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--output-dir")
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", parents=[common], help="trip records to OD-pair dataset")
    p.add_argument("--trips")
    p.add_argument("--centroids")
    p.add_argument("--features")
    p.add_argument("--holidays")

    sub.add_parser("generate", parents=[common], help="write a synthetic OD-pair dataset")

    p = sub.add_parser("experiment", parents=[common], help="fit CEM and benchmarks, emit reports")
    p.add_argument("--od", help="OD-pair CSV")
    p.add_argument("--schema", help="schema YAML for the OD CSV")
    p.add_argument("--synthetic", action="store_true", help="use the configured synthetic data")

    p = sub.add_parser("predict", parents=[common], help="score an OD CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    return parser


def _overrides(args):
    out = list(args.overrides)
    for flag, key in (("seed", "seed"), ("output_dir", "output_dir"), ("threads", "threads"),
                      ("trips", "paths.trips"), ("centroids", "paths.centroids"),
                      ("features", "paths.features"), ("holidays", "paths.holidays"),
                      ("od", "paths.od"), ("schema", "paths.schema")):
        value = getattr(args, flag, None)
        if value is not None:
            out.append((key, value))
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        if args.command == "prep":
            out = cmd_prep(cfg)
        elif args.command == "generate":
            out = cmd_generate(cfg)
        elif args.command == "experiment":
            out = cmd_experiment(cfg, synthetic=args.synthetic)
        else:
            out = cmd_predict(cfg, args.model, args.input, args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, SelectionError) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except CemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
