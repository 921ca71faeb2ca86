"""End-to-end runs: ingest or synthesize, preserve, prepare, fit, report.

Every mode writes its artifacts under the configured output directory and
finishes with ``run_report.json``: the merged config echo, every derived
seed, library versions, artifact names, and the mode's results. All JSON is
written with sorted keys, and everything that varies between identical runs
(wall-clock readings, throughput) lives under ``timing`` or ``timestamp``
keys, so two runs with the same master seed differ only there.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .compress import compress, fit_compression, save_compression
from .config import MODES, RunConfig
from .errors import ConfigError, DataError
from .flow_data import (
    FlowDataset,
    PreservationManifest,
    SplitSpec,
    apply_normalization,
    digest_file,
    generate_synthetic,
    load_csv,
    load_normalization,
    min_max_normalize,
    save_csv,
    save_normalization,
    split,
)
from .metrics import MetricsReport, calibrate_threshold, compute_metrics, confusion, roc_auc
from .mlp import init_model, load_model, predict_batch, save_model, train
from .seeds import derive_seed
from .tuner import finalize, random_initial_state, tune, write_tuning_trace_csv

VALIDATION_FRACTION = 0.75  # share of the training partition kept for fitting


def _write_json(obj: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _derived_seeds(master: int) -> dict[str, int]:
    return {
        "master": master,
        "synth": derive_seed(master, "synth"),
        "split": derive_seed(master, "split"),
        "validation": derive_seed(master, "validation"),
        "init": derive_seed(master, "init"),
        "train": derive_seed(master, "train"),
        "initial_state": derive_seed(master, "initial-state"),
        "tuner_train": derive_seed(master, "tuner-train"),
    }


def _versions() -> dict[str, str]:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "swarmflow": __version__,
    }


def digest_paths(paths) -> PreservationManifest:
    manifest = PreservationManifest()
    for path in paths:
        manifest.add(digest_file(path))
    return manifest


def _concat(datasets: list[FlowDataset]) -> FlowDataset:
    if len(datasets) == 1:
        return datasets[0]
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.feature_names != first.feature_names:
            raise DataError(
                f"cannot combine inputs with differing columns: "
                f"{list(first.feature_names)} vs {list(ds.feature_names)}"
            )
    return FlowDataset(
        features=np.concatenate([ds.features for ds in datasets]),
        labels=np.concatenate([ds.labels for ds in datasets]),
        feature_names=first.feature_names,
        label_mapping=first.label_mapping,
    )


def _source_dataset(cfg: RunConfig, out_dir: Path, report: dict) -> FlowDataset:
    """Input CSVs when configured, otherwise a seeded synthetic dataset.

    Either way the bytes that fed the run are digested into manifest.jsonl.
    """
    inputs = cfg.get("inputs")
    label_column = str(cfg.get("label_column"))
    positive_label = cfg.get("positive_label")
    if inputs:
        manifest = digest_paths(inputs)
        dataset = _concat(
            [load_csv(p, label_column=label_column, positive_label=positive_label) for p in inputs]
        )
        report["results"]["source"] = {"kind": "csv", "paths": list(inputs)}
    else:
        dataset = generate_synthetic(
            n=int(cfg.get("synth.n")),
            attack_fraction=float(cfg.get("synth.attack_fraction")),
            feature_count=int(cfg.get("synth.features")),
            separation=float(cfg.get("synth.separation")),
            seed=derive_seed(int(cfg.get("master_seed")), "synth"),
        )
        data_path = out_dir / "data.csv"
        save_csv(dataset, data_path, label_column=label_column)
        manifest = digest_paths([data_path])
        report["artifacts"]["data"] = "data.csv"
        report["results"]["source"] = {
            "kind": "synthetic",
            "n": len(dataset),
            "features": dataset.n_features,
        }
    manifest.write_jsonl(out_dir / "manifest.jsonl")
    report["artifacts"]["manifest"] = "manifest.jsonl"
    n_normal, n_attack = dataset.class_counts()
    report["results"]["class_counts"] = {"normal": n_normal, "attack": n_attack}
    return dataset


def _prepare_splits(
    cfg: RunConfig, dataset: FlowDataset, out_dir: Path, report: dict
) -> tuple[FlowDataset, FlowDataset]:
    """Split raw data, fit scaling on the training side, scale both sides."""
    master = int(cfg.get("master_seed"))
    spec = SplitSpec(
        train_fraction=float(cfg.get("split.train_fraction")),
        seed=derive_seed(master, "split"),
        stratified=bool(cfg.get("split.stratified")),
    )
    train_raw, test_raw = split(dataset, spec)
    train_set = min_max_normalize(train_raw)
    test_set = apply_normalization(test_raw, train_set.normalization)
    save_normalization(train_set, out_dir / "normalization.json")
    report["artifacts"]["normalization"] = "normalization.json"
    report["results"]["split"] = {"train": len(train_set), "test": len(test_set)}
    return train_set, test_set


def _class_weight_normal(cfg: RunConfig, train_set: FlowDataset) -> float:
    """Fixed weight from config, or the attack/normal ratio of the training data."""
    if cfg.get("weights.mode") == "proportional":
        n_normal, n_attack = train_set.class_counts()
        if n_normal == 0:
            raise DataError("proportional class weights need at least one normal record")
        return n_attack / n_normal
    return float(cfg.get("weights.normal"))


def _evaluate_model(model, test_set: FlowDataset, threshold: float, timing: dict) -> MetricsReport:
    started = time.monotonic()
    scores = predict_batch(model, test_set)
    elapsed = time.monotonic() - started
    timing["evaluate_records_per_second"] = len(test_set) / max(elapsed, 1e-9)
    try:
        auc = roc_auc(scores, test_set.labels)
    except DataError:
        auc = None  # single-class test data has no ranking to measure
    return compute_metrics(confusion(scores, test_set.labels, threshold), threshold, auc=auc)


def run(cfg: RunConfig) -> dict:
    """Execute one pipeline mode; returns the report written to run_report.json."""
    mode = str(cfg.get("mode"))
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    out_dir = Path(str(cfg.get("output_dir")))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc

    started = time.time()
    started_clock = time.monotonic()
    master = int(cfg.get("master_seed"))
    report: dict = {
        "mode": mode,
        "config": cfg.echo(),
        "seeds": _derived_seeds(master),
        "versions": _versions(),
        "artifacts": {"run_report": "run_report.json"},
        "results": {},
        "timing": {"started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started))},
    }

    if mode == "synth":
        _source_dataset(cfg, out_dir, report)
    elif mode == "evaluate":
        _run_evaluate(cfg, out_dir, report)
    elif mode == "train-only":
        _run_train_only(cfg, out_dir, report)
    elif mode == "tune":
        _run_tune(cfg, out_dir, report)
    else:
        _run_compress_experiment(cfg, out_dir, report)

    report["timing"]["duration_seconds"] = time.monotonic() - started_clock
    _write_json(report, out_dir / "run_report.json")
    return report


def _run_evaluate(cfg: RunConfig, out_dir: Path, report: dict) -> None:
    inputs = cfg.get("inputs")
    model_file = cfg.get("model_file")
    if not inputs or not model_file:
        raise ConfigError("evaluate mode requires inputs and model_file")
    model = load_model(str(model_file))
    dataset = _concat(
        [
            load_csv(
                p,
                label_column=str(cfg.get("label_column")),
                positive_label=cfg.get("positive_label"),
            )
            for p in inputs
        ]
    )
    threshold = float(cfg.get("threshold"))
    normalization_file = cfg.get("normalization_file")
    if normalization_file:
        stats = load_normalization(str(normalization_file))
        dataset = apply_normalization(dataset, stats["min_max"])
        if "threshold" in stats:
            threshold = float(stats["threshold"])
    metrics = _evaluate_model(model, dataset, threshold, report["timing"])
    metrics.write_json(out_dir / "metrics.json")
    report["artifacts"]["metrics"] = "metrics.json"
    report["results"]["metrics"] = metrics.to_dict()


def _choose_threshold(cfg: RunConfig, model, calibration_set: FlowDataset, config) -> float:
    """Configured fixed threshold, or the weighted-accuracy optimum on held data."""
    if cfg.get("threshold.policy") == "fixed":
        return float(cfg.get("threshold"))
    return calibrate_threshold(
        predict_batch(model, calibration_set),
        calibration_set.labels,
        weight_normal=config.class_weight_normal,
        weight_attack=config.class_weight_attack,
    )


def _run_train_only(cfg: RunConfig, out_dir: Path, report: dict) -> None:
    dataset = _source_dataset(cfg, out_dir, report)
    train_set, test_set = _prepare_splits(cfg, dataset, out_dir, report)
    master = int(cfg.get("master_seed"))
    config = cfg.mlp_config(
        input_size=train_set.n_features,
        class_weight_normal=_class_weight_normal(cfg, train_set),
    )
    hp = cfg.hyperparameters()
    model = init_model(config)
    fit_started = time.monotonic()
    trained, losses = train(model, train_set, hp, shuffle_seed=derive_seed(master, "train"))
    report["timing"]["train_seconds"] = time.monotonic() - fit_started
    save_model(trained, out_dir / "model.txt")
    threshold = _choose_threshold(cfg, trained, train_set, config)
    save_normalization(train_set, out_dir / "normalization.json", threshold=threshold)
    metrics = _evaluate_model(trained, test_set, threshold, report["timing"])
    metrics.write_json(out_dir / "metrics.json")
    report["artifacts"]["model"] = "model.txt"
    report["artifacts"]["metrics"] = "metrics.json"
    report["results"]["hyperparameters"] = {
        "batch_size": hp.batch_size,
        "epochs": hp.epochs,
        "learning_rate": hp.learning_rate,
    }
    report["results"]["class_weight_normal"] = config.class_weight_normal
    report["results"]["loss_trace"] = losses
    report["results"]["metrics"] = metrics.to_dict()


def _run_tune(cfg: RunConfig, out_dir: Path, report: dict) -> None:
    dataset = _source_dataset(cfg, out_dir, report)
    train_set, test_set = _prepare_splits(cfg, dataset, out_dir, report)
    master = int(cfg.get("master_seed"))
    config = cfg.mlp_config(
        input_size=train_set.n_features,
        class_weight_normal=_class_weight_normal(cfg, train_set),
    )
    spaces = cfg.search_spaces()
    initial = random_initial_state(spaces, seed=derive_seed(master, "initial-state"))

    # The AUC objective scores a held-out slice of the training partition;
    # the test partition stays untouched until the final model is fixed.
    val_spec = SplitSpec(
        train_fraction=VALIDATION_FRACTION,
        seed=derive_seed(master, "validation"),
        stratified=bool(cfg.get("split.stratified")),
    )
    fit_set, val_set = split(train_set, val_spec)

    result = tune(
        fit_set,
        val_set,
        config,
        initial,
        spaces,
        master_seed=master,
        n_workers=int(cfg.get("threads")),
        **cfg.pso_kwargs(),
    )
    write_tuning_trace_csv(result, out_dir / "tuning_trace.csv")
    _write_json(result.to_dict(), out_dir / "tune_report.json")

    final_started = time.monotonic()
    trained, metrics = finalize(
        result.best,
        train_set,
        test_set,
        config,
        shuffle_seed=derive_seed(master, "train"),
        threshold=float(cfg.get("threshold")),
        calibration_set=val_set if cfg.get("threshold.policy") == "calibrated" else None,
    )
    report["timing"]["finalize_seconds"] = time.monotonic() - final_started
    save_normalization(train_set, out_dir / "normalization.json", threshold=metrics.threshold)
    report["timing"]["tune_seconds"] = result.duration_seconds
    save_model(trained, out_dir / "model.txt")
    metrics.write_json(out_dir / "metrics.json")
    report["artifacts"].update(
        {
            "tuning_trace": "tuning_trace.csv",
            "tune_report": "tune_report.json",
            "model": "model.txt",
            "metrics": "metrics.json",
        }
    )
    tuned = result.to_dict()
    tuned.pop("timing", None)
    report["results"]["tuning"] = tuned
    report["results"]["class_weight_normal"] = config.class_weight_normal
    report["results"]["metrics"] = metrics.to_dict()


def _run_compress_experiment(cfg: RunConfig, out_dir: Path, report: dict) -> None:
    """Train the full-width model and a single-feature compressed model side by side."""
    dataset = _source_dataset(cfg, out_dir, report)
    train_set, test_set = _prepare_splits(cfg, dataset, out_dir, report)
    master = int(cfg.get("master_seed"))
    hp = cfg.hyperparameters()
    weight_normal = _class_weight_normal(cfg, train_set)
    shuffle_seed = derive_seed(master, "train")

    def branch(tag: str, train_part: FlowDataset, test_part: FlowDataset) -> dict:
        config = cfg.mlp_config(
            input_size=train_part.n_features, class_weight_normal=weight_normal
        )
        model = init_model(config)
        trained, _ = train(model, train_part, hp, shuffle_seed=shuffle_seed)
        threshold = _choose_threshold(cfg, trained, train_part, config)
        metrics = _evaluate_model(trained, test_part, threshold, {})
        save_model(trained, out_dir / f"model_{tag}.txt")
        metrics.write_json(out_dir / f"metrics_{tag}.json")
        report["artifacts"][f"model_{tag}"] = f"model_{tag}.txt"
        report["artifacts"][f"metrics_{tag}"] = f"metrics_{tag}.json"
        return metrics.to_dict()

    full = branch("full", train_set, test_set)

    comp_model = fit_compression(train_set, weight_mode=str(cfg.get("compress.weight_mode")))
    save_compression(comp_model, out_dir / "compression.txt")
    report["artifacts"]["compression"] = "compression.txt"
    compressed = branch("compressed", compress(comp_model, train_set), compress(comp_model, test_set))

    ordering = None
    if full["auc"] is not None and compressed["auc"] is not None:
        ordering = compressed["auc"] <= full["auc"]
    report["results"]["hyperparameters"] = {
        "batch_size": hp.batch_size,
        "epochs": hp.epochs,
        "learning_rate": hp.learning_rate,
    }
    report["results"]["full"] = full
    report["results"]["compressed"] = compressed
    report["results"]["compressed_auc_le_full_auc"] = ordering
    _write_json(
        {
            "full": full,
            "compressed": compressed,
            "compressed_auc_le_full_auc": ordering,
        },
        out_dir / "compress_report.json",
    )
    report["artifacts"]["compress_report"] = "compress_report.json"


def ingest_files(
    paths,
    out_dir: str | Path,
    label_column: str = "label",
    positive_label: str | None = None,
) -> dict:
    """Validate and digest flow CSVs, writing the preservation manifest.

    Returns a summary (per-file record and class counts plus digests), a
    lighter-weight entry point than a full pipeline run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = PreservationManifest()
    files = []
    for path in paths:
        entry = digest_file(path)
        dataset = load_csv(path, label_column=label_column, positive_label=positive_label)
        manifest.add(entry)
        n_normal, n_attack = dataset.class_counts()
        files.append(
            {
                "source": entry.source,
                "sha256": entry.sha256,
                "bytes": entry.bytes,
                "records": len(dataset),
                "features": dataset.n_features,
                "class_counts": {"normal": n_normal, "attack": n_attack},
                "label_mapping": dataset.label_mapping,
            }
        )
    manifest.write_jsonl(out / "manifest.jsonl")
    return {"files": files, "manifest": str(out / "manifest.jsonl")}
