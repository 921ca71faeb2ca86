"""Sequential per-hyperparameter swarm tuning of the classifier."""

import csv
import math

import pytest

from swarmflow.errors import ConfigError
from swarmflow.flow_data import SplitSpec, generate_synthetic, min_max_normalize, split
from swarmflow.mlp import Hyperparameters, MlpConfig
from swarmflow.tuner import (
    TUNABLE_NAMES,
    SearchSpace,
    default_spaces,
    finalize,
    random_initial_state,
    tune,
    validation_auc,
    write_tuning_trace_csv,
)


def desk_splits(n=240, separation=4.0, seed=0):
    """Small normalized train/validation pair for fast tuner runs."""
    data = generate_synthetic(n, 0.5, 4, separation, seed=seed)
    train_part, val_part = split(data, SplitSpec(0.75, seed=seed + 1))
    train_norm = min_max_normalize(train_part)
    val_norm = min_max_normalize(val_part)
    return train_norm, val_norm


DESK_CONFIG = MlpConfig(
    layer_sizes=(4, 6, 1), class_weight_normal=1.0, class_weight_attack=1.0, init_seed=0
)

SMALL_SPACES = (
    SearchSpace("batch_size", 4, 16, "int"),
    SearchSpace("epochs", 1, 4, "int"),
    SearchSpace("learning_rate", 0.01, 0.5, "log10"),
)


# --- search spaces -----------------------------------------------------------


def test_default_spaces_cover_reference_values():
    spaces = {s.name: s for s in default_spaces()}
    assert (spaces["batch_size"].lo, spaces["batch_size"].hi) == (16, 4096)
    assert spaces["batch_size"].kind == "int"
    assert (spaces["epochs"].lo, spaces["epochs"].hi) == (1, 20)
    assert spaces["epochs"].kind == "int"
    assert (spaces["learning_rate"].lo, spaces["learning_rate"].hi) == (1e-4, 0.5)
    assert spaces["learning_rate"].kind == "log10"
    # every tuned value the search may need to reach is representable
    for batch in (350, 732, 3064):
        assert spaces["batch_size"].lo <= batch <= spaces["batch_size"].hi
    for epochs in (2, 12):
        assert spaces["epochs"].lo <= epochs <= spaces["epochs"].hi
    for lr in (0.2, 0.0015):
        assert spaces["learning_rate"].lo <= lr <= spaces["learning_rate"].hi


def test_search_space_validation():
    with pytest.raises(ConfigError):
        SearchSpace("momentum", 0, 1, "int")
    with pytest.raises(ConfigError):
        SearchSpace("epochs", 1, 20, "linear")
    with pytest.raises(ConfigError):
        SearchSpace("epochs", 20, 1, "int")
    with pytest.raises(ConfigError):
        SearchSpace("learning_rate", 0.0, 0.5, "log10")
    with pytest.raises(ConfigError):
        SearchSpace("epochs", 5, 5.5, "int")


def test_int_space_decode_rounds_and_clips():
    space = SearchSpace("batch_size", 16, 4096, "int")
    assert space.decode(100.4) == 100
    assert space.decode(100.6) == 101
    assert space.decode(15.2) == 16
    assert space.decode(4099.9) == 4096
    assert isinstance(space.decode(100.4), int)


def test_log_space_round_trips_through_positions():
    space = SearchSpace("learning_rate", 1e-4, 0.5, "log10")
    lo, hi = space.bounds()
    assert abs(lo - (-4.0)) < 1e-12
    assert abs(hi - math.log10(0.5)) < 1e-12
    assert abs(space.decode(-2.0) - 0.01) < 1e-15
    assert abs(space.encode(0.01) - (-2.0)) < 1e-12
    # encoding clamps into the position bounds
    assert space.encode(1e-9) == lo
    assert space.encode(5.0) == hi


def test_random_initial_state_is_deterministic_and_in_space():
    a = random_initial_state(seed=123)
    b = random_initial_state(seed=123)
    c = random_initial_state(seed=124)
    assert a == b
    assert a != c
    assert 16 <= a.batch_size <= 4096
    assert 1 <= a.epochs <= 20
    assert 1e-4 <= a.learning_rate <= 0.5
    assert isinstance(a.batch_size, int) and isinstance(a.epochs, int)


def test_random_initial_state_requires_all_spaces():
    with pytest.raises(ConfigError):
        random_initial_state(spaces=SMALL_SPACES[:2], seed=0)


# --- objective ---------------------------------------------------------------


def test_objective_is_pure():
    train_norm, val_norm = desk_splits()
    hp = Hyperparameters(16, 3, 0.1)
    first = validation_auc(train_norm, val_norm, DESK_CONFIG, hp, shuffle_seed=5)
    second = validation_auc(train_norm, val_norm, DESK_CONFIG, hp, shuffle_seed=5)
    assert first == second


def test_objective_chance_level_on_inseparable_classes():
    train_norm, val_norm = desk_splits(n=800, separation=0.0, seed=3)
    hp = Hyperparameters(32, 3, 0.05)
    auc = validation_auc(train_norm, val_norm, DESK_CONFIG, hp, shuffle_seed=0)
    assert abs(auc - 0.5) < 0.05


def test_objective_high_on_well_separated_classes():
    train_norm, val_norm = desk_splits(n=240, separation=6.0, seed=4)
    hp = Hyperparameters(32, 12, 0.01)
    auc = validation_auc(train_norm, val_norm, DESK_CONFIG, hp, shuffle_seed=0)
    assert auc > 0.95


# --- tune --------------------------------------------------------------------


def run_small_tune(seed=0, n_particles=2, n_iterations=1, **kwargs):
    train_norm, val_norm = desk_splits(seed=seed)
    initial = random_initial_state(SMALL_SPACES, seed=seed)
    result = tune(
        train_norm,
        val_norm,
        DESK_CONFIG,
        initial,
        spaces=SMALL_SPACES,
        n_particles=n_particles,
        n_iterations=n_iterations,
        master_seed=seed,
        **kwargs,
    )
    return result, initial


def test_tune_never_loses_to_the_initial_state():
    for seed in (0, 1, 2):
        result, _ = run_small_tune(seed=seed)
        assert result.best_auc >= result.initial_auc


def test_tune_phases_run_in_fixed_order():
    result, _ = run_small_tune()
    assert [p.name for p in result.phases] == list(TUNABLE_NAMES)


def test_tune_evaluation_count_matches_swarm_arithmetic():
    n_particles, n_iterations = 2, 1
    result, _ = run_small_tune(n_particles=n_particles, n_iterations=n_iterations)
    per_phase = n_particles * (n_iterations + 1)
    assert all(p.n_evaluations == per_phase for p in result.phases)
    assert sum(p.n_evaluations for p in result.phases) == 3 * per_phase
    # plus the initial evaluation and the final re-evaluation
    assert len(result.evaluations) == 3 * per_phase + 2


def test_tune_each_phase_varies_exactly_one_coordinate():
    result, initial = run_small_tune()
    current = {
        "batch_size": initial.batch_size,
        "epochs": initial.epochs,
        "learning_rate": initial.learning_rate,
    }
    for phase in result.phases:
        records = [e for e in result.evaluations if e.phase == phase.name]
        for record in records:
            for other in TUNABLE_NAMES:
                if other != phase.name:
                    assert getattr(record, other) == current[other]
        space = {s.name: s for s in SMALL_SPACES}[phase.name]
        current[phase.name] = space.decode(phase.best_position)


def test_tune_integer_hyperparameters_stay_integral():
    result, _ = run_small_tune(seed=5)
    for record in result.evaluations:
        assert isinstance(record.batch_size, int)
        assert isinstance(record.epochs, int)


def test_tune_cache_prevents_retraining_duplicates():
    result, _ = run_small_tune(seed=1)
    seen: dict[tuple, float] = {}
    for record in result.evaluations:
        key = (record.batch_size, record.epochs, record.learning_rate)
        if key in seen:
            assert record.cached
            assert record.auc == seen[key]
        else:
            assert not record.cached
            seen[key] = record.auc
    assert result.n_trainings == len(seen)
    assert result.n_trainings < len(result.evaluations)


def test_tune_degenerate_swarm_returns_initial_state():
    train_norm, val_norm = desk_splits(seed=7)
    initial = random_initial_state(SMALL_SPACES, seed=7)
    result = tune(
        train_norm,
        val_norm,
        DESK_CONFIG,
        initial,
        spaces=SMALL_SPACES,
        n_particles=1,
        n_iterations=0,
        master_seed=7,
    )
    # the only particle of every phase sits on the incumbent value
    assert result.best == initial
    assert result.best_auc == result.initial_auc
    assert result.n_trainings == 1
    assert all(p.cache_hits == p.n_evaluations == 1 for p in result.phases)


def test_tune_batch_candidates_clamp_to_training_set_size():
    train_norm, val_norm = desk_splits(n=32)  # 24 training records
    spaces = (
        SearchSpace("batch_size", 4, 4096, "int"),
        SearchSpace("epochs", 1, 2, "int"),
        SearchSpace("learning_rate", 0.01, 0.5, "log10"),
    )
    initial = Hyperparameters(8, 1, 0.1)
    result = tune(
        train_norm,
        val_norm,
        DESK_CONFIG,
        initial,
        spaces=spaces,
        n_particles=2,
        n_iterations=1,
        master_seed=2,
    )
    assert all(e.batch_size <= len(train_norm) for e in result.evaluations)
    assert result.best.batch_size <= len(train_norm)


def test_tune_worker_threads_do_not_change_the_outcome():
    serial, _ = run_small_tune(seed=3, n_workers=1)
    threaded, _ = run_small_tune(seed=3, n_workers=3)
    assert serial.best == threaded.best
    assert serial.best_auc == threaded.best_auc
    assert {(e.batch_size, e.epochs, e.learning_rate, e.auc) for e in serial.evaluations} == {
        (e.batch_size, e.epochs, e.learning_rate, e.auc) for e in threaded.evaluations
    }


def test_tune_report_dict_shape():
    result, _ = run_small_tune(seed=4)
    obj = result.to_dict()
    assert set(obj) == {"initial", "best", "phases", "n_evaluations", "n_trainings", "timing"}
    assert obj["best"]["auc"] == result.best_auc
    assert obj["n_evaluations"] == len(result.evaluations)
    assert len(obj["phases"]) == 3
    assert obj["timing"]["duration_seconds"] >= 0.0


def test_tune_rejects_duplicate_spaces():
    train_norm, val_norm = desk_splits()
    twice = (SMALL_SPACES[0], SMALL_SPACES[0], SMALL_SPACES[2])
    with pytest.raises(ConfigError):
        tune(train_norm, val_norm, DESK_CONFIG, Hyperparameters(8, 1, 0.1), spaces=twice)


# --- finalize ----------------------------------------------------------------


def test_finalize_trains_and_reports_at_fixed_threshold():
    train_norm, test_norm = desk_splits(n=240, separation=6.0, seed=9)
    model, report = finalize(
        Hyperparameters(16, 8, 0.1), train_norm, test_norm, DESK_CONFIG, threshold=0.5
    )
    assert report.threshold == 0.5
    assert report.confusion.total == len(test_norm)
    assert report.auc is not None and report.auc > 0.9
    assert model.input_size == 4


def test_finalize_calibrates_threshold_on_calibration_set():
    from swarmflow.mlp import predict_batch

    train_norm, test_norm = desk_splits(n=240, separation=6.0, seed=10)
    model, report = finalize(
        Hyperparameters(16, 8, 0.1),
        train_norm,
        test_norm,
        DESK_CONFIG,
        calibration_set=train_norm,
    )
    calibration_scores = predict_batch(model, train_norm)
    assert report.threshold in calibration_scores
    assert report.accuracy > 0.9


# --- trace output ------------------------------------------------------------


def test_tuning_trace_csv_layout(tmp_path):
    result, _ = run_small_tune(seed=6)
    path = tmp_path / "tuning_trace.csv"
    write_tuning_trace_csv(result, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "phase", "iteration", "particle", "position", "velocity", "objective", "global_best",
    ]
    assert len(rows) == 1 + sum(len(p.trace) for p in result.phases)
    assert {r[0] for r in rows[1:]} == set(TUNABLE_NAMES)
