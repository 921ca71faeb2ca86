"""Sequential hyperparameter tuning driven by particle swarms.

One swarm runs per hyperparameter, in a fixed order (batch size, then epoch
count, then learning rate); each swarm searches its own axis while the other
two hyperparameters stay pinned at their current values, and the winner is
installed before the next swarm starts. The objective is validation AUC of a
model trained from scratch at the candidate setting.

Swarm positions are continuous. Integer hyperparameters are rounded only
when a candidate is evaluated, and the learning-rate axis is searched in
log10 space so the swarm moves over orders of magnitude rather than raw
values. Results for each decoded (batch, epochs, learning rate) triple are
cached, so re-visited candidates cost nothing, and particle 0 of every swarm
starts at the incumbent value. That seeding makes each phase's best at least
as good as the setting it started from, so the tuned AUC can never fall
below the starting AUC.
"""

from __future__ import annotations

import csv
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pso
from .errors import ConfigError
from .flow_data import FlowDataset
from .metrics import MetricsReport, calibrate_threshold, compute_metrics, confusion, roc_auc
from .mlp import Hyperparameters, MlpConfig, MlpModel, init_model, predict_batch, train
from .seeds import derive_seed

TUNABLE_NAMES = ("batch_size", "epochs", "learning_rate")
SPACE_KINDS = ("int", "log10")


@dataclass(frozen=True)
class SearchSpace:
    """Inclusive value range for one hyperparameter.

    `lo` and `hi` are values, not swarm positions: an ``int`` space spans the
    integers in [lo, hi], while a ``log10`` space hands the swarm
    [log10(lo), log10(hi)] and decodes positions back through 10**x.
    """

    name: str
    lo: float
    hi: float
    kind: str

    def __post_init__(self):
        if self.name not in TUNABLE_NAMES:
            raise ConfigError(f"space name must be one of {TUNABLE_NAMES}, got {self.name!r}")
        if self.kind not in SPACE_KINDS:
            raise ConfigError(f"space kind must be one of {SPACE_KINDS}, got {self.kind!r}")
        if not self.lo < self.hi:
            raise ConfigError(f"space {self.name}: lo {self.lo} must be < hi {self.hi}")
        if self.kind == "log10" and self.lo <= 0:
            raise ConfigError(f"space {self.name}: log10 spaces need lo > 0, got {self.lo}")
        if self.kind == "int" and self.hi - self.lo < 1:
            raise ConfigError(f"space {self.name}: integer spaces need hi - lo >= 1")

    def bounds(self) -> tuple[float, float]:
        """Position bounds handed to the swarm."""
        if self.kind == "log10":
            return (math.log10(self.lo), math.log10(self.hi))
        return (float(self.lo), float(self.hi))

    def decode(self, position: float) -> float | int:
        if self.kind == "log10":
            return 10.0 ** position
        return int(min(math.floor(self.hi), max(math.ceil(self.lo), round(position))))

    def encode(self, value: float) -> float:
        """Swarm position for a value, clamped into the position bounds."""
        lo, hi = self.bounds()
        pos = math.log10(value) if self.kind == "log10" else float(value)
        return max(lo, min(hi, pos))


def default_spaces() -> tuple[SearchSpace, ...]:
    return (
        SearchSpace("batch_size", 16, 4096, "int"),
        SearchSpace("epochs", 1, 20, "int"),
        SearchSpace("learning_rate", 1e-4, 0.5, "log10"),
    )


@dataclass(frozen=True)
class EvalRecord:
    phase: str
    batch_size: int
    epochs: int
    learning_rate: float
    auc: float
    cached: bool


@dataclass
class PhaseResult:
    name: str
    best_position: float
    best_value: float
    n_evaluations: int
    cache_hits: int
    trace: list[pso.TraceRow] = field(repr=False)


@dataclass
class TuneResult:
    initial: Hyperparameters
    best: Hyperparameters
    initial_auc: float
    best_auc: float
    phases: list[PhaseResult]
    evaluations: list[EvalRecord]
    n_trainings: int
    duration_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "initial": {
                "batch_size": self.initial.batch_size,
                "epochs": self.initial.epochs,
                "learning_rate": self.initial.learning_rate,
                "auc": self.initial_auc,
            },
            "best": {
                "batch_size": self.best.batch_size,
                "epochs": self.best.epochs,
                "learning_rate": self.best.learning_rate,
                "auc": self.best_auc,
            },
            "phases": [
                {
                    "name": p.name,
                    "best_position": p.best_position,
                    "best_value": p.best_value,
                    "n_evaluations": p.n_evaluations,
                    "cache_hits": p.cache_hits,
                }
                for p in self.phases
            ],
            "n_evaluations": len(self.evaluations),
            "n_trainings": self.n_trainings,
            "timing": {"duration_seconds": self.duration_seconds},
        }


def random_initial_state(
    spaces: Sequence[SearchSpace] | None = None, seed: int = 0
) -> Hyperparameters:
    """Random starting triple drawn uniformly from the search spaces.

    Integer axes round the draw; the learning rate is drawn uniformly in
    log10 space, matching how the swarms themselves move.
    """
    if spaces is None:
        spaces = default_spaces()
    by_name = {s.name: s for s in spaces}
    missing = [n for n in TUNABLE_NAMES if n not in by_name]
    if missing:
        raise ConfigError(f"search spaces missing {missing}")
    rng = np.random.default_rng(seed)
    values = {}
    for name in TUNABLE_NAMES:
        space = by_name[name]
        lo, hi = space.bounds()
        values[name] = space.decode(rng.uniform(lo, hi))
    return Hyperparameters(
        batch_size=int(values["batch_size"]),
        epochs=int(values["epochs"]),
        learning_rate=float(values["learning_rate"]),
    )


def validation_auc(
    train_set: FlowDataset,
    val_set: FlowDataset,
    config: MlpConfig,
    hp: Hyperparameters,
    shuffle_seed: int = 0,
) -> float:
    """AUC on the validation set of a model trained from scratch under `hp`."""
    model = init_model(config)
    trained, _ = train(model, train_set, hp, shuffle_seed=shuffle_seed)
    return roc_auc(predict_batch(trained, val_set), val_set.labels)


def tune(
    train_set: FlowDataset,
    val_set: FlowDataset,
    config: MlpConfig,
    initial: Hyperparameters,
    spaces: Sequence[SearchSpace] | None = None,
    *,
    n_particles: int = 6,
    n_iterations: int = 4,
    variant: str = "inertia",
    theta1: float = 2.0,
    theta2: float = 2.0,
    w_max: float = 0.9,
    w_min: float = 0.4,
    v_max: float | None = None,
    constriction_form: str = "as_printed",
    master_seed: int = 0,
    n_workers: int = 1,
) -> TuneResult:
    """Tune batch size, epochs and learning rate one swarm at a time.

    Every candidate trains with the same derived shuffle seed and the same
    weight initialization, so the objective is a pure function of the decoded
    triple and caching is sound. Each phase draws its swarm seed from
    `master_seed` and the phase name. With `n_workers` > 1 candidate models
    inside one swarm iteration train on worker threads; the outcome is
    unchanged, though evaluation-log order then follows completion order.
    """
    started = time.monotonic()
    if spaces is None:
        spaces = default_spaces()
    names = [s.name for s in spaces]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate search space names: {names}")
    if len(train_set) < 1:
        raise ConfigError("tuning requires a nonempty training set")

    shuffle_seed = derive_seed(master_seed, "tuner-train")
    n_train = len(train_set)
    cache: dict[tuple[int, int, float], float] = {}
    evaluations: list[EvalRecord] = []
    n_trainings = 0
    lock = threading.Lock()

    def eval_triple(phase: str, batch_size: int, epochs: int, learning_rate: float) -> float:
        nonlocal n_trainings
        # A candidate batch may exceed the training set; train on full batches.
        key = (min(int(batch_size), n_train), int(epochs), float(learning_rate))
        with lock:
            hit = key in cache
            value = cache.get(key)
        if not hit:
            hp = Hyperparameters(batch_size=key[0], epochs=key[1], learning_rate=key[2])
            value = validation_auc(train_set, val_set, config, hp, shuffle_seed=shuffle_seed)
        with lock:
            if not hit:
                cache[key] = value
                n_trainings += 1
            evaluations.append(
                EvalRecord(
                    phase=phase,
                    batch_size=key[0],
                    epochs=key[1],
                    learning_rate=key[2],
                    auc=value,
                    cached=hit,
                )
            )
        return value

    current = {
        "batch_size": initial.batch_size,
        "epochs": initial.epochs,
        "learning_rate": initial.learning_rate,
    }
    initial_auc = eval_triple("initial", **current)

    phases: list[PhaseResult] = []
    for space in spaces:
        def objective(position: float, _space: SearchSpace = space) -> float:
            candidate = dict(current)
            candidate[_space.name] = _space.decode(position)
            return eval_triple(_space.name, **candidate)

        cfg = pso.PsoConfig(
            bounds=space.bounds(),
            n_particles=n_particles,
            n_iterations=n_iterations,
            theta1=theta1,
            theta2=theta2,
            variant=variant,
            w_max=w_max,
            w_min=w_min,
            v_max=v_max,
            constriction_form=constriction_form,
            rng_seed=derive_seed(master_seed, f"pso-{space.name}"),
        )
        incumbent = space.encode(current[space.name])
        result = pso.maximize(objective, cfg, initial_positions=[incumbent], n_workers=n_workers)
        current[space.name] = space.decode(result.best_position)
        phase_evals = [e for e in evaluations if e.phase == space.name]
        phases.append(
            PhaseResult(
                name=space.name,
                best_position=result.best_position,
                best_value=result.best_value,
                n_evaluations=len(phase_evals),
                cache_hits=sum(e.cached for e in phase_evals),
                trace=result.trace,
            )
        )

    best_auc = eval_triple("final", **current)
    best = Hyperparameters(
        batch_size=min(int(current["batch_size"]), n_train),
        epochs=int(current["epochs"]),
        learning_rate=float(current["learning_rate"]),
    )
    # Incumbent seeding makes a loss essentially impossible, but if the
    # starting point lay outside the search bounds, keep it when better.
    if best_auc < initial_auc:
        best, best_auc = initial, initial_auc
    return TuneResult(
        initial=initial,
        best=best,
        initial_auc=initial_auc,
        best_auc=best_auc,
        phases=phases,
        evaluations=evaluations,
        n_trainings=n_trainings,
        duration_seconds=time.monotonic() - started,
    )


def finalize(
    tuned: Hyperparameters,
    train_set: FlowDataset,
    test_set: FlowDataset,
    config: MlpConfig,
    shuffle_seed: int = 0,
    threshold: float = 0.5,
    calibration_set: FlowDataset | None = None,
) -> tuple[MlpModel, MetricsReport]:
    """Train the final model on the whole training partition, score on test.

    The test partition reaches this function unread by any tuning step; its
    scores feed the confusion counts plus ranking AUC. When a
    `calibration_set` is given, the decision threshold is chosen on it by
    class-weighted accuracy (with the model's class weights) before the test
    partition is scored; otherwise `threshold` is used as given.
    """
    model = init_model(config)
    trained, _ = train(model, train_set, tuned, shuffle_seed=shuffle_seed)
    if calibration_set is not None:
        threshold = calibrate_threshold(
            predict_batch(trained, calibration_set),
            calibration_set.labels,
            weight_normal=config.class_weight_normal,
            weight_attack=config.class_weight_attack,
        )
    scores = predict_batch(trained, test_set)
    auc = roc_auc(scores, test_set.labels)
    report = compute_metrics(confusion(scores, test_set.labels, threshold), threshold, auc=auc)
    return trained, report


def write_tuning_trace_csv(result: TuneResult, path: str | Path) -> None:
    """One row per particle evaluation across all phases, in run order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["phase", "iteration", "particle", "position", "velocity", "objective", "global_best"]
        )
        for phase in result.phases:
            for row in phase.trace:
                writer.writerow(
                    [phase.name, row.iteration, row.particle, repr(row.position),
                     repr(row.velocity), repr(row.objective), repr(row.global_best)]
                )
