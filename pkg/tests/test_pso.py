"""Swarm maximizer: update rules, schedules, invariants, trace output."""

import csv
import math

import numpy as np
import pytest

from swarmflow.errors import ConfigError
from swarmflow.pso import (
    Particle,
    PsoConfig,
    constriction_factor,
    inertia_at,
    maximize,
    update_position,
    update_velocity,
    write_trace_csv,
)

# --- schedules and factors ---------------------------------------------------


def test_inertia_endpoints_are_exact():
    assert inertia_at(0, 50, 0.9, 0.4) == 0.9
    assert inertia_at(50, 50, 0.9, 0.4) == 0.4


def test_inertia_midpoint_value():
    assert abs(inertia_at(25, 50, 0.9, 0.4) - 0.65) < 1e-12


def test_inertia_decays_linearly():
    values = [inertia_at(i, 10, 0.9, 0.4) for i in range(11)]
    diffs = np.diff(values)
    assert np.allclose(diffs, diffs[0])
    assert diffs[0] < 0


def test_inertia_errors():
    with pytest.raises(ConfigError):
        inertia_at(0, 0, 0.9, 0.4)
    with pytest.raises(ConfigError):
        inertia_at(0, 10, 0.4, 0.9)
    with pytest.raises(ConfigError):
        inertia_at(11, 10, 0.9, 0.4)


def test_constriction_factor_as_printed():
    # phi = 4.1: 2 / |4 - 4.1 - sqrt(4.1^2 - 4*4.1)|
    assert abs(constriction_factor(2.05, 2.05) - 2.70154) < 1e-4
    # phi = 5: 2 / |4 - 5 - sqrt(5)|
    assert abs(constriction_factor(2.5, 2.5) - 0.61803) < 1e-4


def test_constriction_factor_standard_form():
    assert abs(constriction_factor(2.05, 2.05, form="standard") - 0.72984) < 1e-4
    phi = 5.0
    expected = 2.0 / abs(2.0 - phi - math.sqrt(phi * phi - 4 * phi))
    assert abs(constriction_factor(2.5, 2.5, form="standard") - expected) < 1e-12


def test_constriction_factor_rejects_small_phi():
    with pytest.raises(ConfigError):
        constriction_factor(2.0, 2.0)
    with pytest.raises(ConfigError):
        constriction_factor(1.0, 2.9)
    with pytest.raises(ConfigError):
        constriction_factor(2.05, 2.05, form="nonsense")


# --- config validation -------------------------------------------------------


def test_config_validation():
    PsoConfig(bounds=(0.0, 1.0))  # defaults are valid
    cases = [
        dict(bounds=(1.0, 1.0)),
        dict(bounds=(2.0, 1.0)),
        dict(bounds=(0.0, math.inf)),
        dict(bounds=(0.0, 1.0), n_particles=0),
        dict(bounds=(0.0, 1.0), n_iterations=-1),
        dict(bounds=(0.0, 1.0), theta1=0.0),
        dict(bounds=(0.0, 1.0), theta2=-1.0),
        dict(bounds=(0.0, 1.0), variant="annealing"),
        dict(bounds=(0.0, 1.0), w_max=0.3, w_min=0.5),
        dict(bounds=(0.0, 1.0), v_max=0.0),
        dict(bounds=(0.0, 1.0), constriction_form="other"),
        dict(bounds=(0.0, 1.0), variant="constriction", theta1=2.0, theta2=2.0),
    ]
    for kwargs in cases:
        with pytest.raises(ConfigError):
            PsoConfig(**kwargs)


def test_constriction_variant_accepts_large_phi():
    PsoConfig(bounds=(0.0, 1.0), variant="constriction", theta1=2.05, theta2=2.05)


# --- velocity update ---------------------------------------------------------


def _particle(x=1.0, v=0.5, lbest=2.0):
    return Particle(position=x, velocity=v, best_position=lbest, best_value=0.0)


def test_velocity_stationary_at_consensus():
    p = Particle(position=3.0, velocity=0.0, best_position=3.0, best_value=1.0)
    cfg = PsoConfig(bounds=(0.0, 10.0), variant="original")
    assert update_velocity(p, 3.0, cfg, 0.7, 0.2) == 0.0


def test_velocity_original_worked_example():
    cfg = PsoConfig(bounds=(0.0, 10.0), variant="original", theta1=2.0, theta2=2.0)
    v = update_velocity(_particle(), 3.0, cfg, 1.0, 1.0)
    assert abs(v - 6.5) < 1e-12


def test_velocity_clamped_to_v_max():
    cfg = PsoConfig(bounds=(0.0, 10.0), variant="original", v_max=4.0)
    assert update_velocity(_particle(), 3.0, cfg, 1.0, 1.0) == 4.0
    fast = Particle(position=5.0, velocity=-20.0, best_position=5.0, best_value=0.0)
    assert update_velocity(fast, 5.0, cfg, 1.0, 1.0) == -4.0


def test_velocity_inertia_scales_previous_term_only():
    cfg = PsoConfig(bounds=(0.0, 10.0), variant="inertia", n_iterations=50)
    v0 = update_velocity(_particle(), 3.0, cfg, 1.0, 1.0, iteration=0)
    assert abs(v0 - (0.9 * 0.5 + 2.0 + 4.0)) < 1e-12
    v_last = update_velocity(_particle(), 3.0, cfg, 1.0, 1.0, iteration=50)
    assert abs(v_last - (0.4 * 0.5 + 2.0 + 4.0)) < 1e-12


def test_velocity_constriction_scales_whole_update():
    cfg = PsoConfig(
        bounds=(0.0, 10.0), variant="constriction", theta1=2.05, theta2=2.05
    )
    k = constriction_factor(2.05, 2.05)
    v = update_velocity(_particle(), 3.0, cfg, 1.0, 1.0)
    assert abs(v - k * (0.5 + 2.05 + 4.1)) < 1e-12


# --- position update ---------------------------------------------------------


def test_position_update_examples():
    assert update_position(1.0, 6.5, (0.0, 10.0)) == 7.5
    assert update_position(9.0, 6.5, (0.0, 10.0)) == 10.0
    assert update_position(1.0, -6.5, (0.0, 10.0)) == 0.0
    assert update_position(4.2, 0.0, (0.0, 10.0)) == 4.2


# --- maximize ----------------------------------------------------------------


def quadratic(x):
    return -((x - 3.0) ** 2)


def test_maximize_finds_interior_optimum():
    cfg = PsoConfig(bounds=(0.0, 10.0), n_particles=6, n_iterations=50, rng_seed=1)
    result = maximize(quadratic, cfg)
    assert abs(result.best_position - 3.0) < 1e-2
    assert abs(result.best_value) < 1e-3


def test_maximize_reaches_boundary_optimum():
    cfg = PsoConfig(bounds=(0.0, 1.0), n_particles=6, n_iterations=50, rng_seed=2)
    result = maximize(lambda x: x, cfg)
    assert result.best_position >= 0.99


def test_maximize_constant_objective():
    cfg = PsoConfig(bounds=(0.0, 1.0), n_particles=4, n_iterations=3, rng_seed=3)
    result = maximize(lambda x: 2.5, cfg)
    assert result.best_value == 2.5
    assert result.global_best_history()[0] == 2.5


def test_maximize_invariants_across_seeds_and_variants():
    for variant in ("original", "inertia", "constriction"):
        theta = 2.05 if variant == "constriction" else 2.0
        for seed in range(20):
            cfg = PsoConfig(
                bounds=(0.0, 10.0),
                n_particles=5,
                n_iterations=8,
                theta1=theta,
                theta2=theta,
                variant=variant,
                v_max=2.0,
                rng_seed=seed,
            )
            result = maximize(quadratic, cfg)
            repeat = maximize(quadratic, cfg)

            history = result.global_best_history()
            assert len(history) == cfg.n_iterations + 1
            assert all(b >= a for a, b in zip(history, history[1:]))
            for row in result.trace:
                assert 0.0 <= row.position <= 10.0
                assert abs(row.velocity) <= 2.0 + 1e-12
            assert abs(result.best_value - quadratic(result.best_position)) < 1e-12
            assert result.n_evaluations == cfg.n_particles * (cfg.n_iterations + 1)
            assert result.trace == repeat.trace


def test_maximize_zero_iterations_evaluates_initial_positions_only():
    cfg = PsoConfig(bounds=(0.0, 10.0), n_particles=4, n_iterations=0, rng_seed=5)
    result = maximize(quadratic, cfg)
    assert result.n_evaluations == 4
    assert len(result.trace) == 4
    best_initial = max(row.objective for row in result.trace)
    assert result.best_value == best_initial


def test_maximize_initial_positions_pin_first_particles():
    cfg = PsoConfig(bounds=(0.0, 10.0), n_particles=5, n_iterations=0, rng_seed=7)
    free = maximize(quadratic, cfg)
    pinned = maximize(quadratic, cfg, initial_positions=[3.0])
    assert pinned.trace[0].position == 3.0
    assert pinned.best_value == 0.0
    # remaining particles draw the same random starts either way
    assert [r.position for r in pinned.trace[1:]] == [r.position for r in free.trace[1:]]


def test_maximize_initial_positions_validation():
    cfg = PsoConfig(bounds=(0.0, 1.0), n_particles=2, n_iterations=1)
    with pytest.raises(ConfigError):
        maximize(quadratic, cfg, initial_positions=[0.1, 0.2, 0.3])
    with pytest.raises(ConfigError):
        maximize(quadratic, cfg, initial_positions=[5.0])


def test_maximize_treats_non_finite_objective_as_worst():
    def partial(x):
        return float("nan") if x < 5.0 else -abs(x - 7.0)

    cfg = PsoConfig(bounds=(0.0, 10.0), n_particles=8, n_iterations=30, rng_seed=11)
    result = maximize(partial, cfg)
    assert math.isfinite(result.best_value)
    assert result.best_position >= 5.0
    assert abs(result.best_position - 7.0) < 0.5


def test_maximize_survives_objective_with_no_finite_values():
    cfg = PsoConfig(bounds=(0.0, 1.0), n_particles=3, n_iterations=2, rng_seed=13)
    result = maximize(lambda x: float("nan"), cfg)
    assert result.best_value == -math.inf
    assert 0.0 <= result.best_position <= 1.0


def test_maximize_parallel_evaluation_matches_serial():
    cfg = PsoConfig(bounds=(0.0, 10.0), n_particles=6, n_iterations=10, rng_seed=17)
    serial = maximize(quadratic, cfg, n_workers=1)
    parallel = maximize(quadratic, cfg, n_workers=4)
    assert serial.trace == parallel.trace
    assert serial.best_position == parallel.best_position


# --- trace -------------------------------------------------------------------


def test_trace_rows_are_consistent_with_result(tmp_path):
    cfg = PsoConfig(bounds=(0.0, 10.0), n_particles=3, n_iterations=4, rng_seed=19)
    result = maximize(quadratic, cfg)
    assert len(result.trace) == 3 * 5
    for row in result.trace:
        assert abs(row.objective - quadratic(row.position)) < 1e-12
    assert result.trace[-1].global_best == result.best_value

    path = tmp_path / "trace.csv"
    write_trace_csv(result.trace, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "particle", "position", "velocity", "objective", "global_best"]
    assert len(rows) == 1 + len(result.trace)
    parsed = rows[1 + 7]
    original = result.trace[7]
    assert int(parsed[0]) == original.iteration
    assert int(parsed[1]) == original.particle
    assert float(parsed[2]) == original.position
    assert float(parsed[5]) == original.global_best
