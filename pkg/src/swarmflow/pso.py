"""Particle swarm maximization over a bounded one-dimensional search space.

Three velocity rules are supported:

* ``original``    v' = v + t1*r1*(lbest - x) + t2*r2*(gbest - x)
* ``inertia``     same, with the previous-velocity term scaled by a weight
                  that decays linearly from w_max to w_min over the run
* ``constriction`` the whole updated velocity scaled by the factor
                  K = 2 / |4 - phi - sqrt(phi^2 - 4*phi)|, phi = t1 + t2 > 4

The constriction denominator is also available in the conventional
``2 - phi`` form behind ``constriction_form="standard"``; the default keeps
the ``4 - phi`` variant this pipeline was specified with. An optional hard
velocity clamp |v| <= v_max applies after any rule.

The search maximizes: local and global bests improve on strict objective
increase, and the global best never decreases. Objective evaluations inside
one iteration are independent (and may run on worker threads); best-updates
are merged in particle-index order, so runs are deterministic under the
configured seed regardless of worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

VARIANTS = ("original", "inertia", "constriction")
CONSTRICTION_FORMS = ("as_printed", "standard")


@dataclass
class Particle:
    position: float
    velocity: float
    best_position: float
    best_value: float


@dataclass
class Swarm:
    particles: list[Particle]
    global_best_position: float | None
    global_best_value: float
    iteration: int
    n_iterations: int


@dataclass(frozen=True)
class PsoConfig:
    bounds: tuple[float, float]
    n_particles: int = 6
    n_iterations: int = 4
    theta1: float = 2.0
    theta2: float = 2.0
    variant: str = "inertia"
    w_max: float = 0.9
    w_min: float = 0.4
    v_max: float | None = None
    constriction_form: str = "as_printed"
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ConfigError(f"bounds must satisfy lo < hi, got {self.bounds}")
        if self.n_particles < 1:
            raise ConfigError("n_particles must be at least 1")
        if self.n_iterations < 0:
            raise ConfigError("n_iterations must be nonnegative")
        if self.theta1 <= 0 or self.theta2 <= 0:
            raise ConfigError("theta1 and theta2 must be strictly positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.w_max < self.w_min:
            raise ConfigError(f"w_max {self.w_max} must be >= w_min {self.w_min}")
        if self.v_max is not None and self.v_max <= 0:
            raise ConfigError("v_max must be strictly positive when set")
        if self.constriction_form not in CONSTRICTION_FORMS:
            raise ConfigError(
                f"constriction_form must be one of {CONSTRICTION_FORMS}, "
                f"got {self.constriction_form!r}"
            )
        if self.variant == "constriction" and self.theta1 + self.theta2 <= 4.0:
            raise ConfigError(
                "constriction variant requires theta1 + theta2 > 4, "
                f"got {self.theta1} + {self.theta2}"
            )


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    particle: int
    position: float
    velocity: float
    objective: float
    global_best: float


@dataclass
class PsoResult:
    best_position: float
    best_value: float
    trace: list[TraceRow]
    swarm: Swarm
    n_evaluations: int

    def global_best_history(self) -> list[float]:
        """Global best value at the end of each iteration (index 0 = init)."""
        history: list[float] = []
        for row in self.trace:
            if row.iteration == len(history):
                history.append(row.global_best)
            else:
                history[row.iteration] = row.global_best
        return history


def inertia_at(i: int, i_max: int, w_max: float, w_min: float) -> float:
    """Linearly decaying inertia weight: w_max at i=0 down to w_min at i=i_max."""
    if i_max < 1:
        raise ConfigError(f"i_max must be at least 1, got {i_max}")
    if w_max < w_min:
        raise ConfigError(f"w_max {w_max} must be >= w_min {w_min}")
    if not 0 <= i <= i_max:
        raise ConfigError(f"iteration index {i} outside [0, {i_max}]")
    return w_max - (i / i_max) * (w_max - w_min)


def constriction_factor(theta1: float, theta2: float, form: str = "as_printed") -> float:
    """Velocity damping factor for phi = theta1 + theta2 > 4.

    ``as_printed`` uses 2/|4 - phi - sqrt(phi^2 - 4 phi)|; ``standard`` uses
    the conventional 2/|2 - phi - sqrt(phi^2 - 4 phi)| denominator.
    """
    phi = theta1 + theta2
    if phi <= 4.0:
        raise ConfigError(f"constriction requires theta1 + theta2 > 4, got phi={phi}")
    disc = math.sqrt(phi * phi - 4.0 * phi)
    if form == "as_printed":
        return 2.0 / abs(4.0 - phi - disc)
    if form == "standard":
        return 2.0 / abs(2.0 - phi - disc)
    raise ConfigError(f"unknown constriction form {form!r}")


def update_velocity(
    p: Particle,
    gbest_position: float,
    cfg: PsoConfig,
    r1: float,
    r2: float,
    iteration: int = 0,
) -> float:
    """New velocity from the previous one plus local/global attraction.

    `iteration` is the zero-based index used by the inertia schedule; the
    other variants ignore it. A configured v_max clamps the result.
    """
    cognitive = cfg.theta1 * r1 * (p.best_position - p.position)
    social = cfg.theta2 * r2 * (gbest_position - p.position)
    if cfg.variant == "inertia":
        w = inertia_at(iteration, max(cfg.n_iterations, 1), cfg.w_max, cfg.w_min)
        v = w * p.velocity + cognitive + social
    elif cfg.variant == "constriction":
        k = constriction_factor(cfg.theta1, cfg.theta2, cfg.constriction_form)
        v = k * (p.velocity + cognitive + social)
    else:
        v = p.velocity + cognitive + social
    if cfg.v_max is not None:
        v = max(-cfg.v_max, min(cfg.v_max, v))
    return v


def update_position(x: float, v_next: float, bounds: tuple[float, float]) -> float:
    """Move by the new velocity, clamping to the violated bound."""
    lo, hi = bounds
    return max(lo, min(hi, x + v_next))


def _safe_value(objective: Callable[[float], float], x: float) -> float:
    value = float(objective(x))
    return value if math.isfinite(value) else -math.inf


def maximize(
    objective: Callable[[float], float],
    cfg: PsoConfig,
    initial_positions: Sequence[float] | None = None,
    n_workers: int = 1,
) -> PsoResult:
    """Run the swarm and return the best position/value found.

    Particles start uniformly at random inside the bounds with zero velocity
    and their initial position as local best; the global best starts at
    -infinity and is improved by objective-value comparison, first from the
    initial evaluations and then once per particle per iteration. Non-finite
    objective values count as -infinity. `initial_positions` optionally pins
    the first particles' starting positions (used by the tuner to seed the
    incumbent hyperparameter value); the same number of random draws is
    consumed either way, so the remaining particles are unaffected.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    lo, hi = cfg.bounds
    positions = rng.uniform(lo, hi, size=cfg.n_particles)
    if initial_positions is not None:
        if len(initial_positions) > cfg.n_particles:
            raise ConfigError("more initial positions than particles")
        for i, x in enumerate(initial_positions):
            if not lo <= x <= hi:
                raise ConfigError(f"initial position {x} outside bounds [{lo}, {hi}]")
            positions[i] = x

    def evaluate(xs: list[float]) -> list[float]:
        if n_workers > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                return list(pool.map(lambda x: _safe_value(objective, x), xs))
        return [_safe_value(objective, x) for x in xs]

    values = evaluate([float(x) for x in positions])
    particles = [
        Particle(position=float(x), velocity=0.0, best_position=float(x), best_value=v)
        for x, v in zip(positions, values)
    ]
    swarm = Swarm(
        particles=particles,
        global_best_position=None,
        global_best_value=-math.inf,
        iteration=0,
        n_iterations=cfg.n_iterations,
    )
    trace: list[TraceRow] = []
    n_evaluations = 0

    def fold(iteration: int, new_values: list[float]) -> None:
        nonlocal n_evaluations
        for i, p in enumerate(swarm.particles):
            value = new_values[i]
            n_evaluations += 1
            if value > p.best_value:
                p.best_value = value
                p.best_position = p.position
            if value > swarm.global_best_value:
                swarm.global_best_value = value
                swarm.global_best_position = p.position
            trace.append(
                TraceRow(
                    iteration=iteration,
                    particle=i,
                    position=p.position,
                    velocity=p.velocity,
                    objective=value,
                    global_best=swarm.global_best_value,
                )
            )

    fold(0, values)

    for t in range(1, cfg.n_iterations + 1):
        swarm.iteration = t
        draws = rng.random((cfg.n_particles, 2))
        for i, p in enumerate(swarm.particles):
            # All particles in an iteration see the same global best; falls
            # back to the local best if every value so far was non-finite.
            gbest = swarm.global_best_position
            if gbest is None:
                gbest = p.best_position
            v = update_velocity(p, gbest, cfg, draws[i, 0], draws[i, 1], iteration=t - 1)
            p.velocity = v
            p.position = update_position(p.position, v, cfg.bounds)
        fold(t, evaluate([p.position for p in swarm.particles]))

    best_pos = swarm.global_best_position
    if best_pos is None:
        best_pos = swarm.particles[0].best_position
    return PsoResult(
        best_position=best_pos,
        best_value=swarm.global_best_value,
        trace=trace,
        swarm=swarm,
        n_evaluations=n_evaluations,
    )


def write_trace_csv(trace: Sequence[TraceRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "particle", "position", "velocity", "objective", "global_best"])
        for row in trace:
            writer.writerow(
                [row.iteration, row.particle, repr(row.position), repr(row.velocity),
                 repr(row.objective), repr(row.global_best)]
            )
