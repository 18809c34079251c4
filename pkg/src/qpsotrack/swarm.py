"""2-D swarm optimizers: quantum-behaved (QPSO) and inertia-weight PSO.

Both minimize a caller-supplied fitness over a rectangular search space.
QPSO replaces velocity integration with an exponential-tailed jump around a
per-particle attractor blending its personal best with the swarm best,

    attractor = phi * pbest + (1 - phi) * gbest
    x' = attractor -/+ beta * |mbest - x| * ln(1/u)

where mbest is the mean of all personal bests, (phi, u) are uniform draws,
and the jump direction flips on a third draw K. One (phi, u, K) triple is
drawn per particle per iteration and shared across both coordinates, which
keeps the jump isotropic along the mbest - x direction.

Every particle owns an independent counter-based random stream (Philox,
split from one seed), so trajectories are identical whether fitness
evaluations run sequentially or concurrently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .geometry import Point2, Rect
from .parallel import ordered_map

Fitness = Callable[[Point2], float]


class SwarmRng:
    """Counter-based (Philox) randomness for one swarm.

    ``swarm`` drives swarm-level draws (initial positions, straggler
    re-seeding). ``block(k)`` yields one (n, k) uniform block per iteration;
    row i is particle i's private draw stream for that iteration, so the
    values a particle sees never depend on evaluation order or on how many
    other particles moved. That is what keeps concurrent fitness evaluation
    deterministic.
    """

    def __init__(self, seed: Union[int, Sequence[int]], n_particles: int):
        root = np.random.SeedSequence(seed)
        swarm_ss, block_ss = root.spawn(2)
        self.swarm = np.random.Generator(np.random.Philox(swarm_ss))
        self._blocks = np.random.Generator(np.random.Philox(block_ss))
        self.n = n_particles

    def block(self, k: int) -> np.ndarray:
        """Uniform [0, 1) draws of shape (n_particles, k), one row per particle."""
        return self._blocks.random((self.n, k))

    def __len__(self) -> int:
        return self.n


@dataclass
class Particle:
    position: Point2
    velocity: Point2
    pbest: Point2
    pbest_value: float
    value: float  # fitness at the current position, +inf until evaluated


@dataclass
class Swarm:
    particles: list[Particle]
    bounds: Rect
    gbest: Point2
    gbest_value: float
    iteration: int = 0

    def __len__(self) -> int:
        return len(self.particles)


@dataclass(frozen=True)
class QpsoParams:
    """Contraction-expansion schedule and run limits for QPSO."""

    beta_start: float = 1.0
    beta_end: float = 0.5
    max_iters: int = 100
    target_fitness: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (self.beta_start >= self.beta_end > 0):
            raise ValueError(
                f"need beta_start >= beta_end > 0, got {self.beta_start}, {self.beta_end}"
            )
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class PsoParams:
    """Inertia-weight PSO coefficients and run limits."""

    w: float = 0.72
    c1: float = 1.49
    c2: float = 1.49
    v_max: float = 10.0
    max_iters: int = 100
    target_fitness: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0 < self.w <= 1):
            raise ValueError(f"inertia weight must be in (0, 1], got {self.w}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError(f"learning rates must be positive, got {self.c1}, {self.c2}")
        if self.v_max <= 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


def beta_schedule(params: QpsoParams, iteration: int) -> float:
    """Linear interpolation beta_start -> beta_end over the run."""
    if params.max_iters == 1:
        return params.beta_start
    t = min(max(iteration, 0), params.max_iters - 1) / (params.max_iters - 1)
    return params.beta_start + (params.beta_end - params.beta_start) * t


def _evaluate(fitness: Fitness, positions: Sequence[Point2], parallel: bool) -> list[float]:
    values = ordered_map(fitness, positions, parallel)
    for i, v in enumerate(values):
        if not math.isfinite(v):
            raise ValueError(f"fitness returned non-finite value {v!r} at particle {i}")
    return [float(v) for v in values]


def init_swarm(
    size: int,
    bounds: Rect,
    seed: Union[int, Sequence[int]],
    fitness: Fitness | None = None,
    parallel: bool = False,
) -> Swarm:
    """Create a swarm with positions i.i.d. uniform over the bounds.

    Personal bests start at the initial positions with zero velocities. When
    a fitness is supplied, one evaluation pass seeds the best values and the
    swarm best; otherwise values start at +inf and the first particle's
    position stands in as the swarm best until the first step.
    """
    if size < 1:
        raise ValueError(f"swarm size must be >= 1, got {size}")
    rng = SwarmRng(seed, size)
    particles = []
    for _ in range(size):
        x = rng.swarm.uniform(bounds.x_min, bounds.x_max)
        y = rng.swarm.uniform(bounds.y_min, bounds.y_max)
        p = Point2(float(x), float(y))
        particles.append(Particle(p, Point2(0.0, 0.0), p, math.inf, math.inf))
    swarm = Swarm(particles, bounds, particles[0].position, math.inf)
    if fitness is not None:
        refresh_bests(swarm, fitness, parallel=parallel)
    return swarm


def refresh_bests(swarm: Swarm, fitness: Fitness, parallel: bool = False) -> None:
    """Re-seed personal/global bests from current positions under ``fitness``.

    Used at initialization and whenever the objective changes under a warm-
    started swarm (stale best values would no longer equal the fitness at
    their positions).
    """
    values = _evaluate(fitness, [p.position for p in swarm.particles], parallel)
    for particle, v in zip(swarm.particles, values):
        particle.value = v
        particle.pbest = particle.position
        particle.pbest_value = v
    best = min(range(len(values)), key=lambda i: values[i])
    swarm.gbest = swarm.particles[best].pbest
    swarm.gbest_value = values[best]


def compute_mbest(swarm: Swarm) -> Point2:
    """Mean of all personal-best positions (the mean best of the population)."""
    if not swarm.particles:
        raise ValueError("empty swarm")
    n = len(swarm.particles)
    return Point2(
        sum(p.pbest.x for p in swarm.particles) / n,
        sum(p.pbest.y for p in swarm.particles) / n,
    )


def quantum_jump(
    attractor: Point2, x: Point2, mbest: Point2, beta: float, u: float, k_draw: float
) -> Point2:
    """One QPSO position update given the particle's random triple.

    The jump magnitude per coordinate is beta * |mbest - x| * ln(1/u); the
    sign is negative when k_draw >= 0.5 and positive otherwise.
    """
    lnu = math.log(1.0 / u)
    sign = -1.0 if k_draw >= 0.5 else 1.0
    return Point2(
        attractor.x + sign * beta * abs(mbest.x - x.x) * lnu,
        attractor.y + sign * beta * abs(mbest.y - x.y) * lnu,
    )


def _fold_bests(swarm: Swarm) -> None:
    """Deterministic sequential pbest/gbest reduction by particle index."""
    for particle in swarm.particles:
        if particle.value < particle.pbest_value:
            particle.pbest = particle.position
            particle.pbest_value = particle.value
    for particle in swarm.particles:
        if particle.pbest_value < swarm.gbest_value:
            swarm.gbest = particle.pbest
            swarm.gbest_value = particle.pbest_value


def qpso_step(
    swarm: Swarm,
    fitness: Fitness,
    beta: float,
    rng: SwarmRng,
    parallel: bool = False,
    active: Sequence[bool] | None = None,
) -> Swarm:
    """Advance every particle one QPSO iteration and update the bests.

    With an ``active`` mask, inactive particles neither move nor re-evaluate
    (the tracker freezes particles once they are accepted); they still
    contribute to the mean best and the gbest reduction.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    mbest = compute_mbest(swarm)
    gbest = swarm.gbest
    draws = rng.block(3)
    moved = []
    for i, particle in enumerate(swarm.particles):
        if active is not None and not active[i]:
            continue
        phi = float(draws[i, 0])
        u = 1.0 - float(draws[i, 1])  # in (0, 1]: keeps ln(1/u) finite
        k_draw = float(draws[i, 2])
        attractor = Point2(
            phi * particle.pbest.x + (1.0 - phi) * gbest.x,
            phi * particle.pbest.y + (1.0 - phi) * gbest.y,
        )
        particle.position = swarm.bounds.clamp(
            quantum_jump(attractor, particle.position, mbest, beta, u, k_draw)
        )
        moved.append(i)
    values = _evaluate(fitness, [swarm.particles[i].position for i in moved], parallel)
    for i, v in zip(moved, values):
        swarm.particles[i].value = v
    _fold_bests(swarm)
    swarm.iteration += 1
    return swarm


def pso_step(
    swarm: Swarm,
    fitness: Fitness,
    params: PsoParams,
    rng: SwarmRng,
    parallel: bool = False,
    active: Sequence[bool] | None = None,
) -> Swarm:
    """Advance every particle one inertia-weight PSO iteration."""
    gbest = swarm.gbest
    draws = rng.block(4)  # per particle: R1x, R1y, R2x, R2y
    moved = []
    for i, particle in enumerate(swarm.particles):
        if active is not None and not active[i]:
            continue
        vx = (
            params.w * particle.velocity.x
            + params.c1 * float(draws[i, 0]) * (particle.pbest.x - particle.position.x)
            + params.c2 * float(draws[i, 2]) * (gbest.x - particle.position.x)
        )
        vy = (
            params.w * particle.velocity.y
            + params.c1 * float(draws[i, 1]) * (particle.pbest.y - particle.position.y)
            + params.c2 * float(draws[i, 3]) * (gbest.y - particle.position.y)
        )
        vx = min(max(vx, -params.v_max), params.v_max)
        vy = min(max(vy, -params.v_max), params.v_max)
        particle.velocity = Point2(vx, vy)
        particle.position = swarm.bounds.clamp(
            Point2(particle.position.x + vx, particle.position.y + vy)
        )
        moved.append(i)
    values = _evaluate(fitness, [swarm.particles[i].position for i in moved], parallel)
    for i, v in zip(moved, values):
        swarm.particles[i].value = v
    _fold_bests(swarm)
    swarm.iteration += 1
    return swarm


def run_to_convergence(
    swarm: Swarm,
    fitness: Fitness,
    params: Union[QpsoParams, PsoParams],
    rng: SwarmRng | None = None,
    parallel: bool = False,
) -> tuple[Swarm, int, bool]:
    """Iterate the matching step until the swarm best meets the target.

    Returns (swarm, iterations used, converged). The QPSO contraction
    coefficient interpolates linearly from beta_start to beta_end across the
    permitted iterations.
    """
    if rng is None:
        rng = SwarmRng(params.seed, len(swarm.particles))
    if swarm.gbest_value == math.inf:
        refresh_bests(swarm, fitness, parallel=parallel)
    iters_used = 0
    converged = False
    for t in range(params.max_iters):
        if isinstance(params, QpsoParams):
            qpso_step(swarm, fitness, beta_schedule(params, t), rng, parallel=parallel)
        else:
            pso_step(swarm, fitness, params, rng, parallel=parallel)
        iters_used = t + 1
        if swarm.gbest_value <= params.target_fitness:
            converged = True
            break
    return swarm, iters_used, converged
