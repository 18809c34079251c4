"""Per-frame tracking pipeline.

Dominant points found on the target's contour are paired into curvature
segments; one swarm per segment minimizes the perpendicular distance of its
particles to the segment's line. Between frames the dominant points ride
Lucas-Kanade flow, swarms re-converge onto the moved lines, stragglers are
re-seeded between the best particles, and the emitted bounding box is built
from trimmed means of the accepted particles' coordinates.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .contour import (
    DominantPointSet,
    _max_k_score,
    eliminate_linear,
    select_dominant,
    trace_boundary,
)
from .flow import track_points
from .geometry import Point2, Rect
from .image import GrayImage
from .parallel import ordered_map
from .swarm import (
    PsoParams,
    QpsoParams,
    Swarm,
    SwarmRng,
    beta_schedule,
    init_swarm,
    pso_step,
    qpso_step,
    refresh_bests,
)

logger = logging.getLogger(__name__)

# salts separating the seed streams of unrelated random decisions
_SALT_INIT = 101
_SALT_RUN = 202


class TrackingLostError(RuntimeError):
    """Raised when every swarm is dead and re-detection failed.

    Carries the last good bounding box so callers can keep partial output.
    """

    def __init__(self, message: str, last_box: "BoundingBox"):
        super().__init__(message)
        self.last_box = last_box


@dataclass(frozen=True)
class CurvatureSegment:
    """The line segment joining two paired dominant points."""

    d1: Point2
    d2: Point2

    def __post_init__(self) -> None:
        if self.d1.x == self.d2.x and self.d1.y == self.d2.y:
            raise ValueError(f"degenerate segment: both endpoints at ({self.d1.x}, {self.d1.y})")


def segment_length(seg: CurvatureSegment) -> float:
    """Euclidean distance between the segment endpoints."""
    return seg.d1.dist(seg.d2)


def perp_dist(seg: CurvatureSegment, p: Point2) -> float:
    """Distance from p to the infinite line through the segment endpoints.

    Twice the triangle area over the base length:
    |(y2-y1)*x0 - (x2-x1)*y0 + x2*y1 - y2*x1| / |d1 d2|.
    """
    x1, y1 = seg.d1.x, seg.d1.y
    x2, y2 = seg.d2.x, seg.d2.y
    num = abs((y2 - y1) * p.x - (x2 - x1) * p.y + x2 * y1 - y2 * x1)
    return num / segment_length(seg)


def segment_dist(seg: CurvatureSegment, p: Point2) -> float:
    """Distance from p to the segment itself (projection clamped to the endpoints)."""
    dx = seg.d2.x - seg.d1.x
    dy = seg.d2.y - seg.d1.y
    rel_x = p.x - seg.d1.x
    rel_y = p.y - seg.d1.y
    t = (rel_x * dx + rel_y * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    ox = rel_x - t * dx
    oy = rel_y - t * dy
    # sqrt form (not hypot): IEEE-exact, so the vectorized twin in
    # _seg_dist_batch produces bit-identical values
    return math.sqrt(ox * ox + oy * oy)


def curvature_fitness(seg: CurvatureSegment):
    """Fitness closure for one segment: particle -> distance to the curvature.

    This is the clipped-segment distance, not the infinite-line distance of
    perp_dist: particles accepted on the line's extensions beyond the
    dominant points lie off the object and wreck the bounding box, so the
    acceptance region is the capsule around the segment. On the segment's
    interior band the two distances agree exactly.
    """

    def fitness(p: Point2) -> float:
        return segment_dist(seg, p)

    return fitness


def pair_segments(
    points: Sequence[Point2],
) -> tuple[list[CurvatureSegment], Optional[Point2]]:
    """Pair dominant points into consecutive disjoint segments.

    Returns (segments, unpaired leftover). Degenerate pairs (coincident
    endpoints) are dropped with a warning; an odd trailing point is returned
    unpaired rather than silently dropped.
    """
    if len(points) < 2:
        raise ValueError(f"need at least 2 dominant points to pair, got {len(points)}")
    segments = []
    for i in range(0, len(points) - 1, 2):
        d1, d2 = points[i], points[i + 1]
        if d1.x == d2.x and d1.y == d2.y:
            logger.warning("dropping degenerate segment pair at (%s, %s)", d1.x, d1.y)
            continue
        segments.append(CurvatureSegment(d1, d2))
    leftover = points[-1] if len(points) % 2 == 1 else None
    return segments, leftover


def reinit_particle(swarm: Swarm, i: int, rng: np.random.Generator) -> Point2:
    """Draw a fresh position for a straggling particle.

    The new coordinates fall uniformly between the coordinates of the two
    distinct best other particles (by personal-best value; ties resolved by
    scanning outward from the neighbors of i, then by lower index). Swarms
    smaller than 3, and swarms collapsed onto a single position (where no
    two distinct candidates exist and the spanned range would be a point),
    fall back to a uniform draw over the bounds.
    """

    def uniform_over_bounds() -> Point2:
        return Point2(
            float(rng.uniform(swarm.bounds.x_min, swarm.bounds.x_max)),
            float(rng.uniform(swarm.bounds.y_min, swarm.bounds.y_max)),
        )

    n = len(swarm.particles)
    if n < 3:
        return uniform_over_bounds()
    others = [j for j in range(n) if j != i]
    others.sort(key=lambda j: (swarm.particles[j].pbest_value, abs(j - i), j))
    a = swarm.particles[others[0]].position
    b = None
    for j in others[1:]:
        cand = swarm.particles[j].position
        if cand.x != a.x or cand.y != a.y:
            b = cand
            break
    # a swarm collapsed onto (nearly) one point spans no useful range;
    # re-scattering inside a sub-pixel rectangle cannot restore diversity
    if b is None or max(abs(a.x - b.x), abs(a.y - b.y)) < 1.0:
        return uniform_over_bounds()
    x_lo, x_hi = min(a.x, b.x), max(a.x, b.x)
    y_lo, y_hi = min(a.y, b.y), max(a.y, b.y)
    return Point2(float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi)))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box anchored at q = (x, y) with x-extent breadth, y-extent length."""

    x: float
    y: float
    breadth: float
    length: float

    def corners(self) -> tuple[Point2, Point2, Point2, Point2]:
        """(q, ql, qb, qlb): anchor, below-anchor, right-of-anchor, opposite."""
        return (
            Point2(self.x, self.y),
            Point2(self.x, self.y + self.length),
            Point2(self.x + self.breadth, self.y),
            Point2(self.x + self.breadth, self.y + self.length),
        )

    def as_xyxy(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.breadth, self.y + self.length)


def bounding_box(
    accepted: Sequence[Point2], p: int = 10, image: Optional[Rect] = None
) -> BoundingBox:
    """Box from trimmed means of the accepted particles' extreme coordinates.

    The anchor averages the p smallest x (resp. y) coordinates and rounds
    up; breadth/length stretch to the averages of the p largest. p is
    clamped to the particle count; extents never go negative; the box is
    clamped into the image rectangle when one is given.
    """
    if len(accepted) < 1:
        raise ValueError("bounding box needs at least 1 accepted particle")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    k = min(p, len(accepted))
    xs = sorted(pt.x for pt in accepted)
    ys = sorted(pt.y for pt in accepted)
    x_lo = sum(xs[:k]) / k
    y_lo = sum(ys[:k]) / k
    x_hi = sum(xs[-k:]) / k
    y_hi = sum(ys[-k:]) / k
    qx = float(math.ceil(x_lo))
    qy = float(math.ceil(y_lo))
    breadth = max(0.0, x_hi - qx)
    length = max(0.0, y_hi - qy)
    if image is not None:
        x0 = min(max(qx, image.x_min), image.x_max)
        y0 = min(max(qy, image.y_min), image.y_max)
        x1 = min(max(qx + breadth, image.x_min), image.x_max)
        y1 = min(max(qy + length, image.y_min), image.y_max)
        qx, qy, breadth, length = x0, y0, x1 - x0, y1 - y0
    return BoundingBox(qx, qy, breadth, length)


@dataclass(frozen=True)
class TrackerConfig:
    """Pipeline settings; swarm/group sizes default by background mode."""

    background: str = "static"  # static | variable
    swarm_size: int = 0  # 0 -> 7 static / 10 variable
    group_size: int = 0  # 0 -> 5 static / 10 variable
    fitness_epsilon: float = 2.0
    max_iters: int = 100  # per-frame iteration cap per swarm
    patience: int = 10  # iterations without acceptance before reinit
    bbox_p: int = 10
    seed: int = 0
    optimizer: str = "qpso"  # qpso | pso
    pairing: str = "overlapping"  # overlapping | disjoint
    # fresh random particles each frame (warm starts lose perpendicular
    # diversity once a swarm collapses onto a line and cannot re-acquire it)
    warm_start: bool = False
    parallel: bool = False
    beta_start: float = 1.0
    beta_end: float = 0.5
    # classic inertia-weight PSO baseline coefficients (original values)
    pso_w: float = 0.9
    pso_c: float = 2.0
    pso_v_max: float = 10.0
    klt_window: int = 15
    klt_max_iters: int = 10
    max_residual: float = 0.05  # KLT brightness-error gate (intensity^2)
    collect_trace: bool = False  # record per-iteration swarm-best rows for CSV dumps

    def __post_init__(self) -> None:
        if self.background not in ("static", "variable"):
            raise ValueError(f"unknown background mode {self.background!r}")
        if self.optimizer not in ("qpso", "pso"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.pairing not in ("overlapping", "disjoint"):
            raise ValueError(f"unknown pairing mode {self.pairing!r}")
        variable = self.background == "variable"
        if self.swarm_size == 0:
            object.__setattr__(self, "swarm_size", 10 if variable else 7)
        if self.group_size == 0:
            object.__setattr__(self, "group_size", 10 if variable else 5)
        if self.swarm_size < 2:
            raise ValueError(f"swarm size must be >= 2, got {self.swarm_size}")
        if self.fitness_epsilon <= 0:
            raise ValueError(f"fitness epsilon must be positive, got {self.fitness_epsilon}")
        if self.bbox_p < 1:
            raise ValueError(f"bbox_p must be >= 1, got {self.bbox_p}")
        if self.max_iters < 1:
            raise ValueError(f"per-frame max_iters must be >= 1, got {self.max_iters}")


@dataclass
class TrackedPoint:
    point: Point2
    score: float
    alive: bool = True


@dataclass
class SegmentSwarm:
    index: int  # segment id within the current detection epoch
    a: int  # dominant-point index of the first endpoint
    b: int  # dominant-point index of the second endpoint
    swarm: Swarm
    alive: bool = True
    streaks: list[int] = field(default_factory=list)
    iterations_last: int = 0
    # (iteration, gbest_value, gbest_x, gbest_y) rows from the last frame run
    trace_last: list[tuple[int, float, float, float]] = field(default_factory=list)


@dataclass
class TrackerState:
    points: list[TrackedPoint]
    swarms: list[SegmentSwarm]
    initial_segment_count: int  # C at the last (re)detection
    bounds: Rect  # the image rectangle; every swarm searches it
    last_box: BoundingBox
    anchor_box: BoundingBox  # last structurally sound box; re-detection searches here
    init_area: float = 0.0  # box area at first detection; the object's scale reference
    appearance_mean: float = 0.5  # mean target intensity at first detection
    frame_index: int = 0
    epoch: int = 0  # bumped on every re-detection
    unhealthy_streak: int = 0  # consecutive frames with a degenerate/implausible box
    last_iterations: int = 0  # summed over alive swarms, previous frame
    last_accepted: int = 0
    # (point index, dx, dy, kept, residual) per tracked point, previous frame
    last_flow: list[tuple[int, float, float, bool, float]] = field(default_factory=list)

    @property
    def alive_swarms(self) -> int:
        return sum(1 for s in self.swarms if s.alive)


def image_rect(img: GrayImage) -> Rect:
    return Rect(0.0, 0.0, float(img.width - 1), float(img.height - 1))


def _pair_indices(n: int, mode: str) -> list[tuple[int, int]]:
    if mode == "disjoint":
        return [(i, i + 1) for i in range(0, n - 1, 2)]
    pairs = [(i, i + 1) for i in range(n - 1)]
    if n >= 3:
        pairs.append((n - 1, 0))  # close the ring
    return pairs


def _dominant_points(mask: np.ndarray, config: TrackerConfig) -> DominantPointSet:
    trace = trace_boundary(mask)
    breaks = eliminate_linear(trace)
    dom = select_dominant(breaks, config.group_size)
    if len(dom) >= 2:
        return dom
    # Very clean contours (axis-aligned rectangles) leave fewer breakpoints
    # than one grouping window, starving the multi-swarm setup. Resample the
    # boundary itself at group-size spacing so segments tile the contour the
    # way a naturally rough outline would.
    k = max(config.group_size, 2)
    sampled = tuple(range(0, len(trace), k))
    if len(sampled) >= 2:
        points = tuple(trace.points[i] for i in sampled)
        scores = tuple(
            _max_k_score(points, i, max(config.group_size - 1, 1))
            for i in range(len(points))
        )
        return DominantPointSet(points=points, scores=scores, indices=sampled)
    if len(breaks) < 2:
        raise ValueError(
            f"contour yields only {len(breaks)} curvature points; cannot form segments"
        )
    scores = tuple(
        _max_k_score(breaks.points, i, max(config.group_size - 1, 1))
        for i in range(len(breaks))
    )
    return DominantPointSet(points=breaks.points, scores=scores, indices=breaks.indices)


def _build_state(
    frame: GrayImage, mask: np.ndarray, config: TrackerConfig, frame_index: int, epoch: int
) -> TrackerState:
    dom = _dominant_points(mask, config)
    points = [TrackedPoint(pt, sc) for pt, sc in zip(dom.points, dom.scores)]
    bounds = image_rect(frame)

    swarms = []
    seg_id = 0
    for a, b in _pair_indices(len(points), config.pairing):
        d1, d2 = points[a].point, points[b].point
        if d1.x == d2.x and d1.y == d2.y:
            logger.warning("skipping degenerate segment between coincident dominant points")
            continue
        seg = CurvatureSegment(d1, d2)
        swarm = init_swarm(
            config.swarm_size,
            bounds,
            seed=[config.seed & 0xFFFFFFFFFFFFFFFF, _SALT_INIT, epoch, seg_id],
            fitness=curvature_fitness(seg),
            parallel=False,
        )
        swarms.append(
            SegmentSwarm(seg_id, a, b, swarm, streaks=[0] * config.swarm_size)
        )
        seg_id += 1
    if not swarms:
        raise ValueError("no usable curvature segments (all dominant-point pairs degenerate)")

    state = TrackerState(
        points=points,
        swarms=swarms,
        initial_segment_count=len(swarms),
        bounds=bounds,
        last_box=BoundingBox(0.0, 0.0, 0.0, 0.0),
        anchor_box=BoundingBox(0.0, 0.0, 0.0, 0.0),
        frame_index=frame_index,
        epoch=epoch,
    )
    _converge_all(state, config)
    state.last_box = _emit_box(state, config)
    state.anchor_box = state.last_box
    state.init_area = state.last_box.breadth * state.last_box.length
    state.appearance_mean = float(frame.data[mask].mean())
    return state


def init_tracker(frame: GrayImage, mask: np.ndarray, config: TrackerConfig) -> TrackerState:
    """Detect the target in the first frame and converge the initial swarms."""
    return _build_state(frame, mask, config, frame_index=0, epoch=0)


def _segment_of(state: TrackerState, sw: SegmentSwarm) -> Optional[CurvatureSegment]:
    d1 = state.points[sw.a].point
    d2 = state.points[sw.b].point
    if d1.x == d2.x and d1.y == d2.y:
        return None
    return CurvatureSegment(d1, d2)


def _run_seed_key(state: TrackerState, sw: SegmentSwarm, config: TrackerConfig) -> list[int]:
    return [
        config.seed & 0xFFFFFFFFFFFFFFFF,
        _SALT_RUN,
        state.epoch,
        state.frame_index,
        sw.index,
    ]


def _converge_swarm(
    state: TrackerState,
    sw: SegmentSwarm,
    seg: CurvatureSegment,
    config: TrackerConfig,
    inner_parallel: bool,
) -> None:
    """Run one swarm for one frame: converge all particles into the fitness slab.

    Stops as soon as every particle's current fitness is below epsilon (so a
    still-converged swarm on a zero-motion frame uses 0 iterations), or at
    the per-frame cap. Under QPSO, accepted particles freeze and straggling
    particles past the patience limit are re-seeded between the best
    particles' coordinates; the basic PSO baseline runs the plain update.
    """
    fitness = curvature_fitness(seg)
    eps = config.fitness_epsilon
    size = len(sw.swarm.particles)

    seed_key = _run_seed_key(state, sw, config)
    if config.warm_start:
        refresh_bests(sw.swarm, fitness, parallel=inner_parallel)
    else:
        sw.swarm = init_swarm(
            size, state.bounds, seed=seed_key + [1], fitness=fitness, parallel=inner_parallel
        )
    rng = SwarmRng(seed_key, size)
    sw.streaks = [0] * size

    qpso_params = QpsoParams(
        beta_start=config.beta_start, beta_end=config.beta_end, max_iters=config.max_iters
    )
    pso_params = PsoParams(
        w=config.pso_w,
        c1=config.pso_c,
        c2=config.pso_c,
        v_max=config.pso_v_max,
        max_iters=config.max_iters,
    )

    iters = 0
    sw.trace_last = []
    for t in range(config.max_iters):
        if config.optimizer == "qpso":
            # accepted particles freeze where they entered the slab; only
            # the stragglers keep iterating (keeps the converged set spread
            # along the curvature instead of collapsing onto gbest)
            active = [p.value >= eps for p in sw.swarm.particles]
            if not any(active):
                break
            qpso_step(
                sw.swarm,
                fitness,
                beta_schedule(qpso_params, t),
                rng,
                parallel=inner_parallel,
                active=active,
            )
        else:
            # basic PSO baseline: the whole population keeps integrating
            # velocities until everyone sits inside the slab at once
            if all(p.value < eps for p in sw.swarm.particles):
                break
            pso_step(sw.swarm, fitness, pso_params, rng, parallel=inner_parallel)
        iters = t + 1
        if config.collect_trace:
            sw.trace_last.append(
                (sw.swarm.iteration, sw.swarm.gbest_value, sw.swarm.gbest.x, sw.swarm.gbest.y)
            )
        if config.optimizer != "qpso":
            continue
        for i, particle in enumerate(sw.swarm.particles):
            if particle.value < eps:
                sw.streaks[i] = 0
            else:
                sw.streaks[i] += 1
                if sw.streaks[i] > config.patience:
                    pos = reinit_particle(sw.swarm, i, rng.swarm)
                    particle.position = pos
                    particle.pbest = pos
                    particle.pbest_value = particle.value = fitness(pos)
                    sw.streaks[i] = 0
    sw.iterations_last = iters


def _seg_dist_batch(d1: np.ndarray, seg_vec: np.ndarray, seg_len2: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Clipped-segment distances for positions (C, N, 2) against C segments."""
    rel = pos - d1[:, None, :]
    t = (rel[..., 0] * seg_vec[:, None, 0] + rel[..., 1] * seg_vec[:, None, 1]) / seg_len2[:, None]
    t = np.clip(t, 0.0, 1.0)
    dx = rel[..., 0] - t * seg_vec[:, None, 0]
    dy = rel[..., 1] - t * seg_vec[:, None, 1]
    return np.sqrt(dx * dx + dy * dy)


def _converge_frame_pso(
    state: TrackerState, runnable: list[tuple[SegmentSwarm, CurvatureSegment]], config: TrackerConfig
) -> None:
    """One frame of the basic-PSO baseline, all swarms stepping in lockstep.

    The baseline runs its full iteration budget almost every frame (basic
    PSO rarely parks an entire population inside the slab), so the update is
    vectorized over (swarm, particle). Per-swarm draws come from the same
    per-swarm block streams as the scalar step, keeping this exactly
    equivalent to running each swarm through pso_step on its own.
    """
    bounds = state.bounds
    n = config.swarm_size
    c = len(runnable)
    d1 = np.array([[seg.d1.x, seg.d1.y] for _, seg in runnable])
    d2 = np.array([[seg.d2.x, seg.d2.y] for _, seg in runnable])
    seg_vec = d2 - d1
    seg_len2 = (seg_vec**2).sum(axis=1)

    rngs = [SwarmRng(_run_seed_key(state, sw, config), n) for sw, _ in runnable]
    if config.warm_start:
        pos = np.array(
            [[[p.position.x, p.position.y] for p in sw.swarm.particles] for sw, _ in runnable]
        )
        vel = np.array(
            [[[p.velocity.x, p.velocity.y] for p in sw.swarm.particles] for sw, _ in runnable]
        )
    else:
        pos = np.empty((c, n, 2))
        for ci, (sw, _) in enumerate(runnable):
            init_rng = SwarmRng(_run_seed_key(state, sw, config) + [1], n)
            for i in range(n):
                pos[ci, i, 0] = init_rng.swarm.uniform(bounds.x_min, bounds.x_max)
                pos[ci, i, 1] = init_rng.swarm.uniform(bounds.y_min, bounds.y_max)
        vel = np.zeros((c, n, 2))

    lo = np.array([bounds.x_min, bounds.y_min])
    hi = np.array([bounds.x_max, bounds.y_max])
    vals = _seg_dist_batch(d1, seg_vec, seg_len2, pos)
    pbest = pos.copy()
    pbv = vals.copy()
    rows = np.arange(c)
    best_idx = pbv.argmin(axis=1)
    gbest = pbest[rows, best_idx].copy()
    gbv = pbv[rows, best_idx].copy()

    eps = config.fitness_epsilon
    w, cc, vmax = config.pso_w, config.pso_c, config.pso_v_max
    iters = np.zeros(c, dtype=int)
    done = np.zeros(c, dtype=bool)
    traces: list[list[tuple[int, float, float, float]]] = [[] for _ in range(c)]
    for t in range(config.max_iters):
        done |= (vals < eps).all(axis=1)
        run = ~done
        if not run.any():
            break
        draws = np.zeros((c, n, 4))
        for ci in np.nonzero(run)[0]:
            draws[ci] = rngs[ci].block(4)
        vel_new = (
            w * vel
            + cc * draws[..., 0:2] * (pbest - pos)
            + cc * draws[..., 2:4] * (gbest[:, None, :] - pos)
        )
        np.clip(vel_new, -vmax, vmax, out=vel_new)
        pos_new = np.clip(pos + vel_new, lo, hi)
        mask3 = run[:, None, None]
        vel = np.where(mask3, vel_new, vel)
        pos = np.where(mask3, pos_new, pos)
        vals = np.where(run[:, None], _seg_dist_batch(d1, seg_vec, seg_len2, pos), vals)
        improved = vals < pbv
        pbv = np.where(improved, vals, pbv)
        pbest = np.where(improved[..., None], pos, pbest)
        best_idx = pbv.argmin(axis=1)
        cand = pbv[rows, best_idx]
        upd = cand < gbv
        gbv = np.where(upd, cand, gbv)
        gbest = np.where(upd[:, None], pbest[rows, best_idx], gbest)
        iters[run] = t + 1
        if config.collect_trace:
            for ci in np.nonzero(run)[0]:
                sw = runnable[ci][0]
                traces[ci].append(
                    (
                        sw.swarm.iteration + int(iters[ci]),
                        float(gbv[ci]),
                        float(gbest[ci, 0]),
                        float(gbest[ci, 1]),
                    )
                )

    for ci, (sw, _) in enumerate(runnable):
        for i, particle in enumerate(sw.swarm.particles):
            particle.position = Point2(float(pos[ci, i, 0]), float(pos[ci, i, 1]))
            particle.velocity = Point2(float(vel[ci, i, 0]), float(vel[ci, i, 1]))
            particle.pbest = Point2(float(pbest[ci, i, 0]), float(pbest[ci, i, 1]))
            particle.pbest_value = float(pbv[ci, i])
            particle.value = float(vals[ci, i])
        sw.swarm.gbest = Point2(float(gbest[ci, 0]), float(gbest[ci, 1]))
        sw.swarm.gbest_value = float(gbv[ci])
        sw.swarm.iteration += int(iters[ci])
        sw.iterations_last = int(iters[ci])
        sw.trace_last = traces[ci]
        sw.streaks = [0] * n


def _converge_all(state: TrackerState, config: TrackerConfig) -> None:
    runnable = []
    for sw in state.swarms:
        if not sw.alive:
            continue
        seg = _segment_of(state, sw)
        if seg is None:
            sw.alive = False
            sw.iterations_last = 0
            continue
        runnable.append((sw, seg))
    if not runnable:
        state.last_iterations = 0
        return
    if config.optimizer == "pso":
        _converge_frame_pso(state, runnable, config)
    elif config.parallel and len(runnable) > 1:
        # swarms are mutually independent; fitness inside stays sequential
        ordered_map(
            lambda item: _converge_swarm(state, item[0], item[1], config, False),
            runnable,
            parallel=True,
        )
    else:
        for sw, seg in runnable:
            _converge_swarm(state, sw, seg, config, inner_parallel=config.parallel)
    state.last_iterations = sum(sw.iterations_last for sw, _ in runnable if sw.alive)


def accepted_particles(state: TrackerState, config: TrackerConfig) -> list[Point2]:
    """Positions of all particles currently inside their segment's slab."""
    out = []
    for sw in state.swarms:
        if not sw.alive:
            continue
        for particle in sw.swarm.particles:
            if particle.value < config.fitness_epsilon:
                out.append(particle.position)
    return out


def _emit_box(state: TrackerState, config: TrackerConfig) -> BoundingBox:
    accepted = accepted_particles(state, config)
    state.last_accepted = len(accepted)
    if not accepted:
        return state.last_box  # carry the last good box through a blind frame
    return bounding_box(accepted, config.bbox_p, state.bounds)


def otsu_threshold(values: np.ndarray) -> float:
    """Otsu's threshold over a sample of intensities in [0, 1]."""
    hist, edges = np.histogram(np.clip(values, 0.0, 1.0), bins=256, range=(0.0, 1.0))
    total = hist.sum()
    if total == 0:
        return 0.5
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight = hist.astype(np.float64)
    w0 = np.cumsum(weight)
    w1 = total - w0
    m0 = np.cumsum(weight * centers)
    total_mean = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (total_mean - m0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def _largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 8-connected foreground component."""
    from collections import deque

    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    sizes = [0]
    current = 0
    for sy, sx in zip(*np.nonzero(mask)):
        if labels[sy, sx]:
            continue
        current += 1
        sizes.append(0)
        queue = deque([(sy, sx)])
        labels[sy, sx] = current
        while queue:
            y, x = queue.popleft()
            sizes[current] += 1
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = current
                        queue.append((ny, nx))
    if current == 0:
        return mask
    return labels == int(np.argmax(sizes))


REDETECT_MIN_REGION = 16  # px: floor on each re-detection window dimension
UNHEALTHY_PATIENCE = 3  # consecutive degenerate-box frames before forced re-detection
APPEARANCE_TOL = 0.12  # max drift of a re-detected blob's mean intensity from the target's


def _update_box_health(state: TrackerState, box: BoundingBox) -> None:
    """Promote the box to the re-detection anchor only when it looks sound.

    A sound box has area comparable to the object's scale at initialization
    (the pipeline tracks rigid translation, so scale is a fixed reference):
    slivers from a lone surviving swarm and partial or clutter blobs must
    not drag the search window away from the target.
    """
    area = box.breadth * box.length
    lo = max(4.0, 0.45 * state.init_area)
    hi = max(48.0, 3.0 * state.init_area)
    if lo <= area <= hi:
        state.anchor_box = box
        state.unhealthy_streak = 0
    else:
        state.unhealthy_streak += 1


def redetect_region(
    frame: GrayImage, box: BoundingBox, extra: float = 0.0
) -> tuple[int, int, int, int]:
    """Inclusive pixel window (x0, y0, x1, y1) searched for the lost target.

    The last box dilated 10% per side, never smaller than
    REDETECT_MIN_REGION in either dimension (a collapsed box must still
    span a searchable window), clamped to the frame. ``extra`` widens both
    margins; callers escalate it while recovery keeps failing, since a
    target keeps moving while it is lost.
    """
    mx = max(0.1 * box.breadth, (REDETECT_MIN_REGION - box.breadth) / 2.0, 2.0) + extra
    my = max(0.1 * box.length, (REDETECT_MIN_REGION - box.length) / 2.0, 2.0) + extra
    x0 = int(max(0, math.floor(box.x - mx)))
    y0 = int(max(0, math.floor(box.y - my)))
    x1 = int(min(frame.width - 1, math.ceil(box.x + box.breadth + mx)))
    y1 = int(min(frame.height - 1, math.ceil(box.y + box.length + my)))
    return x0, y0, x1, y1


def redetect_mask(frame: GrayImage, box: BoundingBox, extra: float = 0.0) -> np.ndarray:
    """Re-derive an object mask by Otsu-thresholding inside the dilated box.

    The box grows 10% per side (2 px minimum so degenerate boxes can still
    recapture). The region's border ring is taken as background reference:
    the Otsu class whose mean differs more from the ring mean is the
    foreground, reduced to its largest connected component. (A center-patch
    heuristic fails when the object re-emerges offset from the stale box.)
    """
    x0, y0, x1, y1 = redetect_region(frame, box, extra)
    region = frame.data[y0 : y1 + 1, x0 : x1 + 1]
    if region.size == 0 or region.shape[0] < 3 or region.shape[1] < 3:
        raise ValueError("re-detection region is degenerate")
    thr = otsu_threshold(region.ravel())
    hi = region > thr
    ring = np.ones(region.shape, dtype=bool)
    ring[1:-1, 1:-1] = False
    ring_mean = float(region[ring].mean())
    hi_vals = region[hi]
    lo_vals = region[~hi]
    if hi_vals.size == 0 or lo_vals.size == 0:
        raise ValueError("re-detection region has no intensity contrast")
    fg_is_bright = abs(float(hi_vals.mean()) - ring_mean) >= abs(
        float(lo_vals.mean()) - ring_mean
    )
    local = _largest_component(hi if fg_is_bright else ~hi)
    mask = np.zeros((frame.height, frame.width), dtype=bool)
    mask[y0 : y1 + 1, x0 : x1 + 1] = local
    return mask


def advance_frame(
    state: TrackerState, prev: GrayImage, next_: GrayImage, config: TrackerConfig
) -> tuple[TrackerState, BoundingBox]:
    """Advance the tracker by one frame; returns the state and emitted box.

    The state is updated in place (single-writer) and returned for
    convenience. Raises TrackingLostError when no swarm survives and
    re-detection around the last box fails.
    """
    if not prev.same_size(next_):
        raise ValueError("consecutive frames must share dimensions")

    # (1) ride dominant points on optical flow; failures kill their segments
    live_idx = [i for i, tp in enumerate(state.points) if tp.alive]
    results = track_points(
        prev,
        next_,
        [state.points[i].point for i in live_idx],
        window=config.klt_window,
        max_iters=config.klt_max_iters,
    )
    state.last_flow = []
    for i, res in zip(live_idx, results):
        kept = res.tracked and res.residual <= config.max_residual
        state.last_flow.append(
            (i, res.displacement.x, res.displacement.y, kept, res.residual)
        )
        if kept:
            state.points[i].point = state.points[i].point + res.displacement
        else:
            state.points[i].alive = False
    for sw in state.swarms:
        if sw.alive and not (state.points[sw.a].alive and state.points[sw.b].alive):
            sw.alive = False

    state.frame_index += 1

    # (2) re-detect once the alive population falls below the 10% floor, or
    # after the box has been structurally degenerate for several frames
    # (a lone surviving swarm spans no area; the floor alone never fires)
    floor = math.ceil(0.1 * state.initial_segment_count)
    if state.alive_swarms < floor or state.unhealthy_streak >= UNHEALTHY_PATIENCE:
        anchor = state.anchor_box
        extra = 4.0 * min(state.unhealthy_streak, 12)
        try:
            mask = redetect_mask(next_, anchor, extra)
        except (ValueError, RuntimeError) as exc:
            raise TrackingLostError(
                f"tracking lost at frame {state.frame_index}: all swarms dead and "
                f"re-detection failed ({exc})",
                anchor,
            ) from exc

        def coast() -> tuple[TrackerState, BoundingBox]:
            # nothing object-like found this frame: hold the last box and
            # search a wider window next frame (the target moves while lost)
            state.unhealthy_streak += 1
            state.last_iterations = 0
            state.last_accepted = 0
            return state, state.last_box

        blob_mean = float(next_.data[mask].mean())
        if abs(blob_mean - state.appearance_mean) > APPEARANCE_TOL:
            return coast()
        try:
            fresh = _build_state(next_, mask, config, state.frame_index, state.epoch + 1)
        except (ValueError, RuntimeError):
            return coast()
        state.points = fresh.points
        state.swarms = fresh.swarms
        state.initial_segment_count = fresh.initial_segment_count
        state.epoch = fresh.epoch
        state.last_iterations = fresh.last_iterations
        state.last_box = fresh.last_box
        state.last_accepted = fresh.last_accepted
        _update_box_health(state, fresh.last_box)
        return state, state.last_box

    # (3) converge every alive swarm onto its moved segment
    _converge_all(state, config)

    # (4)-(5) box from all accepted particles, state carries it forward
    box = _emit_box(state, config)
    state.last_box = box
    _update_box_health(state, box)
    return state, box


def annotate(
    img: GrayImage, box: Optional[BoundingBox], particles: Sequence[Point2]
) -> GrayImage:
    """Burn particle dots and box edges into a copy of the frame at intensity 1.0."""
    data = img.data.copy()
    h, w = data.shape
    for p in particles:
        x, y = int(round(p.x)), int(round(p.y))
        if 0 <= x < w and 0 <= y < h:
            data[y, x] = 1.0
    if box is not None and (box.breadth > 0 or box.length > 0):
        x0 = int(round(box.x))
        y0 = int(round(box.y))
        x1 = int(round(box.x + box.breadth))
        y1 = int(round(box.y + box.length))
        x0, x1 = max(0, min(x0, w - 1)), max(0, min(x1, w - 1))
        y0, y1 = max(0, min(y0, h - 1)), max(0, min(y1, h - 1))
        data[y0, x0 : x1 + 1] = 1.0
        data[y1, x0 : x1 + 1] = 1.0
        data[y0 : y1 + 1, x0] = 1.0
        data[y0 : y1 + 1, x1] = 1.0
    return GrayImage(data)
