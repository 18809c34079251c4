"""Quantum-behaved particle swarm optimization for contour-based object tracking.

A library plus CLI that finds dominant points on a target's contour, binds
one QPSO swarm to each curvature segment between paired dominant points,
rides the points on Lucas-Kanade optical flow between frames, and emits a
bounding box from the converged particles. A classic inertia-weight PSO
baseline and a benchmark harness mirror the optimizer comparison protocol.
"""

from .contour import (
    BreakpointSet,
    ChainTrace,
    DominantPointSet,
    eliminate_linear,
    k_cosine,
    select_dominant,
    trace_boundary,
)
from .flow import FlowResult, lk_track_point, track_points
from .geometry import Point2, Rect, box_iou
from .image import (
    GrayImage,
    load_frames,
    read_pgm,
    read_png,
    spatial_gradients,
    temporal_diff,
    write_pgm,
    write_png,
)
from .scene import Occluder, SceneSpec, render_scene, smooth_texture, write_scene
from .swarm import (
    Particle,
    PsoParams,
    QpsoParams,
    Swarm,
    SwarmRng,
    compute_mbest,
    init_swarm,
    pso_step,
    qpso_step,
    run_to_convergence,
)
from .tracker import (
    BoundingBox,
    CurvatureSegment,
    TrackerConfig,
    TrackerState,
    TrackingLostError,
    advance_frame,
    bounding_box,
    curvature_fitness,
    init_tracker,
    pair_segments,
    perp_dist,
    reinit_particle,
    segment_length,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "BreakpointSet",
    "ChainTrace",
    "CurvatureSegment",
    "DominantPointSet",
    "FlowResult",
    "GrayImage",
    "Occluder",
    "Particle",
    "Point2",
    "PsoParams",
    "QpsoParams",
    "Rect",
    "SceneSpec",
    "Swarm",
    "SwarmRng",
    "TrackerConfig",
    "TrackerState",
    "TrackingLostError",
    "advance_frame",
    "bounding_box",
    "box_iou",
    "compute_mbest",
    "curvature_fitness",
    "eliminate_linear",
    "init_swarm",
    "init_tracker",
    "k_cosine",
    "lk_track_point",
    "load_frames",
    "pair_segments",
    "perp_dist",
    "pso_step",
    "qpso_step",
    "read_pgm",
    "read_png",
    "reinit_particle",
    "render_scene",
    "run_to_convergence",
    "segment_length",
    "select_dominant",
    "smooth_texture",
    "spatial_gradients",
    "temporal_diff",
    "trace_boundary",
    "track_points",
    "write_pgm",
    "write_png",
    "write_scene",
]
