"""Single-level Lucas-Kanade point tracking.

For a window W around point p, the flow v solves the least-squares system
G v = r with G the structure tensor (summed gradient outer products of the
previous frame over W) and r the gradient-weighted brightness differences.
The solve is refined iteratively by re-sampling the next frame at p + v
(bilinear warping) until the update norm drops below 0.01 px.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Point2
from .image import GrayImage, bilinear_sample, spatial_gradients

# minimum per-pixel eigenvalue of the structure tensor (intensity^2/px^2)
# below which a window is considered textureless and untrackable
LAMBDA_MIN = 1e-4

# iterative refinement stops once the update step is below this (pixels)
STEP_TOLERANCE = 0.01


@dataclass(frozen=True)
class FlowResult:
    """Outcome of tracking one point between two frames."""

    displacement: Point2
    tracked: bool
    residual: float  # mean squared brightness error over the window
    condition: float  # ratio of structure-tensor eigenvalues (>= 1 when tracked)


def _window_inside(img: GrayImage, x: float, y: float, half: int) -> bool:
    return (
        x - half >= 0.0
        and y - half >= 0.0
        and x + half <= img.width - 1.0
        and y + half <= img.height - 1.0
    )


def lk_track_point(
    prev: GrayImage,
    next_: GrayImage,
    p: Point2,
    window: int = 15,
    max_iters: int = 10,
) -> FlowResult:
    """Track point p from prev to next over an odd-sized square window.

    Gradients come from the previous frame, so the structure tensor is fixed
    across refinement iterations; ``max_iters=1`` gives the single linear
    solve. The result is flagged untracked when the windowed structure
    tensor is near-singular or the warped window leaves the frame.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    if not prev.same_size(next_):
        raise ValueError("frames must share dimensions")
    half = window // 2
    if not _window_inside(prev, p.x, p.y, half):
        raise ValueError(
            f"window of size {window} at ({p.x:.2f}, {p.y:.2f}) extends outside "
            f"the {prev.width}x{prev.height} frame"
        )

    ix, iy = spatial_gradients(prev)
    offs = np.arange(-half, half + 1, dtype=np.float64)
    oy, ox = np.meshgrid(offs, offs, indexing="ij")
    wxs = p.x + ox
    wys = p.y + oy

    gx = bilinear_sample(ix, wxs, wys)
    gy = bilinear_sample(iy, wxs, wys)
    template = bilinear_sample(prev, wxs, wys)

    gxx = float(np.sum(gx * gx))
    gxy = float(np.sum(gx * gy))
    gyy = float(np.sum(gy * gy))
    # eigenvalues of the symmetric 2x2 structure tensor
    trace_half = (gxx + gyy) / 2.0
    det_root = math.sqrt(max((gxx - gyy) ** 2 / 4.0 + gxy * gxy, 0.0))
    lam_small = trace_half - det_root
    lam_big = trace_half + det_root
    n_pix = float(window * window)
    condition = lam_big / lam_small if lam_small > 0 else math.inf

    def mse_at(vx: float, vy: float) -> float:
        warped = bilinear_sample(next_, wxs + vx, wys + vy)
        return float(np.mean((warped - template) ** 2))

    if lam_small / n_pix < LAMBDA_MIN:
        return FlowResult(Point2(0.0, 0.0), False, mse_at(0.0, 0.0), condition)

    det = gxx * gyy - gxy * gxy
    vx = vy = 0.0
    tracked = True
    for _ in range(max_iters):
        if not _window_inside(next_, p.x + vx, p.y + vy, half):
            tracked = False
            break
        warped = bilinear_sample(next_, wxs + vx, wys + vy)
        b = template - warped  # = -I_t over the window
        rx = float(np.sum(gx * b))
        ry = float(np.sum(gy * b))
        dx = (gyy * rx - gxy * ry) / det
        dy = (gxx * ry - gxy * rx) / det
        vx += dx
        vy += dy
        if math.hypot(dx, dy) < STEP_TOLERANCE:
            break
    if not _window_inside(next_, p.x + vx, p.y + vy, half):
        tracked = False
    return FlowResult(Point2(vx, vy), tracked, mse_at(vx, vy), condition)


def track_points(
    prev: GrayImage,
    next_: GrayImage,
    points: Sequence[Point2],
    window: int = 15,
    max_iters: int = 10,
) -> list[FlowResult]:
    """Track each point independently; order preserved, failures flagged.

    Points whose initial window does not fit inside the frame come back
    untracked rather than raising, so one bad point never hides the rest.
    """
    half = window // 2
    results = []
    for p in points:
        if not _window_inside(prev, p.x, p.y, half):
            results.append(FlowResult(Point2(0.0, 0.0), False, math.inf, math.inf))
            continue
        results.append(lk_track_point(prev, next_, p, window=window, max_iters=max_iters))
    return results
