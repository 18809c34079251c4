"""Boundary chain codes, linear-point elimination, and dominant points.

The boundary of a binary mask is traced with Moore-neighbor tracing
(Jacob's stopping criterion) into a Freeman 8-direction chain. Points whose
incoming and outgoing codes match carry no curvature information and are
eliminated; the survivors (breakpoints) compete in fixed-size groups, and
each group's winner under the maximal k-cosine rule is a dominant point.

Freeman code table (x rightward, y downward):

    code   0   1   2   3   4   5   6   7
    step   E   SE  S   SW  W   NW  N   NE
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Point2

CODE_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_CODE_OF = {step: code for code, step in enumerate(CODE_STEPS)}

# Moore neighborhood in clockwise screen order, starting at the west neighbor
_RING = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_RING_INDEX = {step: i for i, step in enumerate(_RING)}


@dataclass(frozen=True)
class ChainTrace:
    """Closed boundary: pixel list plus the Freeman code of each outgoing move.

    codes[i] moves points[i] to points[i+1]; the last code closes the loop
    back to points[0]. Consecutive points are 8-adjacent.
    """

    points: tuple[Point2, ...]
    codes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.points) != len(self.codes):
            raise ValueError("codes length must equal points length")
        n = len(self.points)
        for i, code in enumerate(self.codes):
            p, q = self.points[i], self.points[(i + 1) % n]
            if CODE_STEPS[code] != (int(q.x - p.x), int(q.y - p.y)):
                raise ValueError(f"code {code} at index {i} does not step {p} -> {q}")

    def __len__(self) -> int:
        return len(self.points)

    def replay(self) -> list[Point2]:
        """Reconstruct the point list by applying codes from the start point."""
        pts = [self.points[0]]
        for code in self.codes[:-1]:
            dx, dy = CODE_STEPS[code]
            pts.append(Point2(pts[-1].x + dx, pts[-1].y + dy))
        return pts


@dataclass(frozen=True)
class BreakpointSet:
    """Trace points that survive linear-point elimination, in trace order."""

    points: tuple[Point2, ...]
    indices: tuple[int, ...]  # source indices into the originating trace

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class DominantPointSet:
    """Per-group k-cosine winners, in trace order, with their scores."""

    points: tuple[Point2, ...]
    scores: tuple[float, ...]
    indices: tuple[int, ...]  # source indices into the originating trace

    def __len__(self) -> int:
        return len(self.points)


def _component_count(mask: np.ndarray) -> int:
    """Number of 8-connected foreground components."""
    seen = np.zeros(mask.shape, dtype=bool)
    h, w = mask.shape
    count = 0
    for sy, sx in zip(*np.nonzero(mask)):
        if seen[sy, sx]:
            continue
        count += 1
        queue = deque([(sy, sx)])
        seen[sy, sx] = True
        while queue:
            y, x = queue.popleft()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
    return count


def _boundary_pixel_count(mask: np.ndarray) -> int:
    padded = np.pad(mask, 1, constant_values=False)
    interior = np.ones(mask.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            interior &= padded[1 + dy : 1 + dy + mask.shape[0], 1 + dx : 1 + dx + mask.shape[1]]
    return int(np.count_nonzero(mask & ~interior))


def trace_boundary(mask: np.ndarray) -> ChainTrace:
    """Trace the outer boundary of the single foreground component in a mask.

    Starts at the topmost-then-leftmost foreground pixel and walks the
    boundary with the Moore-neighbor rule, terminating when the start pixel
    is re-entered from the original backtrack direction. The walk orientation
    is counterclockwise with respect to standard y-up axes.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be a 2-D array")
    if not mask.any():
        raise ValueError("empty mask: no foreground pixels to trace")
    n_components = _component_count(mask)
    if n_components != 1:
        raise ValueError(f"mask has {n_components} foreground components, expected exactly 1")
    if _boundary_pixel_count(mask) < 4:
        raise ValueError("foreground component has fewer than 4 boundary pixels")

    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    first = np.lexsort((xs, ys))[0]
    start = (int(xs[first]), int(ys[first]))
    back0 = (start[0] - 1, start[1])

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(mask[y, x])

    points = [start]
    cur, back = start, back0
    first_edge = None
    limit = 8 * len(xs) + 16
    for step in range(limit):
        k0 = _RING_INDEX[(back[0] - cur[0], back[1] - cur[1])]
        nxt = None
        prev = back
        for j in range(1, 9):
            dx, dy = _RING[(k0 + j) % 8]
            cand = (cur[0] + dx, cur[1] + dy)
            if fg(*cand):
                nxt = cand
                break
            prev = cand
        assert nxt is not None  # component has >= 4 boundary pixels
        if step == 0:
            first_edge = (cur, nxt)
        elif (cur, nxt) == first_edge:
            # about to retrace the opening move: the loop is closed
            break
        cur, back = nxt, prev
        points.append(cur)
    else:
        raise RuntimeError("boundary walk failed to close (mask inconsistency)")
    if len(points) > 1 and points[-1] == start:
        points.pop()  # the closing revisit duplicates the start

    codes = []
    n = len(points)
    for i, p in enumerate(points):
        q = points[(i + 1) % n]
        codes.append(_CODE_OF[(q[0] - p[0], q[1] - p[1])])
    return ChainTrace(
        points=tuple(Point2(float(x), float(y)) for x, y in points),
        codes=tuple(codes),
    )


def eliminate_linear(trace: ChainTrace) -> BreakpointSet:
    """Drop points whose incoming code equals their outgoing code.

    A point on a straight run carries no curvature; only code transitions
    survive. On a closed trace at least one transition always exists.
    """
    keep_points = []
    keep_indices = []
    for i in range(len(trace)):
        if trace.codes[i - 1] != trace.codes[i]:
            keep_points.append(trace.points[i])
            keep_indices.append(i)
    return BreakpointSet(points=tuple(keep_points), indices=tuple(keep_indices))


def k_cosine(points: Sequence[Point2], i: int, k: int) -> float:
    """Cosine of the angle at points[i] between arms to points[i-k] and points[i+k].

    Indices resolve cyclically on the closed sequence. Collinear opposite
    arms give -1; a straight corner gives 0. Coincident support points make
    the measure undefined and raise.
    """
    if k < 1:
        raise ValueError(f"support length k must be >= 1, got {k}")
    n = len(points)
    p = points[i % n]
    pm = points[(i - k) % n]
    pp = points[(i + k) % n]
    ax, ay = pm.x - p.x, pm.y - p.y
    bx, by = pp.x - p.x, pp.y - p.y
    na = (ax * ax + ay * ay) ** 0.5
    nb = (bx * bx + by * by) ** 0.5
    if na == 0.0 or nb == 0.0:
        raise ValueError(f"zero-length support arm at index {i} with k={k} (coincident points)")
    value = (ax * bx + ay * by) / (na * nb)
    return min(1.0, max(-1.0, value))


def _max_k_score(points: Sequence[Point2], i: int, k_max: int) -> float:
    """Maximal k-cosine of point i over supports k = 1..k_max.

    Supports where the arms wrap onto the point itself (k multiple of the
    sequence length) are skipped; the sequence is assumed duplicate-free.
    """
    n = len(points)
    best = -1.0
    for k in range(1, k_max + 1):
        if k % n == 0:
            continue
        best = max(best, k_cosine(points, i, k))
    return best


def select_dominant(breaks: BreakpointSet, group_size: int) -> DominantPointSet:
    """Pick each breakpoint group's maximal k-cosine point as dominant.

    Breakpoints are partitioned into consecutive groups of ``group_size``
    (a smaller final group still competes if it has at least 2 members).
    Every point is scored against the full cyclic breakpoint sequence with
    supports k = 1..group_size-1; within a group the highest score wins,
    ties to the lower trace index.
    """
    if group_size < 2:
        raise ValueError(f"group size must be >= 2, got {group_size}")
    n = len(breaks)
    if n == 0:
        raise ValueError("empty breakpoint set")

    scores = [_max_k_score(breaks.points, i, group_size - 1) for i in range(n)]

    sel_points = []
    sel_scores = []
    sel_indices = []
    for g0 in range(0, n, group_size):
        group = range(g0, min(g0 + group_size, n))
        if len(group) < 2:
            continue
        best = min(group, key=lambda i: (-scores[i], breaks.indices[i]))
        sel_points.append(breaks.points[best])
        sel_scores.append(scores[best])
        sel_indices.append(breaks.indices[best])
    return DominantPointSet(
        points=tuple(sel_points), scores=tuple(sel_scores), indices=tuple(sel_indices)
    )
