"""Chain-code tracing, linear-point elimination, and dominant-point tests."""

import math

import numpy as np
import pytest

from qpsotrack.contour import (
    CODE_STEPS,
    BreakpointSet,
    eliminate_linear,
    k_cosine,
    select_dominant,
    trace_boundary,
)
from qpsotrack.geometry import Point2


def filled_square(side, pad=2):
    mask = np.zeros((side + 2 * pad, side + 2 * pad), dtype=bool)
    mask[pad : pad + side, pad : pad + side] = True
    return mask


def lshape_mask():
    # 10x10 square minus its 5x5 top-right quadrant: 6 corners, one reflex
    mask = filled_square(10)
    mask[2:7, 7:12] = False
    return mask


def replay_is_closed(trace):
    x, y = trace.points[0].x, trace.points[0].y
    for code in trace.codes:
        dx, dy = CODE_STEPS[code]
        x, y = x + dx, y + dy
    return (x, y) == (trace.points[0].x, trace.points[0].y)


class TestTraceBoundary:
    def test_empty_mask(self):
        with pytest.raises(ValueError, match="empty mask"):
            trace_boundary(np.zeros((5, 5), dtype=bool))

    def test_multiple_components_report_count(self):
        mask = np.zeros((8, 8), dtype=bool)
        mask[1:3, 1:3] = True
        mask[5:7, 5:7] = True
        with pytest.raises(ValueError, match="2 foreground components"):
            trace_boundary(mask)

    def test_single_pixel_too_small(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[1, 1] = True
        with pytest.raises(ValueError, match="fewer than 4 boundary pixels"):
            trace_boundary(mask)

    def test_2x2_square_is_fixed_4_code_loop(self):
        trace = trace_boundary(filled_square(2))
        assert len(trace) == 4
        codes = list(trace.codes)
        # some cyclic rotation of the fixed loop (0, 2, 4, 6)
        rotations = [[0, 2, 4, 6][i:] + [0, 2, 4, 6][:i] for i in range(4)]
        assert codes in rotations

    def test_10x10_square_points_and_codes(self):
        trace = trace_boundary(filled_square(10))
        assert len(trace) == 36  # 4n - 4 boundary pixels
        # four distinct direction values, each in one run per side
        runs = []
        for code in trace.codes:
            if not runs or runs[-1] != code:
                runs.append(code)
        assert sorted(set(trace.codes)) == [0, 2, 4, 6]
        assert len(runs) == 4

    def test_starts_topmost_then_leftmost(self):
        trace = trace_boundary(filled_square(5, pad=3))
        assert (trace.points[0].x, trace.points[0].y) == (3.0, 3.0)

    def test_round_trip_replay(self):
        for mask in [filled_square(4), lshape_mask()]:
            trace = trace_boundary(mask)
            assert replay_is_closed(trace)
            replayed = trace.replay()
            assert replayed == list(trace.points)

    def test_consecutive_points_8_adjacent(self):
        trace = trace_boundary(lshape_mask())
        n = len(trace)
        for i in range(n):
            p, q = trace.points[i], trace.points[(i + 1) % n]
            assert max(abs(p.x - q.x), abs(p.y - q.y)) == 1

    def test_one_pixel_wide_line_traces_closed(self):
        mask = np.zeros((5, 8), dtype=bool)
        mask[2, 1:6] = True
        trace = trace_boundary(mask)
        assert replay_is_closed(trace)


class TestEliminateLinear:
    def test_square_keeps_exactly_the_corners(self):
        # straight sides carry one code each, so rule 9 keeps the 4 corner
        # pixels and nothing else (verified against the traced code runs)
        mask = filled_square(10)
        breaks = eliminate_linear(trace_boundary(mask))
        assert len(breaks) == 4
        corner_set = {(2.0, 2.0), (11.0, 2.0), (11.0, 11.0), (2.0, 11.0)}
        assert {(p.x, p.y) for p in breaks.points} == corner_set

    def test_lshape_breakpoints_sit_at_corners(self):
        trace = trace_boundary(lshape_mask())
        breaks = eliminate_linear(trace)
        # 5 convex corners plus 2 transition pixels around the reflex corner
        assert len(breaks) == 7
        corners = [(2, 2), (6, 2), (11, 7), (11, 11), (2, 11), (6, 6), (7, 7)]
        for p in breaks.points:
            assert min(abs(p.x - cx) + abs(p.y - cy) for cx, cy in corners) <= 1

    def test_no_survivor_has_equal_codes(self):
        trace = trace_boundary(lshape_mask())
        breaks = eliminate_linear(trace)
        n = len(trace)
        for idx in breaks.indices:
            assert trace.codes[idx - 1] != trace.codes[idx % n]

    def test_order_preserved(self):
        breaks = eliminate_linear(trace_boundary(lshape_mask()))
        assert list(breaks.indices) == sorted(breaks.indices)


class TestKCosine:
    def test_collinear_opposite_arms(self):
        pts = [Point2(0, 0), Point2(1, 0), Point2(2, 0)]
        assert k_cosine(pts, 1, 1) == pytest.approx(-1.0)

    def test_right_angle(self):
        pts = [Point2(0, 1), Point2(0, 0), Point2(1, 0)]
        assert k_cosine(pts, 1, 1) == pytest.approx(0.0)

    def test_acute_value(self):
        pts = [Point2(1, 1), Point2(0, 0), Point2(1, 0)]
        assert k_cosine(pts, 1, 1) == pytest.approx(1 / math.sqrt(2))

    def test_coincident_points_error(self):
        pts = [Point2(0, 0), Point2(0, 0), Point2(1, 0)]
        with pytest.raises(ValueError, match="zero-length"):
            k_cosine(pts, 1, 1)

    def test_cyclic_index_resolution(self):
        pts = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1)]
        assert k_cosine(pts, 0, 1) == pytest.approx(k_cosine(pts, 4, 1))

    def test_translation_and_scale_invariance(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            pts = [Point2(*xy) for xy in rng.uniform(-5, 5, (7, 2))]
            base = k_cosine(pts, 3, 2)
            moved = [Point2(p.x + 11.5, p.y - 3.25) for p in pts]
            scaled = [Point2(p.x * 7.25, p.y * 7.25) for p in pts]
            assert k_cosine(moved, 3, 2) == pytest.approx(base, abs=1e-12)
            assert k_cosine(scaled, 3, 2) == pytest.approx(base, abs=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(23)
        theta = 0.7
        c, s = math.cos(theta), math.sin(theta)
        for _ in range(40):
            pts = [Point2(*xy) for xy in rng.uniform(-5, 5, (7, 2))]
            rot = [Point2(c * p.x - s * p.y, s * p.x + c * p.y) for p in pts]
            assert k_cosine(rot, 3, 2) == pytest.approx(k_cosine(pts, 3, 2), abs=1e-9)


def brute_force_dominant(breaks: BreakpointSet, group_size: int):
    """Independent exhaustive (point, k) argmax used as the selection oracle."""
    pts = np.array([[p.x, p.y] for p in breaks.points])
    n = len(pts)
    scores = []
    for i in range(n):
        best = -1.0
        for k in range(1, group_size):
            if k % n == 0:
                continue
            a = pts[(i - k) % n] - pts[i]
            b = pts[(i + k) % n] - pts[i]
            cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
            best = max(best, min(1.0, max(-1.0, cos)))
        scores.append(best)
    chosen = []
    for g0 in range(0, n, group_size):
        group = list(range(g0, min(g0 + group_size, n)))
        if len(group) < 2:
            continue
        best = group[0]
        for i in group[1:]:
            if scores[i] > scores[best]:
                best = i
        chosen.append((breaks.indices[best], scores[best]))
    return chosen


def random_breakpoints(rng, n):
    """Closed sequence of n distinct integer points."""
    while True:
        pts = rng.integers(-20, 20, (n, 2))
        if len({tuple(p) for p in pts}) == n:
            return BreakpointSet(
                points=tuple(Point2(float(x), float(y)) for x, y in pts),
                indices=tuple(range(n)),
            )


class TestSelectDominant:
    def test_empty_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            select_dominant(BreakpointSet(points=(), indices=()), 5)

    def test_group_size_floor(self):
        breaks = random_breakpoints(np.random.default_rng(0), 6)
        with pytest.raises(ValueError, match="group size"):
            select_dominant(breaks, 1)

    def test_group_of_two_tie_breaks_to_lower_index(self):
        # two points: each sees the other as both arms, so both score 1.0
        breaks = BreakpointSet(points=(Point2(0, 0), Point2(3, 1)), indices=(4, 9))
        dom = select_dominant(breaks, 5)
        assert len(dom) == 1
        assert dom.indices == (4,)
        assert dom.scores[0] == pytest.approx(1.0)

    def test_corner_beats_collinear_run(self):
        pts = (
            Point2(0, 0), Point2(1, 0), Point2(2, 0), Point2(3, 1), Point2(4, 2),
            Point2(2, 5),
        )
        breaks = BreakpointSet(points=pts, indices=tuple(range(6)))
        dom = select_dominant(breaks, 5)
        # within the first group the bend at (2,0)/(3,1) outranks straight runs
        assert dom.scores[0] > -1.0
        assert dom.points[0] in pts[:5]

    def test_output_size_and_membership(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(2, 13))
            gs = int(rng.integers(2, 7))
            breaks = random_breakpoints(rng, n)
            dom = select_dominant(breaks, gs)
            expected_groups = sum(
                1 for g0 in range(0, n, gs) if min(g0 + gs, n) - g0 >= 2
            )
            assert len(dom) == expected_groups
            for idx in dom.indices:
                assert idx in breaks.indices

    def test_matches_brute_force(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            n = int(rng.integers(2, 13))
            gs = int(rng.integers(2, 7))
            breaks = random_breakpoints(rng, n)
            dom = select_dominant(breaks, gs)
            oracle = brute_force_dominant(breaks, gs)
            assert list(dom.indices) == [i for i, _ in oracle]
            for got, (_, want) in zip(dom.scores, oracle):
                assert got == pytest.approx(want, abs=1e-12)

    def test_square_pipeline_single_group(self):
        # 4 corner breakpoints under group size 5 form one group; the winner
        # is a corner pixel (all tie at cosine 1.0 via the k=2 diagonal arms,
        # so the lowest trace index wins)
        breaks = eliminate_linear(trace_boundary(filled_square(10)))
        dom = select_dominant(breaks, 5)
        assert len(dom) == 1
        assert (dom.points[0].x, dom.points[0].y) == (2.0, 2.0)
