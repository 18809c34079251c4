"""Command-line front end: track a sequence, render a scene, or benchmark.

    qpsotrack track --input DIR --config FILE --out DIR
    qpsotrack track --config FILE --out DIR          # [scene] section as input
    qpsotrack synth --spec FILE --out DIR
    qpsotrack bench --config FILE --seeds N --out DIR

Exit codes: 0 success, 1 unusable input or configuration, 2 tracking lost
mid-sequence (partial outputs retained). Wall times cover compute only
(frame I/O excluded). The QPSO_TRACK_THREADS environment variable caps
worker threads when `parallel = true` (0 forces sequential).
"""
from __future__ import annotations

import argparse
import math
import os
import statistics
import sys
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .config import (
    BENCH_SETTINGS,
    RunConfig,
    read_config_file,
    run_config_from_file,
    scene_from_config,
    tracker_from_config,
)
from .image import GrayImage, load_frames, read_pgm, write_pgm
from .scene import SceneSpec, render_scene, write_scene
from .tracker import (
    BoundingBox,
    TrackerConfig,
    TrackerState,
    TrackingLostError,
    accepted_particles,
    advance_frame,
    annotate,
    init_tracker,
)


@dataclass(frozen=True)
class FrameRecord:
    """Per-frame tracking outcome, one results-CSV row."""

    frame: int
    box: BoundingBox
    alive_swarms: int
    iterations: int  # summed over alive swarms
    accepted: int
    converged: bool  # every alive swarm had all particles accepted

    @property
    def mean_iterations(self) -> float:
        return self.iterations / self.alive_swarms if self.alive_swarms else 0.0


def _frame_converged(state: TrackerState, config: TrackerConfig) -> bool:
    alive = [sw for sw in state.swarms if sw.alive]
    if not alive:
        return False
    return all(p.value < config.fitness_epsilon for sw in alive for p in sw.swarm.particles)


def drive_tracking(
    frames: Sequence[GrayImage],
    mask: np.ndarray,
    config: TrackerConfig,
    on_frame: Optional[Callable[[int, TrackerState], None]] = None,
) -> tuple[list[FrameRecord], bool, float]:
    """Run the tracker over a frame sequence.

    Returns (per-frame records, lost flag, compute seconds). ``on_frame``
    runs outside the timed region, after each frame's record is taken.
    """
    records: list[FrameRecord] = []
    lost = False
    compute = 0.0

    t0 = time.perf_counter()
    state = init_tracker(frames[0], mask, config)
    compute += time.perf_counter() - t0

    def record(state: TrackerState) -> None:
        records.append(
            FrameRecord(
                frame=state.frame_index,
                box=state.last_box,
                alive_swarms=state.alive_swarms,
                iterations=state.last_iterations,
                accepted=state.last_accepted,
                converged=_frame_converged(state, config),
            )
        )
        if on_frame is not None:
            on_frame(state.frame_index, state)

    record(state)
    for i in range(1, len(frames)):
        t0 = time.perf_counter()
        try:
            state, _ = advance_frame(state, frames[i - 1], frames[i], config)
        except TrackingLostError as exc:
            compute += time.perf_counter() - t0
            print(f"tracking lost: {exc}", file=sys.stderr)
            lost = True
            break
        compute += time.perf_counter() - t0
        record(state)
    return records, lost, compute


def _write_results_csv(path: str, records: Sequence[FrameRecord]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("frame,box_x,box_y,breadth,length,alive_swarms,iterations,accepted\n")
        for r in records:
            fh.write(
                f"{r.frame},{r.box.x:.4f},{r.box.y:.4f},{r.box.breadth:.4f},"
                f"{r.box.length:.4f},{r.alive_swarms},{r.iterations},{r.accepted}\n"
            )


class _TraceWriter:
    """Optional verbose CSV dumps: dominant points, flow, swarm best traces."""

    def __init__(self, out_dir: str, config: TrackerConfig):
        self.config = config
        self.points = open(os.path.join(out_dir, "dominant_points.csv"), "w", encoding="ascii")
        self.points.write("frame,index,x,y,score\n")
        self.flow = open(os.path.join(out_dir, "flow.csv"), "w", encoding="ascii")
        self.flow.write("frame,point_index,dx,dy,tracked,residual\n")
        self.swarms = open(os.path.join(out_dir, "swarm_trace.csv"), "w", encoding="ascii")
        self.swarms.write("swarm_id,iteration,gbest_value,gbest_x,gbest_y\n")

    def on_frame(self, frame: int, state: TrackerState) -> None:
        for i, tp in enumerate(state.points):
            if tp.alive:
                self.points.write(
                    f"{frame},{i},{tp.point.x:.4f},{tp.point.y:.4f},{tp.score:.6f}\n"
                )
        for idx, dx, dy, kept, residual in state.last_flow:
            self.flow.write(
                f"{frame},{idx},{dx:.4f},{dy:.4f},{int(kept)},{residual:.6g}\n"
            )
        for sw in state.swarms:
            for iteration, value, gx, gy in sw.trace_last:
                self.swarms.write(
                    f"{state.epoch}:{sw.index},{iteration},{value:.6g},{gx:.4f},{gy:.4f}\n"
                )

    def close(self) -> None:
        for fh in (self.points, self.flow, self.swarms):
            fh.close()


def _load_inputs(cfg: RunConfig) -> tuple[list[GrayImage], np.ndarray]:
    if cfg.input_dir is not None:
        mask_path = os.path.join(cfg.input_dir, "mask.pgm")
        if not os.path.isfile(mask_path):
            raise FileNotFoundError(f"missing frame-0 object mask: {mask_path}")
        frames = load_frames(cfg.input_dir, cfg.pattern)
        mask = read_pgm(mask_path).data > 0
        return frames, mask
    assert cfg.scene is not None
    frames = []
    mask = None
    for i in range(cfg.scene.frames):
        img, _, m = render_scene(cfg.scene, i)
        frames.append(img)
        if i == 0:
            mask = m
    return frames, mask


def run_track(cfg: RunConfig) -> int:
    """Track a sequence, writing annotated frames and the results CSV."""
    try:
        frames, mask = _load_inputs(cfg)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(cfg.out_dir, exist_ok=True)

    tracker_cfg = replace(cfg.tracker, collect_trace=True) if cfg.trace else cfg.tracker
    tracer = _TraceWriter(cfg.out_dir, tracker_cfg) if cfg.trace else None

    def on_frame(frame: int, state: TrackerState) -> None:
        burned = annotate(
            frames[frame], state.last_box, accepted_particles(state, tracker_cfg)
        )
        write_pgm(burned, os.path.join(cfg.out_dir, f"annotated_{frame:04d}.pgm"))
        if tracer is not None:
            tracer.on_frame(frame, state)

    records, lost, compute = drive_tracking(frames, mask, tracker_cfg, on_frame)
    if tracer is not None:
        tracer.close()
    _write_results_csv(os.path.join(cfg.out_dir, "results.csv"), records)

    mean_iters = statistics.fmean(r.mean_iterations for r in records) if records else 0.0
    print(
        f"tracked {len(records)}/{len(frames)} frames, "
        f"mean iterations/frame {mean_iters:.2f}, wall time {compute:.3f}s"
    )
    return 2 if lost else 0


def run_synth(scene: SceneSpec, out_dir: str) -> int:
    paths = write_scene(scene, out_dir)
    print(
        f"wrote {len(paths)} frames, mask.pgm, groundtruth.csv to {out_dir} "
        f"({scene.shape}, {scene.width}x{scene.height})"
    )
    return 0


@dataclass(frozen=True)
class BenchCell:
    """One (optimizer, sequence) measurement of the comparison protocol."""

    optimizer: str
    sequence: str
    swarm_size: int
    iteration_cap: int
    median_iterations: float  # per-frame per-swarm, pooled over frames x seeds
    wall_time_s: float
    converged_fraction: float
    seeds: int
    status: str  # ok | failed


def bench_scenes(parser) -> list[tuple[str, SceneSpec]]:
    """Benchmark sequences: [scene.NAME] sections, else the plain [scene]."""
    names = []
    if parser.has_section("bench") and parser.has_option("bench", "sequences"):
        names = parser.get("bench", "sequences").replace(",", " ").split()
    if names:
        return [(n, scene_from_config(parser, f"scene.{n}")) for n in names]
    scene = scene_from_config(parser)
    if scene is None:
        raise ValueError("bench needs a [scene] section or [bench] sequences list")
    return [("scene", scene)]


def run_bench(
    parser,
    seeds: Sequence[int],
    out_dir: str,
    optimizers: Sequence[str] = ("qpso", "pso"),
) -> list[BenchCell]:
    """Run the optimizer-comparison protocol and emit CSV plus a text table.

    Every optimizer x sequence cell runs the full pipeline once per seed
    under the protocol settings for that optimizer and background (cold
    starts each frame, so iteration counts measure optimizer convergence).
    """
    if len(seeds) < 2:
        raise ValueError(f"bench needs at least 2 seeds, got {len(seeds)}")
    if not optimizers:
        raise ValueError("bench needs at least one optimizer")
    for opt in optimizers:
        if opt not in ("qpso", "pso"):
            raise ValueError(f"unknown optimizer {opt!r}")

    sequences = bench_scenes(parser)
    base = tracker_from_config(parser)
    cells = []
    for seq_name, scene in sequences:
        frames = []
        mask = None
        for i in range(scene.frames):
            img, _, m = render_scene(scene, i)
            frames.append(img)
            if i == 0:
                mask = m
        for opt in optimizers:
            swarm_size, cap = BENCH_SETTINGS[(opt, base.background)]
            per_frame_iters: list[float] = []
            converged = 0
            total_frames = 0
            wall = 0.0
            status = "ok"
            try:
                for seed in seeds:
                    cfg = replace(
                        base,
                        optimizer=opt,
                        swarm_size=swarm_size,
                        max_iters=cap,
                        warm_start=False,
                        seed=seed,
                    )
                    records, lost, compute = drive_tracking(frames, mask, cfg)
                    wall += compute
                    per_frame_iters.extend(r.mean_iterations for r in records)
                    converged += sum(1 for r in records if r.converged)
                    total_frames += len(frames)
            except Exception as exc:  # a failed cell must not kill the report
                print(f"bench cell {opt}/{seq_name} failed: {exc}", file=sys.stderr)
                status = "failed"
            cells.append(
                BenchCell(
                    optimizer=opt,
                    sequence=seq_name,
                    swarm_size=swarm_size,
                    iteration_cap=cap,
                    median_iterations=(
                        statistics.median(per_frame_iters) if per_frame_iters else math.nan
                    ),
                    wall_time_s=wall,
                    converged_fraction=(converged / total_frames if total_frames else 0.0),
                    seeds=len(seeds),
                    status=status,
                )
            )

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "bench.csv"), "w", encoding="ascii") as fh:
        fh.write(
            "optimizer,sequence,swarm_size,iteration_cap,median_iterations,"
            "wall_time_s,converged_fraction,seeds,status\n"
        )
        for c in cells:
            fh.write(
                f"{c.optimizer},{c.sequence},{c.swarm_size},{c.iteration_cap},"
                f"{c.median_iterations:.4f},{c.wall_time_s:.3f},"
                f"{c.converged_fraction:.4f},{c.seeds},{c.status}\n"
            )
    table = _bench_table(cells)
    with open(os.path.join(out_dir, "bench.txt"), "w", encoding="ascii") as fh:
        fh.write(table + "\n")
    print(table)
    return cells


def _bench_table(cells: Sequence[BenchCell]) -> str:
    headers = (
        "optimizer", "sequence", "swarm", "cap", "med iters", "wall s", "conv frac", "status"
    )
    rows = [
        (
            c.optimizer,
            c.sequence,
            str(c.swarm_size),
            str(c.iteration_cap),
            f"{c.median_iterations:.2f}",
            f"{c.wall_time_s:.2f}",
            f"{c.converged_fraction:.3f}",
            c.status,
        )
        for c in cells
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))) for r in rows)
    return "\n".join(lines)


def _build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpsotrack", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="track an object through a frame sequence")
    track.add_argument("--input", help="frame directory (needs mask.pgm); omit to use [scene]")
    track.add_argument("--config", required=True, help="key=value config file")
    track.add_argument("--out", required=True, help="output directory")

    synth = sub.add_parser("synth", help="render a synthetic scene to frames")
    synth.add_argument("--spec", required=True, help="config file with a [scene] section")
    synth.add_argument("--out", required=True, help="output directory")

    bench = sub.add_parser("bench", help="run the PSO-vs-QPSO comparison protocol")
    bench.add_argument("--config", required=True, help="key=value config file")
    bench.add_argument("--seeds", type=int, default=5, help="number of seeds (>= 2)")
    bench.add_argument("--out", required=True, help="output directory")
    bench.add_argument(
        "--optimizer",
        choices=("qpso", "pso"),
        action="append",
        help="restrict to one optimizer (repeatable); default both",
    )
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_arg_parser().parse_args(argv)
    try:
        if args.command == "track":
            cfg = run_config_from_file(
                args.config, mode="track", out_dir=args.out, input_dir=args.input
            )
            return run_track(cfg)
        if args.command == "synth":
            parser = read_config_file(args.spec)
            scene = scene_from_config(parser)
            if scene is None:
                print(f"error: no [scene] section in {args.spec}", file=sys.stderr)
                return 1
            return run_synth(scene, args.out)
        if args.command == "bench":
            parser = read_config_file(args.config)
            optimizers = tuple(args.optimizer) if args.optimizer else ("qpso", "pso")
            run_bench(parser, seeds=list(range(args.seeds)), out_dir=args.out,
                      optimizers=optimizers)
            return 0
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
