"""Run configuration files: flat key=value text with section headers.

Example (shipped in the README):

    [run]
    optimizer = qpso
    parallel = false
    trace = false

    [scene]
    width = 160
    height = 90
    shape = square
    size = 20
    start_x = 15
    start_y = 35
    vel_x = 2.0
    frames = 50
    noise = 0.02
    seed = 5

    [tracker]
    background = static
    fitness_epsilon = 2.0
    seed = 7

A [scene] section makes `track` run on rendered frames; without one the
frames come from the --input directory (which must contain mask.pgm).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from typing import Optional

from .scene import Occluder, SceneSpec
from .tracker import TrackerConfig

# (swarm size, per-frame iteration cap) mirroring the benchmark protocol
BENCH_SETTINGS: dict[tuple[str, str], tuple[int, int]] = {
    ("pso", "static"): (25, 1000),
    ("pso", "variable"): (35, 2000),
    ("qpso", "static"): (15, 100),
    ("qpso", "variable"): (20, 150),
}


@dataclass
class RunConfig:
    """Everything one CLI invocation needs; exactly one input source."""

    mode: str  # track | synth | bench
    out_dir: str
    tracker: TrackerConfig
    input_dir: Optional[str] = None
    scene: Optional[SceneSpec] = None
    pattern: str = "frame_*.pgm"
    trace: bool = False

    def __post_init__(self) -> None:
        has_dir = self.input_dir is not None
        has_scene = self.scene is not None
        if has_dir == has_scene:
            raise ValueError(
                "exactly one input source required: --input DIR or a [scene] config section"
            )


def read_config_file(path: str) -> configparser.ConfigParser:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file does not exist: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ValueError(f"config parse failure in {path}: {exc}") from exc
    return parser


def _coerce(raw: str, kind: type):
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    return kind(raw)


def _section_kwargs(parser: configparser.ConfigParser, section: str, cls) -> dict:
    """Collect keys of a section that match the dataclass fields, coerced."""
    if not parser.has_section(section):
        return {}
    known = {f.name: f.type for f in fields(cls)}
    type_map = {"int": int, "float": float, "bool": bool, "str": str}
    out = {}
    for key, raw in parser.items(section):
        if key not in known:
            continue
        kind = type_map.get(str(known[key]), None)
        if kind is None:
            continue
        try:
            out[key] = _coerce(raw, kind)
        except (ValueError, TypeError) as exc:
            raise ValueError(f"config parse failure: [{section}] {key} = {raw!r}: {exc}") from exc
    return out


def scene_from_config(
    parser: configparser.ConfigParser, section: str = "scene"
) -> Optional[SceneSpec]:
    if not parser.has_section(section):
        return None
    kwargs = _section_kwargs(parser, section, SceneSpec)
    occ_kind = parser.get(section, "occluder", fallback="none").strip().lower()
    occluder = None
    if occ_kind == "bar":
        occluder = Occluder(
            x=parser.getint(section, "occluder_x"),
            width=parser.getint(section, "occluder_width"),
            frame_from=parser.getint(section, "occluder_from"),
            frame_to=parser.getint(section, "occluder_to"),
        )
    elif occ_kind != "none":
        raise ValueError(f"config parse failure: unknown occluder kind {occ_kind!r}")
    return SceneSpec(occluder=occluder, **kwargs)


def tracker_from_config(
    parser: configparser.ConfigParser, section: str = "tracker", **overrides
) -> TrackerConfig:
    kwargs = _section_kwargs(parser, section, TrackerConfig)
    if parser.has_section("run"):
        for key in ("optimizer", "parallel"):
            if parser.has_option("run", key) and key not in overrides:
                kwargs[key] = _coerce(parser.get("run", key), bool if key == "parallel" else str)
    kwargs.update(overrides)
    return TrackerConfig(**kwargs)


def run_config_from_file(
    path: str,
    mode: str,
    out_dir: str,
    input_dir: Optional[str] = None,
    **tracker_overrides,
) -> RunConfig:
    parser = read_config_file(path)
    scene = None if input_dir is not None else scene_from_config(parser)
    tracker = tracker_from_config(parser, **tracker_overrides)
    pattern = parser.get("run", "pattern", fallback="frame_*.pgm")
    trace = False
    if parser.has_option("run", "trace"):
        trace = _coerce(parser.get("run", "trace"), bool)
    return RunConfig(
        mode=mode,
        out_dir=out_dir,
        tracker=tracker,
        input_dir=input_dir,
        scene=scene,
        pattern=pattern,
        trace=trace,
    )
