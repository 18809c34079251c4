"""Synthetic test scenes with exact ground truth.

A scene is a textured shape (square, disk, or L-shape) translating over a
textured background, with optional per-frame noise and an optional occluding
bar. Rendering is a pure function of (spec, frame index): every random field
is derived from Philox streams keyed on the scene seed, so renders are
reproducible byte for byte.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .image import GrayImage, write_pgm

SHAPES = ("square", "disk", "lshape")


@dataclass(frozen=True)
class Occluder:
    """Vertical bar burned over the scene during frames [frame_from, frame_to]."""

    x: int
    width: int
    frame_from: int
    frame_to: int

    def active(self, frame: int) -> bool:
        return self.frame_from <= frame <= self.frame_to


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    shape: str = "square"
    size: int = 20
    start_x: int = 10
    start_y: int = 10
    vel_x: float = 0.0
    vel_y: float = 0.0
    frames: int = 1
    noise: float = 0.0
    seed: int = 0
    bg_vel_x: float = 0.0  # nonzero scrolls the background (variable-background scene)
    bg_vel_y: float = 0.0
    occluder: Optional[Occluder] = None

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r} (choose from {SHAPES})")
        if self.width < 8 or self.height < 8:
            raise ValueError("canvas must be at least 8x8")
        if self.size < 4:
            raise ValueError("shape size must be at least 4")
        if self.frames < 1:
            raise ValueError("frame count must be >= 1")
        if self.noise < 0:
            raise ValueError("noise amplitude must be >= 0")
        for i in (0, self.frames - 1):
            x, y = self.position(i)
            if x < 0 or y < 0 or x + self.size > self.width or y + self.size > self.height:
                raise ValueError(
                    f"shape leaves the canvas at frame {i}: position ({x}, {y}), "
                    f"size {self.size}, canvas {self.width}x{self.height}"
                )

    def position(self, frame: int) -> tuple[int, int]:
        """Integer top-left shape position at the given frame."""
        return (
            int(round(self.start_x + self.vel_x * frame)),
            int(round(self.start_y + self.vel_y * frame)),
        )


def _wave_params(seed_key: list[int], n_waves: int = 7) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key)))
    amps = rng.uniform(0.4, 1.0, n_waves)
    amps /= amps.sum()
    freqs = rng.uniform(0.03, 0.15, n_waves)
    angles = rng.uniform(0.0, 2 * np.pi, n_waves)
    phases = rng.uniform(0.0, 2 * np.pi, n_waves)
    return amps, freqs, angles, phases


def _wave_field(xs: np.ndarray, ys: np.ndarray, seed_key: list[int]) -> np.ndarray:
    """Smooth pseudo-random field in [-1, 1], defined on all of R^2."""
    amps, freqs, angles, phases = _wave_params(seed_key)
    out = np.zeros(np.broadcast(xs, ys).shape, dtype=np.float64)
    for a, f, t, p in zip(amps, freqs, angles, phases):
        out += a * np.cos(2 * np.pi * f * (np.cos(t) * xs + np.sin(t) * ys) + p)
    return out


def smooth_texture(width: int, height: int, seed: int, lo: float = 0.2, hi: float = 0.8) -> GrayImage:
    """A standalone smooth textured image; handy for optical-flow tests."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    field = _wave_field(xs, ys, [seed, 0x7EC5])
    data = lo + (hi - lo) * (field + 1.0) / 2.0
    return GrayImage(np.clip(data, 0.0, 1.0))


def _shape_mask(spec: SceneSpec, x0: int, y0: int) -> np.ndarray:
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    s = spec.size
    if spec.shape == "square":
        mask[y0 : y0 + s, x0 : x0 + s] = True
    elif spec.shape == "disk":
        r = (s - 1) / 2.0
        cy, cx = y0 + r, x0 + r
        ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
        mask[(xs - cx) ** 2 + (ys - cy) ** 2 <= r * r + 0.25] = True
    else:  # lshape: full square minus its top-right quadrant
        mask[y0 : y0 + s, x0 : x0 + s] = True
        notch = s // 2
        mask[y0 : y0 + notch, x0 + s - notch : x0 + s] = False
    return mask


def tight_box(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tight inclusive pixel box (x0, y0, x1, y1) of a boolean mask."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("cannot box an empty mask")
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def render_scene(spec: SceneSpec, frame: int) -> tuple[GrayImage, tuple[int, int, int, int], np.ndarray]:
    """Render one frame; returns (image, ground-truth box, ground-truth mask).

    The object carries its own texture (sampled in object-local coordinates,
    so it translates rigidly); the background texture is static unless
    bg_vel scrolls it. The occluding bar, when active, covers the image but
    never the ground truth.
    """
    if frame < 0 or frame >= spec.frames:
        raise IndexError(f"frame {frame} out of range [0, {spec.frames})")
    x0, y0 = spec.position(frame)
    mask = _shape_mask(spec, x0, y0)

    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    bg = _wave_field(
        xs + spec.bg_vel_x * frame, ys + spec.bg_vel_y * frame, [spec.seed, 1]
    )
    obj = _wave_field(xs - x0, ys - y0, [spec.seed, 2])
    data = 0.25 + 0.10 * bg
    data[mask] = 0.78 + 0.16 * obj[mask]

    occ = spec.occluder
    if occ is not None and occ.active(frame):
        bar = _wave_field(xs, ys, [spec.seed, 3])
        sl = slice(max(occ.x, 0), min(occ.x + occ.width, spec.width))
        data[:, sl] = 0.52 + 0.06 * bar[:, sl]

    if spec.noise > 0:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, 4, frame])))
        data = data + rng.uniform(-spec.noise, spec.noise, data.shape)

    box = tight_box(mask)
    return GrayImage(np.clip(data, 0.0, 1.0)), box, mask


def mask_to_pgm(mask: np.ndarray, path: str) -> None:
    """Write a boolean mask as PGM (0 background, 255 foreground)."""
    write_pgm(GrayImage(mask.astype(np.float64)), path)


def write_scene(spec: SceneSpec, out_dir: str) -> list[str]:
    """Materialize a scene: frame PGMs, frame-0 object mask, ground-truth CSV.

    Returns the list of frame paths (lexicographic order matches frame order).
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    gt_rows = []
    for i in range(spec.frames):
        img, box, mask = render_scene(spec, i)
        path = os.path.join(out_dir, f"frame_{i:04d}.pgm")
        write_pgm(img, path)
        paths.append(path)
        gt_rows.append((i, *box))
        if i == 0:
            mask_to_pgm(mask, os.path.join(out_dir, "mask.pgm"))
    with open(os.path.join(out_dir, "groundtruth.csv"), "w", encoding="ascii") as fh:
        fh.write("frame,x0,y0,x1,y1\n")
        for row in gt_rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return paths
