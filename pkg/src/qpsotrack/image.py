"""Grayscale image container, frame I/O, and spatial/temporal derivatives.

Images hold float64 intensities normalized to [0, 1], row-major (shape
(height, width)), and are immutable after construction. Frame sources are
binary PGM (P5, 8-bit) and PNG; color PNG input is reduced to luma with the
fixed weights 0.299/0.587/0.114.
"""
from __future__ import annotations

import glob
import os
from dataclasses import dataclass, field

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class GrayImage:
    """A rectangular grid of real-valued intensities.

    Loaded and rendered frames carry values in [0, 1]; derivative planes
    (gradients, temporal differences) reuse this container with signed
    values, so the constructor checks finiteness and shape only.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"image data must be a nonempty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite intensities")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def same_size(self, other: "GrayImage") -> bool:
        return self.shape == other.shape


def _check_unit_range(arr: np.ndarray, what: str) -> None:
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{what}: intensities outside [0, 1] (min {lo:.4g}, max {hi:.4g})")


def read_pgm(path: str) -> GrayImage:
    """Read a binary (P5) 8-bit PGM file and scale it to [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()

    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(raw):
            raise ValueError(f"{path}: truncated PGM header")
        ch = raw[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            pos = raw.find(b"\n", pos)
            if pos < 0:
                raise ValueError(f"{path}: unterminated PGM comment")
        else:
            end = pos
            while end < len(raw) and not raw[end : end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise ValueError(f"{path}: truncated PGM pixel data")
    data = pixels.reshape(height, width).astype(np.float64) / float(maxval)
    return GrayImage(data)


def write_pgm(img: GrayImage, path: str) -> None:
    """Write an image as binary 8-bit PGM, clamping to [0, 1] first."""
    u8 = np.clip(np.rint(np.clip(img.data, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(u8.tobytes())


def read_png(path: str) -> GrayImage:
    """Read a PNG, converting color to luma, scaled to [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        else:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
            r, g, b = LUMA_WEIGHTS
            arr = r * rgb[:, :, 0] + g * rgb[:, :, 1] + b * rgb[:, :, 2]
    return GrayImage(np.clip(arr, 0.0, 1.0))


def write_png(img: GrayImage, path: str) -> None:
    from PIL import Image

    u8 = np.clip(np.rint(np.clip(img.data, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path)


def read_frame(path: str) -> GrayImage:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        img = read_pgm(path)
    elif ext == ".png":
        img = read_png(path)
    else:
        raise ValueError(f"{path}: unsupported frame format {ext!r} (expected .pgm or .png)")
    _check_unit_range(img.data, path)
    return img


def write_frame(img: GrayImage, path: str) -> None:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        write_pgm(img, path)
    elif ext == ".png":
        write_png(img, path)
    else:
        raise ValueError(f"{path}: unsupported frame format {ext!r} (expected .pgm or .png)")


def load_frames(directory: str, pattern: str = "*.pgm") -> list[GrayImage]:
    """Load all frames matching ``pattern`` in lexicographic filename order.

    Raises distinct errors for a missing directory, zero matches, and
    dimension mismatches between frames (naming both offending files).
    """
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"frame directory does not exist: {directory}")
    paths = sorted(glob.glob(os.path.join(directory, pattern)))
    if not paths:
        raise ValueError(f"zero matches for pattern {pattern!r} in {directory}")
    frames = [read_frame(p) for p in paths]
    first = frames[0]
    for p, f in zip(paths[1:], frames[1:]):
        if not f.same_size(first):
            raise ValueError(
                f"frame dimension mismatch: {paths[0]} is {first.width}x{first.height}, "
                f"{p} is {f.width}x{f.height}"
            )
    return frames


def spatial_gradients(img: GrayImage) -> tuple[GrayImage, GrayImage]:
    """Per-pixel intensity derivatives along x and y.

    Central differences (I[x+1] - I[x-1])/2 in the interior, one-sided
    differences on borders. Requires at least a 3x3 image.
    """
    if img.width < 3 or img.height < 3:
        raise ValueError(f"image too small for gradients: {img.width}x{img.height} (need >= 3x3)")
    a = img.data
    ix = np.empty_like(a)
    ix[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / 2.0
    ix[:, 0] = a[:, 1] - a[:, 0]
    ix[:, -1] = a[:, -1] - a[:, -2]
    iy = np.empty_like(a)
    iy[1:-1, :] = (a[2:, :] - a[:-2, :]) / 2.0
    iy[0, :] = a[1, :] - a[0, :]
    iy[-1, :] = a[-1, :] - a[-2, :]
    return GrayImage(ix), GrayImage(iy)


def temporal_diff(prev: GrayImage, next_: GrayImage) -> GrayImage:
    """Per-pixel intensity change next - prev; frames must share dimensions."""
    if not prev.same_size(next_):
        raise ValueError(
            f"temporal_diff dimension mismatch: {prev.width}x{prev.height} vs "
            f"{next_.width}x{next_.height}"
        )
    return GrayImage(next_.data - prev.data)


def bilinear_sample(img: GrayImage, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample intensities at real-valued coordinates with bilinear interpolation.

    Coordinates are clamped to the valid sampling domain
    [0, width-1] x [0, height-1].
    """
    a = img.data
    x = np.clip(np.asarray(xs, dtype=np.float64), 0.0, img.width - 1.0)
    y = np.clip(np.asarray(ys, dtype=np.float64), 0.0, img.height - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = x - x0
    fy = y - y0
    top = a[y0, x0] * (1.0 - fx) + a[y0, x1] * fx
    bot = a[y1, x0] * (1.0 - fx) + a[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def translate(img: GrayImage, dx: float, dy: float) -> GrayImage:
    """Shift image content by (dx, dy) pixels via bilinear resampling.

    out(x, y) = in(x - dx, y - dy); samples outside the source clamp to its
    border. Used to synthesize known-motion frame pairs.
    """
    ys, xs = np.mgrid[0 : img.height, 0 : img.width].astype(np.float64)
    return GrayImage(bilinear_sample(img, xs - dx, ys - dy))
