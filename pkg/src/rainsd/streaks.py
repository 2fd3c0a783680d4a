"""Streak placement, rasterization and compositing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import ImageBuffer, Rgba, blend_into, round_half_up
from .prng import SplitMix64
from .rain import RainLayerSpec


@dataclass(frozen=True)
class StreakSegment:
    x_anchor: int
    y_start: int
    length: int
    angle_degrees: float
    thickness: int

    def to_line(self) -> str:
        return f"{self.x_anchor} {self.y_start} {self.length} {self.angle_degrees:g} {self.thickness}"


@dataclass(frozen=True)
class RainLayer:
    segments: tuple[StreakSegment, ...]
    spec: RainLayerSpec

    def __len__(self):
        return len(self.segments)


def grid_points(width: int, interval: int) -> list[int]:
    return list(range(0, width, interval))


def generate_layer(spec: RainLayerSpec) -> RainLayer:
    """Place ``spec.count`` streaks.

    Segment i sits on grid point ``(i mod G) * interval`` shifted left by a
    jitter drawn uniformly from [0, interval); positions left of the image
    wrap around modulo the width. Per segment the stream is consumed in the
    order jitter, length, y_start.
    """
    geo = spec.geometry
    width, height = spec.target_width, spec.target_height
    n = spec.count
    lo, hi = geo.scaled_lengths(spec.scale)
    # bulk draw; row i holds that segment's (jitter, length, y_start) uniforms,
    # and each is mapped exactly as SplitMix64.below would map it
    u = SplitMix64(spec.seed).uniform_block(3 * n).reshape(n, 3)
    grid = np.arange(0, width, geo.interval, dtype=np.int64)
    x = grid[np.arange(n) % len(grid)] - (u[:, 0] * geo.interval).astype(np.int64)
    x = np.mod(x, width)  # interval may exceed width
    length = lo + (u[:, 1] * (hi - lo + 1)).astype(np.int64)
    y = (u[:, 2] * (np.maximum(0, height - length) + 1)).astype(np.int64)
    segments = [
        StreakSegment(int(xi), int(yi), int(li), geo.angle_degrees, geo.thickness)
        for xi, yi, li in zip(x.tolist(), y.tolist(), length.tolist())
    ]
    return RainLayer(tuple(segments), spec)


def _line_points(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer Bresenham line, both endpoints included."""
    pts = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pts.append((x, y))
        if x == x1 and y == y1:
            return pts
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def segment_pixels(seg: StreakSegment, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices covered by ``seg``, clipped, each pixel once.

    The axis runs from (x_anchor, y_start) along the angle (90 degrees points
    down the image). Thickness is applied as whole-pixel offsets along the
    perpendicular, centred on the axis.
    """
    theta = math.radians(seg.angle_degrees)
    c, s = math.cos(theta), math.sin(theta)
    span = seg.length - 1
    x1 = seg.x_anchor + int(round_half_up(span * c))
    y1 = seg.y_start + int(round_half_up(span * s))
    axis = _line_points(seg.x_anchor, seg.y_start, x1, y1)
    offsets = range(-((seg.thickness - 1) // 2), seg.thickness // 2 + 1)
    seen = set()
    rows, cols = [], []
    for k in offsets:
        ox = int(round_half_up(-s * k))
        oy = int(round_half_up(c * k))
        for x, y in axis:
            px, py = x + ox, y + oy
            if 0 <= px < width and 0 <= py < height and (py, px) not in seen:
                seen.add((py, px))
                rows.append(py)
                cols.append(px)
    return np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp)


def composite(content: ImageBuffer, layer: RainLayer, paint: Rgba | None = None) -> ImageBuffer:
    """Blend every segment onto a copy of ``content``, in segment order."""
    spec = layer.spec
    if (content.width, content.height) != (spec.target_width, spec.target_height):
        raise ValueError(
            f"layer is {spec.target_width}x{spec.target_height}, "
            f"image is {content.width}x{content.height}"
        )
    paint = paint or spec.geometry.color
    out = np.array(content.array, copy=True)
    if paint.alpha == 0.0:
        return ImageBuffer(out)
    for seg in layer.segments:
        rows, cols = segment_pixels(seg, content.width, content.height)
        if rows.size:
            blend_into(out, rows, cols, paint)
    return ImageBuffer(out)


def dump_layer(layer: RainLayer, path) -> None:
    """One segment per line: x y length angle thickness."""
    text = "".join(seg.to_line() + "\n" for seg in layer.segments)
    Path(path).write_text(text, encoding="ascii")


def read_layer_dump(path) -> list[StreakSegment]:
    segs = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        x, y, length, angle, thick = line.split()
        segs.append(StreakSegment(int(x), int(y), int(length), float(angle), int(thick)))
    return segs
