"""RGB raster type, PNG/PPM codecs and alpha blending."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported or corrupt image files."""


@dataclass(frozen=True)
class Rgba:
    r: int
    g: int
    b: int
    alpha: float

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise ValueError(f"channel {name}={v} outside [0, 255]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")

    @property
    def rgb(self) -> tuple[int, int, int]:
        return (self.r, self.g, self.b)


class ImageBuffer:
    """H x W x 3 uint8 raster.

    The pixel array is stored read-only so a buffer can be shared between
    pipeline stages and threads without defensive copies.
    """

    __slots__ = ("_data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected H x W x 3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
        arr = np.array(arr, copy=True, order="C")
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "ImageBuffer":
        if len(data) != width * height * 3:
            raise ValueError(
                f"data length {len(data)} != {width}*{height}*3"
            )
        arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return cls(arr)

    @classmethod
    def filled(cls, width: int, height: int, rgb=(0, 0, 0)) -> "ImageBuffer":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[...] = np.asarray(rgb, dtype=np.uint8)
        return cls(arr)

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def array(self) -> np.ndarray:
        return self._data

    def to_bytes(self) -> bytes:
        return self._data.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(
            np.array_equal(self._data, other._data)
        )

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"


def round_half_up(x):
    """Round to nearest integer, ties away from zero for x >= 0."""
    if isinstance(x, np.ndarray):
        return np.floor(x + 0.5)
    return math.floor(x + 0.5)


def blend_pixel(base, paint: Rgba) -> tuple[int, int, int]:
    a = paint.alpha
    return tuple(
        int(round_half_up(a * p + (1.0 - a) * b)) for b, p in zip(base, paint.rgb)
    )


def blend_into(arr: np.ndarray, rows, cols, paint: Rgba) -> None:
    """Vectorised blend_pixel over the pixels ``arr[rows, cols]`` in place."""
    a = paint.alpha
    base = arr[rows, cols].astype(np.float64)
    color = np.asarray(paint.rgb, dtype=np.float64)
    arr[rows, cols] = round_half_up(a * color + (1.0 - a) * base).astype(np.uint8)


# --- PPM (P6, maxval 255) -------------------------------------------------

_WS = b" \t\r\n"


def _ppm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` header tokens; returns tokens and payload offset."""
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i] in _WS:
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in b"\r\n":
                i += 1
            continue
        if i >= n:
            raise ImageFormatError("corrupt PPM header: unexpected end of file")
        start = i
        while i < n and data[i] not in _WS:
            i += 1
        tokens.append(data[start:i])
    # exactly one whitespace byte separates maxval from the raster
    if i >= n or data[i] not in _WS:
        raise ImageFormatError("corrupt PPM header: missing raster separator")
    return tokens, i + 1


def decode_ppm(data: bytes) -> ImageBuffer:
    if not data.startswith(b"P6"):
        raise ImageFormatError("not a binary PPM (P6) file")
    tokens, offset = _ppm_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"corrupt PPM header: {exc}") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"corrupt PPM header: dims {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval}")
    need = width * height * 3
    payload = data[offset:offset + need]
    if len(payload) != need:
        raise ImageFormatError(
            f"corrupt PPM: expected {need} raster bytes, found {len(payload)}"
        )
    return ImageBuffer.from_bytes(width, height, payload)


def encode_ppm(img: ImageBuffer) -> bytes:
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + img.to_bytes()


# --- PNG ------------------------------------------------------------------

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def decode_png(data: bytes) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode not in ("RGB", "RGBA", "L", "P"):
                raise ImageFormatError(f"unsupported PNG mode {im.mode}")
            rgb = im.convert("RGB") if im.mode != "RGB" else im
            arr = np.asarray(rgb, dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on bad input
        raise ImageFormatError(f"corrupt PNG: {exc}") from None
    return ImageBuffer(arr)


def encode_png(img: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.array, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_image(data: bytes) -> ImageBuffer:
    if data.startswith(_PNG_MAGIC):
        return decode_png(data)
    if data.startswith(b"P6"):
        return decode_ppm(data)
    if len(data) < 2:
        raise ImageFormatError("corrupt header: file too short")
    raise ImageFormatError("unsupported image format (expected PNG or P6 PPM)")


def load_image(path) -> ImageBuffer:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc.strerror}") from None
    return decode_image(data)


def save_image(img: ImageBuffer, path) -> None:
    """Write PNG, or PPM when the suffix is .ppm."""
    path = Path(path)
    data = encode_ppm(img) if path.suffix.lower() == ".ppm" else encode_png(img)
    path.write_bytes(data)
