"""Float32 feature tensors, instance statistics and the RSDT file format.

RSDT layout (all little-endian)::

    b"RSDT" | u32 rank | rank x u64 extents | prod(extents) x f32, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RSDT"
MAX_RANK = 4
# refuse to allocate absurd payloads from a corrupt header
MAX_ELEMENTS = 1 << 34


class TensorFormatError(ValueError):
    pass


def as_tensor(data, *, rank: int | None = None) -> np.ndarray:
    """Validate and convert to a C-contiguous float32 array."""
    t = np.ascontiguousarray(data, dtype=np.float32)
    if not 1 <= t.ndim <= MAX_RANK:
        raise ValueError(f"supported ranks are 1-{MAX_RANK}, got {t.ndim}")
    if rank is not None and t.ndim != rank:
        raise ValueError(f"expected rank {rank}, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains non-finite values")
    return t


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def channels(self) -> int:
        return len(self.mean)


def channel_stats(t) -> ChannelStats:
    """Per-channel spatial mean and population std of a C x H x W tensor."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"channel_stats needs a C x H x W tensor, got shape {t.shape}")
    if t.shape[1] * t.shape[2] < 1:
        raise ValueError("spatial extent must be >= 1")
    flat = t.reshape(t.shape[0], -1).astype(np.float64)
    mean = flat.mean(axis=1)
    std = np.sqrt(((flat - mean[:, None]) ** 2).mean(axis=1))
    return ChannelStats(mean, std)


def encode_tensor(t) -> bytes:
    t = as_tensor(t)
    header = MAGIC + struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}Q", *t.shape)
    return header + t.astype("<f4", copy=False).tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 8:
        raise TensorFormatError("truncated RSDT header")
    if data[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack_from("<I", data, 4)
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"unsupported rank {rank}")
    off = 8 + 8 * rank
    if len(data) < off:
        raise TensorFormatError("truncated RSDT extents")
    shape = struct.unpack_from(f"<{rank}Q", data, 8)
    count = 1
    for e in shape:
        count *= e
        if count > MAX_ELEMENTS:
            raise TensorFormatError(f"extents {shape} overflow the element limit")
    payload = data[off:]
    if len(payload) != 4 * count:
        raise TensorFormatError(
            f"payload is {len(payload)} bytes, expected {4 * count} for shape {shape}"
        )
    # native float32 copy; bit pattern preserved
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)


def write_tensor(t, path) -> None:
    Path(path).write_bytes(encode_tensor(t))


def read_tensor(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise TensorFormatError(f"cannot read {path}: {exc.strerror}") from None
    return decode_tensor(data)
