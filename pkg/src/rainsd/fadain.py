"""Feature adaptive instance normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import channel_stats


@dataclass(frozen=True)
class FadainConfig:
    epsilon: float = 1e-5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


def fadain(z, f, cfg: FadainConfig = FadainConfig()) -> np.ndarray:
    """Give ``z`` the per-channel mean/std of ``f``.

    out = std_f * (z - mean_z) / (std_z + eps) + mean_f

    Only the statistics of ``f`` are used, so its spatial extent may differ
    from ``z``'s.
    """
    z = np.asarray(z)
    f = np.asarray(f)
    if z.ndim != 3 or f.ndim != 3:
        raise ValueError(f"fadain needs C x H x W tensors, got {z.shape} and {f.shape}")
    if z.shape[0] != f.shape[0]:
        raise ValueError(f"channel mismatch: content {z.shape[0]}, style {f.shape[0]}")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(f))):
        raise ValueError("fadain inputs must be finite")
    sz, sf = channel_stats(z), channel_stats(f)
    scale = (sf.std / (sz.std + cfg.epsilon))[:, None, None]
    out = scale * (z.astype(np.float64) - sz.mean[:, None, None]) + sf.mean[:, None, None]
    return out.astype(np.float32)
