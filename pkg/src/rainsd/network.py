"""Forward-only two-stream generator: content/style encoders and a FADE decoder.

Parameter names (all float32 arrays)::

    {stream}.enc{i}.conv.w/.b   3x3, stride 1 at level 0, stride 2 above
    {stream}.enc{i}.skip.w/.b   1x1 with the same stride
    gen.fade{i}.gamma.w/.b      3x3 on the content feature -> per-element scale
    gen.fade{i}.beta.w/.b       3x3 on the content feature -> per-element shift
    gen.fade{i}.conv.w/.b       3x3 on the modulated activation
    gen.up{i}.w/.b              1x1 channel reduction after upsampling (i >= 1)
    gen.out.w/.b                3x3 to RGB

where stream is ``content`` or ``style`` and level i has
``base_channels * 2**i`` channels at ``(H / 2**i) x (W / 2**i)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .fadain import FadainConfig, fadain
from .image import ImageBuffer, round_half_up
from .prng import SplitMix64, derive_seed
from .tensor import read_tensor, write_tensor

STREAMS = ("content", "style")
LEAK = 0.2
INIT_BOUND = 0.1
NORM_EPS = 1e-5
# guard for the generator's style injection; intermediates here can have
# per-channel std near 1e-2, where 1e-5 would bias the transferred std by 1e-3
GEN_FADAIN = FadainConfig(epsilon=1e-8)


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 4
    base_channels: int = 8
    spatial_input: tuple[int, int] = (64, 64)  # (H, W)
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        h, w = self.spatial_input
        step = 2 ** self.levels
        if h < step or w < step or h % step or w % step:
            raise ValueError(
                f"spatial input {h}x{w} must be a positive multiple of 2**levels={step}"
            )

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def spatial(self, level: int) -> tuple[int, int]:
        h, w = self.spatial_input
        return h >> level, w >> level

    def level_shape(self, level: int) -> tuple[int, int, int]:
        return (self.channels(level), *self.spatial(level))


def leaky_relu(x):
    return np.where(x >= 0, x, LEAK * x).astype(np.float32)


def conv2d(x, w, b, stride: int = 1) -> np.ndarray:
    """Cross-correlation with 'same' zero padding for odd kernels."""
    cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"conv expects {cin_w} input channels, got {cin}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    oh, ow = (h + stride - 1) // stride, (wd + stride - 1) // stride
    out = np.zeros((cout, oh, ow), dtype=np.float32)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, dy:dy + stride * oh:stride, dx:dx + stride * ow:stride]
            out += np.tensordot(w[:, :, dy, dx], patch, axes=(1, 0))
    out += b[:, None, None]
    return out


def instance_norm(z, eps: float = NORM_EPS) -> np.ndarray:
    z64 = z.astype(np.float64)
    mu = z64.mean(axis=(1, 2), keepdims=True)
    sd = np.sqrt(((z64 - mu) ** 2).mean(axis=(1, 2), keepdims=True))
    return ((z64 - mu) / (sd + eps)).astype(np.float32)


def upsample2x(z) -> np.ndarray:
    return z.repeat(2, axis=1).repeat(2, axis=2)


def image_to_tensor(img: ImageBuffer) -> np.ndarray:
    # raw 0..255 intensities: black maps to zero, and deep features keep
    # enough spatial variance for the FAdaIN guard to stay negligible
    return img.array.transpose(2, 0, 1).astype(np.float32)


def tensor_to_image(t) -> ImageBuffer:
    px = round_half_up((np.asarray(t, dtype=np.float64) + 1.0) * 127.5)
    return ImageBuffer(np.clip(px, 0, 255).astype(np.uint8).transpose(1, 2, 0))


def param_shapes(cfg: NetworkConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for stream in STREAMS:
        for i in range(cfg.levels + 1):
            cin = 3 if i == 0 else cfg.channels(i - 1)
            cout = cfg.channels(i)
            p = f"{stream}.enc{i}"
            shapes[f"{p}.conv.w"] = (cout, cin, 3, 3)
            shapes[f"{p}.conv.b"] = (cout,)
            shapes[f"{p}.skip.w"] = (cout, cin, 1, 1)
            shapes[f"{p}.skip.b"] = (cout,)
    for i in range(cfg.levels + 1):
        c = cfg.channels(i)
        for part in ("gamma", "beta", "conv"):
            shapes[f"gen.fade{i}.{part}.w"] = (c, c, 3, 3)
            shapes[f"gen.fade{i}.{part}.b"] = (c,)
        if i >= 1:
            shapes[f"gen.up{i}.w"] = (cfg.channels(i - 1), c, 1, 1)
            shapes[f"gen.up{i}.b"] = (cfg.channels(i - 1),)
    shapes["gen.out.w"] = (3, cfg.base_channels, 3, 3)
    shapes["gen.out.b"] = (3,)
    return shapes


def init_params(cfg: NetworkConfig) -> dict[str, np.ndarray]:
    """Weights uniform in [-0.1, 0.1], one derived stream per name; biases zero."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=np.float32)
            continue
        rng = SplitMix64(derive_seed(cfg.seed, name))
        u = rng.uniform_block(int(np.prod(shape)))
        params[name] = ((2.0 * u - 1.0) * INIT_BOUND).astype(np.float32).reshape(shape)
    return params


def save_weights(params: dict[str, np.ndarray], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name in sorted(params):
        fname = f"{name}.rsdt"
        write_tensor(params[name], directory / fname)
        manifest[name] = fname
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_weights(directory) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return {name: read_tensor(directory / fname) for name, fname in manifest.items()}


def down_block(x, params, prefix: str, stride: int) -> np.ndarray:
    main = leaky_relu(conv2d(x, params[f"{prefix}.conv.w"], params[f"{prefix}.conv.b"], stride))
    skip = conv2d(x, params[f"{prefix}.skip.w"], params[f"{prefix}.skip.b"], stride)
    return main + skip


def fade_block(z, c, params, prefix: str = "") -> np.ndarray:
    """out = z + conv(lrelu(gamma(c) * instance_norm(z) + beta(c))).

    ``params`` holds ``gamma.w/.b``, ``beta.w/.b`` and ``conv.w/.b`` under
    ``prefix``.
    """
    z = np.asarray(z, dtype=np.float32)
    c = np.asarray(c, dtype=np.float32)
    if z.shape != c.shape:
        raise ValueError(f"fade_block shape mismatch: z {z.shape}, c {c.shape}")
    p = f"{prefix}." if prefix else ""
    gamma = conv2d(c, params[f"{p}gamma.w"], params[f"{p}gamma.b"])
    beta = conv2d(c, params[f"{p}beta.w"], params[f"{p}beta.b"])
    h = leaky_relu(gamma * instance_norm(z) + beta)
    return z + conv2d(h, params[f"{p}conv.w"], params[f"{p}conv.b"])


class TwoStreamNet:
    def __init__(self, cfg: NetworkConfig, params: dict[str, np.ndarray] | None = None,
                 fadain_cfg: FadainConfig = GEN_FADAIN):
        self.cfg = cfg
        self.params = init_params(cfg) if params is None else dict(params)
        self.fadain_cfg = fadain_cfg
        expected = param_shapes(cfg)
        for name, shape in expected.items():
            if name not in self.params:
                raise KeyError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: shape {self.params[name].shape}, expected {shape}")

    def encode(self, stream: str, img) -> list[np.ndarray]:
        """Feature pyramid f_0 .. f_L for an ImageBuffer or 3 x H x W tensor."""
        if stream not in STREAMS:
            raise ValueError(f"unknown stream {stream!r}")
        x = image_to_tensor(img) if isinstance(img, ImageBuffer) else np.asarray(img, np.float32)
        if x.shape != (3, *self.cfg.spatial_input):
            raise ValueError(
                f"input is {x.shape[1]}x{x.shape[2]}, network expects "
                f"{self.cfg.spatial_input[0]}x{self.cfg.spatial_input[1]}"
            )
        feats = []
        for i in range(self.cfg.levels + 1):
            x = down_block(x, self.params, f"{stream}.enc{i}", 1 if i == 0 else 2)
            feats.append(x)
        return feats

    def noise(self, seed: int) -> np.ndarray:
        shape = self.cfg.level_shape(self.cfg.levels)
        rng = SplitMix64(derive_seed(seed, "z0"))
        return rng.normal_block(int(np.prod(shape))).astype(np.float32).reshape(shape)

    def generate_tensor(self, z0, content_pyr, style_pyr,
                        on_fadain: Callable[[int, np.ndarray], None] | None = None) -> np.ndarray:
        cfg = self.cfg
        L = cfg.levels
        if len(content_pyr) != L + 1 or len(style_pyr) != L + 1:
            raise ValueError(f"pyramids must have {L + 1} levels")
        z = np.asarray(z0, dtype=np.float32)
        if z.shape != cfg.level_shape(L):
            raise ValueError(f"z0 has shape {z.shape}, expected {cfg.level_shape(L)}")
        for i in range(L, -1, -1):
            if content_pyr[i].shape != cfg.level_shape(i):
                raise ValueError(f"content level {i}: shape {content_pyr[i].shape}")
            if style_pyr[i].shape[0] != cfg.channels(i):
                raise ValueError(f"style level {i}: shape {style_pyr[i].shape}")
            z = fadain(z, style_pyr[i], self.fadain_cfg)
            if on_fadain is not None:
                on_fadain(i, z)
            z = fade_block(z, content_pyr[i], self.params, f"gen.fade{i}")
            if i > 0:
                z = conv2d(upsample2x(z), self.params[f"gen.up{i}.w"], self.params[f"gen.up{i}.b"])
        return np.tanh(conv2d(z, self.params["gen.out.w"], self.params["gen.out.b"]))

    def generate(self, z0, content_pyr, style_pyr, on_fadain=None) -> ImageBuffer:
        return tensor_to_image(self.generate_tensor(z0, content_pyr, style_pyr, on_fadain))

    def translate(self, content: ImageBuffer, style: ImageBuffer, seed: int) -> ImageBuffer:
        return self.generate(self.noise(seed), self.encode("content", content),
                             self.encode("style", style))
