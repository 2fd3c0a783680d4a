"""Rainfall-rate driven rain-streak synthesis and feature-level style tools."""

__version__ = "0.1.0"

from .fadain import FadainConfig, fadain
from .image import ImageBuffer, Rgba, blend_pixel, load_image, save_image
from .rain import CountModel, RainLayerSpec, StreakGeometry, resolve_spec, streak_count
from .streaks import RainLayer, StreakSegment, composite, generate_layer
from .tensor import ChannelStats, channel_stats, read_tensor, write_tensor

__all__ = [
    "ChannelStats", "CountModel", "FadainConfig", "ImageBuffer", "RainLayer",
    "RainLayerSpec", "Rgba", "StreakGeometry", "StreakSegment", "blend_pixel",
    "channel_stats", "composite", "fadain", "generate_layer", "load_image",
    "read_tensor", "resolve_spec", "save_image", "streak_count", "write_tensor",
]
