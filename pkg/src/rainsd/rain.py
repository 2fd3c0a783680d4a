"""Rainfall rate -> streak count and streak geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .image import Rgba, round_half_up
from .prng import MASK64

PRESET_RATES = tuple(range(10, 101, 10))


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CountModel:
    """n = round(k * rate**gamma * area / reference_area).

    The experimental count equation this toolkit is modelled after is not
    published alongside the resolution adjustment, so both the coefficient
    and the exponent are configuration, not constants.
    """

    k: float = 6.0
    gamma: float = 1.0
    reference_width: int = 800
    reference_height: int = 600

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.reference_width < 1 or self.reference_height < 1:
            raise ValueError("reference dims must be >= 1")

    def scale(self, width: int, height: int) -> float:
        return (width * height) / (self.reference_width * self.reference_height)


@dataclass(frozen=True)
class StreakGeometry:
    length_range: tuple[int, int] = (15, 35)
    thickness: int = 1
    angle_degrees: float = 90.0
    color: Rgba = field(default_factory=lambda: Rgba(200, 200, 200, 0.6))
    interval: int = 20

    def __post_init__(self):
        lo, hi = self.length_range
        if not 0 < lo <= hi:
            raise GeometryError(f"invalid length range ({lo}, {hi})")
        if self.thickness < 1:
            raise GeometryError(f"thickness must be >= 1, got {self.thickness}")
        if self.interval < 1:
            raise GeometryError(f"interval must be >= 1, got {self.interval}")

    def scaled_lengths(self, s: float) -> tuple[int, int]:
        """Length range at a resolution whose area ratio to the reference is s."""
        f = math.sqrt(s)
        lo = max(1, int(round_half_up(self.length_range[0] * f)))
        hi = max(lo, int(round_half_up(self.length_range[1] * f)))
        return lo, hi


def streak_count(model: CountModel, rate: float, width: int, height: int) -> int:
    if rate < 0:
        raise ValueError(f"rainfall rate must be >= 0, got {rate}")
    if width < 1 or height < 1:
        raise ValueError("dims must be >= 1")
    if rate == 0:
        return 0
    return int(round_half_up(model.k * rate ** model.gamma * model.scale(width, height)))


@dataclass(frozen=True)
class RainLayerSpec:
    rate: float
    geometry: StreakGeometry
    target_width: int
    target_height: int
    seed: int
    count_model: CountModel
    count: int

    @property
    def scale(self) -> float:
        return self.count_model.scale(self.target_width, self.target_height)


def resolve_spec(
    rate: float,
    geometry: StreakGeometry | None = None,
    dims: tuple[int, int] = (800, 600),
    seed: int = 0,
    model: CountModel | None = None,
) -> RainLayerSpec:
    """Build a layer spec with its derived streak count. ``dims`` is (width, height)."""
    geometry = geometry or StreakGeometry()
    model = model or CountModel()
    width, height = dims
    if width < 1 or height < 1:
        raise ValueError(f"target dims must be >= 1, got {width}x{height}")
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    n = streak_count(model, rate, width, height)
    return RainLayerSpec(rate, geometry, width, height, seed, model, n)


# config section [rain]
RAIN_KEYS = {
    "k", "gamma", "reference_width", "reference_height", "length_min",
    "length_max", "thickness", "angle_degrees", "color", "alpha", "interval",
}


def from_config(section: dict) -> tuple[CountModel, StreakGeometry]:
    unknown = set(section) - RAIN_KEYS
    if unknown:
        raise KeyError(f"unknown key(s) in [rain]: {', '.join(sorted(unknown))}")
    dm, dg = CountModel(), StreakGeometry()
    model = CountModel(
        k=float(section.get("k", dm.k)),
        gamma=float(section.get("gamma", dm.gamma)),
        reference_width=int(section.get("reference_width", dm.reference_width)),
        reference_height=int(section.get("reference_height", dm.reference_height)),
    )
    color = section.get("color", list(dg.color.rgb))
    if len(color) != 3:
        raise ValueError("[rain] color must be a 3-element RGB list")
    geometry = StreakGeometry(
        length_range=(
            int(section.get("length_min", dg.length_range[0])),
            int(section.get("length_max", dg.length_range[1])),
        ),
        thickness=int(section.get("thickness", dg.thickness)),
        angle_degrees=float(section.get("angle_degrees", dg.angle_degrees)),
        color=Rgba(*(int(c) for c in color), float(section.get("alpha", dg.color.alpha))),
        interval=int(section.get("interval", dg.interval)),
    )
    return model, geometry
