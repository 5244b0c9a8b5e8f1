from __future__ import annotations

import math
from dataclasses import dataclass

from semantly.core.exceptions import ConfigError


@dataclass(frozen=True, slots=True)
class LaserScan:
    """Planar range scan. Non-finite ranges mean no return."""

    stamp: float
    angle_min: float
    angle_increment: float
    range_min: float
    range_max: float
    ranges: tuple[float, ...]

    def __post_init__(self):
        if self.angle_increment == 0:
            raise ConfigError("angle_increment must be non-zero")
        if not 0 <= self.range_min < self.range_max:
            raise ConfigError(f"invalid range limits [{self.range_min}, {self.range_max}]")
        object.__setattr__(
            self, "ranges",
            tuple(math.nan if r is None else float(r) for r in self.ranges),
        )

    def beam_angle(self, index: int) -> float:
        return self.angle_min + index * self.angle_increment

    def to_dict(self) -> dict:
        return {
            "t": self.stamp,
            "type": "scan",
            "angle_min": self.angle_min,
            "angle_increment": self.angle_increment,
            "range_min": self.range_min,
            "range_max": self.range_max,
            "ranges": [r if math.isfinite(r) else None for r in self.ranges],
        }
