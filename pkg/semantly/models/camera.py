from __future__ import annotations

import math
from dataclasses import dataclass

from semantly.core.exceptions import ConfigError


@dataclass(frozen=True, slots=True)
class CameraIntrinsics:
    """Pinhole intrinsics of the color stream (depth is aligned to it)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @property
    def horizontal_fov(self) -> float:
        return 2.0 * math.atan(self.width / (2.0 * self.fx))

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }


@dataclass(frozen=True, slots=True)
class BBox:
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ConfigError(f"degenerate bbox {self.to_list()}")

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    def within(self, intr: CameraIntrinsics) -> bool:
        return (
            self.u_min >= 0 and self.v_min >= 0
            and self.u_max <= intr.width and self.v_max <= intr.height
        )

    def to_list(self) -> list[float]:
        return [self.u_min, self.v_min, self.u_max, self.v_max]


@dataclass(frozen=True, slots=True)
class Detection2D:
    class_label: str
    score: float
    bbox: BBox

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ConfigError(f"score {self.score} outside [0, 1]")
