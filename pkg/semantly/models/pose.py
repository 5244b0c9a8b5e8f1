from __future__ import annotations

import math
from dataclasses import dataclass

from semantly.core.exceptions import ConfigError
from semantly.core.utils import wrap_angle


@dataclass(frozen=True, slots=True)
class Pose3:
    """Rigid transform: translation in meters, unit quaternion (w, x, y, z).

    The quaternion is renormalized on construction.
    """

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.translation) != 3 or len(self.rotation) != 4:
            raise ConfigError("Pose3 needs a 3-vector translation and a (w, x, y, z) quaternion")
        translation = tuple(float(v) for v in self.translation)
        if not all(math.isfinite(v) for v in translation):
            raise ConfigError(f"Pose3 translation is not finite: {translation}")
        norm = math.sqrt(sum(float(q) * float(q) for q in self.rotation))
        if not math.isfinite(norm) or norm == 0.0:
            raise ConfigError(f"Pose3 quaternion cannot be normalized: {self.rotation}")
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "rotation", tuple(float(q) / norm for q in self.rotation))

    @classmethod
    def identity(cls) -> Pose3:
        return cls()

    @classmethod
    def from_xy_yaw(cls, x: float, y: float, yaw: float, z: float = 0.0) -> Pose3:
        half = 0.5 * yaw
        return cls((x, y, z), (math.cos(half), 0.0, 0.0, math.sin(half)))

    @property
    def yaw(self) -> float:
        w, x, y, z = self.rotation
        return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))

    def to_dict(self) -> dict:
        return {"p": list(self.translation), "q": list(self.rotation)}


@dataclass(frozen=True, slots=True)
class Pose2:
    """Planar pose in the map frame; yaw is kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.yaw]
