from __future__ import annotations

from dataclasses import dataclass, field

from semantly.core.utils import wrap_angle
from semantly.models.camera import Detection2D


@dataclass(frozen=True, slots=True)
class DetectionItem:
    """One logged detection: the 2D box plus the raw depth samples (millimeters)
    taken over the central sub-box of that box."""

    detection: Detection2D
    depth_samples_mm: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "class": self.detection.class_label,
            "score": self.detection.score,
            "bbox": self.detection.bbox.to_list(),
            "depth_samples_mm": list(self.depth_samples_mm),
        }


@dataclass(frozen=True, slots=True)
class DetectionFrame:
    stamp: float
    items: tuple[DetectionItem, ...] = field(default_factory=tuple)


@dataclass(frozen=True, slots=True)
class MapDetection:
    """A detection flattened onto the map plane. There is no height field."""

    class_label: str
    position: tuple[float, float]
    yaw: float
    score: float
    stamp: float

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]
