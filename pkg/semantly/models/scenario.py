from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, asdict, replace

from semantly.core.exceptions import ConfigError
from semantly.core.utils import FORMAT_VERSION
from semantly.models.pose import Pose2


def _coerce_real(owner, name: str) -> None:
    value = getattr(owner, name)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    object.__setattr__(owner, name, float(value))


def _coerce_integer(owner, name: str) -> None:
    value = getattr(owner, name)
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    object.__setattr__(owner, name, value)


@dataclass(frozen=True)
class ScenarioObject:
    class_label: str
    position: tuple[float, float]
    radius: float = 0.25
    height: float = 0.0

    def __post_init__(self):
        for name in ("radius", "height"):
            _coerce_real(self, name)
        if self.radius <= 0:
            raise ConfigError(f"object radius must be positive, got {self.radius}")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if self.height <= 0:
            # objects stand on the floor: center at one radius above it
            object.__setattr__(self, "height", float(self.radius))


@dataclass(frozen=True)
class Waypoint:
    stamp: float
    pose: Pose2


@dataclass(frozen=True)
class SensorRates:
    pose_hz: float = 30.0
    scan_hz: float = 10.0
    detection_hz: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            _coerce_real(self, f.name)
        if min(self.pose_hz, self.scan_hz, self.detection_hz) <= 0:
            raise ConfigError("sensor rates must be positive")


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 2.0
    depth_sigma: float = 0.02
    miss_probability: float = 0.1
    false_positive_rate: float = 0.05
    score_min: float = 0.6
    score_max: float = 0.95
    depth_bias: float = 0.0
    depth_dropout: float = 0.0
    range_sigma: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            _coerce_real(self, f.name)
        if min(self.pixel_sigma, self.depth_sigma, self.range_sigma, self.false_positive_rate) < 0:
            raise ConfigError("noise magnitudes and rates must be non-negative")
        for name in ("miss_probability", "depth_dropout"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.score_min <= self.score_max <= 1.0:
            raise ConfigError("score bounds must satisfy 0 <= score_min <= score_max <= 1")

    @classmethod
    def noiseless(cls) -> NoiseModel:
        return cls(pixel_sigma=0.0, depth_sigma=0.0, miss_probability=0.0, false_positive_rate=0.0,
                   score_min=0.9, score_max=0.9)


@dataclass(frozen=True)
class Scenario:
    """Synthetic world: walls, ground-truth objects, a robot trajectory and sensor models."""

    walls: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    objects: tuple[ScenarioObject, ...]
    trajectory: tuple[Waypoint, ...]
    rates: SensorRates = field(default_factory=SensorRates)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    scan_beams: int = 360
    scan_range_min: float = 0.1
    scan_range_max: float = 8.0
    camera_max_range: float = 6.0
    depth_samples: int = 9
    false_positive_classes: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("seed", "scan_beams", "depth_samples"):
            _coerce_integer(self, name)
        for name in ("scan_range_min", "scan_range_max", "camera_max_range"):
            _coerce_real(self, name)
        if not self.trajectory:
            raise ConfigError("trajectory needs at least one waypoint")
        stamps = [w.stamp for w in self.trajectory]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ConfigError("trajectory stamps must be strictly increasing")
        if self.scan_beams < 1 or self.depth_samples < 1:
            raise ConfigError("scan_beams and depth_samples must be >= 1")
        if not 0 <= self.scan_range_min < self.scan_range_max:
            raise ConfigError("invalid scan range limits")
        if self.camera_max_range <= 0:
            raise ConfigError("camera_max_range must be positive")

    @property
    def start(self) -> float:
        return self.trajectory[0].stamp

    @property
    def end(self) -> float:
        return self.trajectory[-1].stamp

    @property
    def classes(self) -> tuple[str, ...]:
        if self.false_positive_classes:
            return self.false_positive_classes
        return tuple(sorted({o.class_label for o in self.objects}))

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=int(seed))

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        allowed = [f.name for f in fields(cls)] + ["format_version"]
        unknown = sorted(set(data) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown key(s) in scenario: {', '.join(unknown)}")
        try:
            kwargs = {k: v for k, v in data.items() if k not in ("format_version", "walls", "objects",
                                                                  "trajectory", "rates", "noise",
                                                                  "false_positive_classes")}
            kwargs["walls"] = tuple(
                ((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))) for a, b in data.get("walls", [])
            )
            kwargs["objects"] = tuple(
                ScenarioObject(o["class"], tuple(o["position"]), o.get("radius", 0.25), o.get("height", 0.0))
                for o in data.get("objects", [])
            )
            kwargs["trajectory"] = tuple(
                Waypoint(float(w["t"]), Pose2(*w["pose"])) for w in data.get("trajectory", [])
            )
            kwargs["rates"] = SensorRates(**data.get("rates", {}))
            kwargs["noise"] = NoiseModel(**data.get("noise", {}))
            kwargs["false_positive_classes"] = tuple(data.get("false_positive_classes", ()))
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, KeyError, ValueError, IndexError) as e:
            raise ConfigError(f"invalid scenario value: {e}") from e

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "walls": [[list(a), list(b)] for a, b in self.walls],
            "objects": [
                {"class": o.class_label, "position": list(o.position), "radius": o.radius, "height": o.height}
                for o in self.objects
            ],
            "trajectory": [{"t": w.stamp, "pose": w.pose.to_list()} for w in self.trajectory],
            "rates": asdict(self.rates),
            "noise": asdict(self.noise),
            "seed": self.seed,
            "scan_beams": self.scan_beams,
            "scan_range_min": self.scan_range_min,
            "scan_range_max": self.scan_range_max,
            "camera_max_range": self.camera_max_range,
            "depth_samples": self.depth_samples,
            "false_positive_classes": list(self.false_positive_classes),
        }


@dataclass(frozen=True)
class GroundTruth:
    objects: tuple[ScenarioObject, ...]
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "objects": [
                {"class": o.class_label, "x": o.position[0], "y": o.position[1], "radius": o.radius}
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> GroundTruth:
        return cls(
            tuple(ScenarioObject(o["class"], (o["x"], o["y"]), o.get("radius", 0.25)) for o in data["objects"]),
            int(data.get("seed", 0)),
        )
