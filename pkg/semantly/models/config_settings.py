from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict
from typing import Optional

from semantly.core.exceptions import ConfigError
from semantly.core.utils import FORMAT_VERSION, logit
from semantly.models.camera import CameraIntrinsics
from semantly.models.pose import Pose2, Pose3

# Optical frame (z forward, x right, y down) expressed in the body frame (x forward, z up).
OPTICAL_TO_BODY_ROTATION = (0.5, -0.5, 0.5, -0.5)


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")


@dataclass(frozen=True)
class LayerConfig:
    """Association and memory settings. Defaults are the values used on the robot."""

    per_class_cutoff: dict = field(default_factory=dict)
    default_cutoff: float = 0.65
    frame_merge_radius: float = 0.20
    reuse_radius: float = 0.80
    promote_min_hits: int = 10
    promote_window: float = 2.0
    promote_min_mean_score: float = 0.50
    candidate_ttl: float = 3.0
    tracked_classes: Optional[frozenset] = None

    def __post_init__(self):
        if self.frame_merge_radius <= 0 or self.reuse_radius <= 0:
            raise ConfigError("radii must be positive")
        cutoffs = list(self.per_class_cutoff.values()) + [self.default_cutoff, self.promote_min_mean_score]
        if any(not 0.0 <= c <= 1.0 for c in cutoffs):
            raise ConfigError("score cutoffs must lie in [0, 1]")
        if int(self.promote_min_hits) != self.promote_min_hits or self.promote_min_hits < 1:
            raise ConfigError("promote_min_hits must be an integer >= 1")
        if self.promote_window <= 0 or self.candidate_ttl <= 0:
            raise ConfigError("promote_window and candidate_ttl must be positive")
        if self.tracked_classes is not None:
            object.__setattr__(self, "tracked_classes", frozenset(self.tracked_classes))

    def cutoff_for(self, class_label: str) -> float:
        return self.per_class_cutoff.get(class_label, self.default_cutoff)

    def tracks(self, class_label: str) -> bool:
        return self.tracked_classes is None or class_label in self.tracked_classes

    @classmethod
    def from_dict(cls, data: dict) -> LayerConfig:
        _check_keys("layer", data, [f.name for f in fields(cls)])
        values = dict(data)
        if values.get("tracked_classes") is not None:
            values["tracked_classes"] = frozenset(values["tracked_classes"])
        if "per_class_cutoff" in values:
            values["per_class_cutoff"] = {str(k): float(v) for k, v in values["per_class_cutoff"].items()}
        return cls(**values)

    def to_dict(self) -> dict:
        document = asdict(self)
        document["tracked_classes"] = None if self.tracked_classes is None else sorted(self.tracked_classes)
        return document


@dataclass(frozen=True)
class OccupancyParams:
    resolution: float = 0.05
    initial_size: int = 200
    p_occ: float = 0.7
    p_free: float = 0.4
    p_min: float = 0.12
    p_max: float = 0.97
    occupied_thresh: float = 0.65
    free_thresh: float = 0.25

    def __post_init__(self):
        if self.resolution <= 0 or self.initial_size < 1:
            raise ConfigError("resolution and initial_size must be positive")
        probabilities = (self.p_occ, self.p_free, self.p_min, self.p_max, self.occupied_thresh, self.free_thresh)
        if any(not 0.0 < p < 1.0 for p in probabilities):
            raise ConfigError("occupancy probabilities must lie in (0, 1)")
        if not self.p_min < 0.5 < self.p_max:
            raise ConfigError("clamp bounds must bracket the 0.5 prior")
        if not self.free_thresh < self.occupied_thresh:
            raise ConfigError("free_thresh must be below occupied_thresh")

    @property
    def l_occ(self) -> float:
        return logit(self.p_occ)

    @property
    def l_free(self) -> float:
        return logit(self.p_free)

    @property
    def l_min(self) -> float:
        return logit(self.p_min)

    @property
    def l_max(self) -> float:
        return logit(self.p_max)

    @classmethod
    def from_dict(cls, data: dict) -> OccupancyParams:
        _check_keys("occupancy", data, [f.name for f in fields(cls)])
        return cls(**data)


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0, width=640, height=480)


def default_body_cam() -> Pose3:
    return Pose3((0.2, 0.0, 0.5), OPTICAL_TO_BODY_ROTATION)


@dataclass(frozen=True)
class RunConfig:
    layer: LayerConfig = field(default_factory=LayerConfig)
    occupancy: OccupancyParams = field(default_factory=OccupancyParams)
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)
    T_body_cam: Pose3 = field(default_factory=default_body_cam)
    T_body_lidar: Pose2 = field(default_factory=lambda: Pose2(0.1, 0.0, 0.0))
    max_pose_skew: float = 0.05

    def __post_init__(self):
        if not self.max_pose_skew > 0:
            raise ConfigError("max_pose_skew must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        _check_keys("config", data, ["format_version", "layer", "occupancy", "camera", "extrinsics", "max_pose_skew"])
        version = data.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported config format_version {version}")
        kwargs = {}
        try:
            if "layer" in data:
                kwargs["layer"] = LayerConfig.from_dict(data["layer"])
            if "occupancy" in data:
                kwargs["occupancy"] = OccupancyParams.from_dict(data["occupancy"])
            if "camera" in data:
                camera = {**default_intrinsics().to_dict(), **data["camera"]}
                _check_keys("camera", camera, ["fx", "fy", "cx", "cy", "width", "height"])
                kwargs["intrinsics"] = CameraIntrinsics(**camera)
            extrinsics = data.get("extrinsics", {})
            _check_keys("extrinsics", extrinsics, ["body_cam", "body_lidar"])
            if "body_cam" in extrinsics:
                kwargs["T_body_cam"] = Pose3(tuple(extrinsics["body_cam"]["p"]), tuple(extrinsics["body_cam"]["q"]))
            if "body_lidar" in extrinsics:
                kwargs["T_body_lidar"] = Pose2(*extrinsics["body_lidar"])
            if "max_pose_skew" in data:
                kwargs["max_pose_skew"] = float(data["max_pose_skew"])
        except ConfigError:
            raise
        except (TypeError, KeyError, ValueError, AttributeError) as e:
            raise ConfigError(f"invalid config value: {e}") from e
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "layer": self.layer.to_dict(),
            "occupancy": asdict(self.occupancy),
            "camera": self.intrinsics.to_dict(),
            "extrinsics": {
                "body_cam": self.T_body_cam.to_dict(),
                "body_lidar": self.T_body_lidar.to_list(),
            },
            "max_pose_skew": self.max_pose_skew,
        }
