from semantly.models.pose import Pose2, Pose3
from semantly.models.camera import BBox, CameraIntrinsics, Detection2D
from semantly.models.detection import DetectionFrame, DetectionItem, MapDetection
from semantly.models.scan import LaserScan
from semantly.models.track import (
    AssociationEvent, DropReason, EventKind, Hit, MapObject, ObjectMapSnapshot, TrackCandidate,
)
from semantly.models.config_settings import LayerConfig, OccupancyParams, RunConfig
from semantly.models.scenario import GroundTruth, NoiseModel, Scenario, ScenarioObject, SensorRates, Waypoint
