"""Rigid transforms, pinhole back-projection and flattening onto the map plane.

Conventions: camera optical frame is z forward, x right, y down. Quaternions are
stored (w, x, y, z); scipy expects (x, y, z, w) and the helpers below convert.
"""
from __future__ import annotations

import math
from typing import Protocol, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from semantly.core.exceptions import NoValidDepth
from semantly.models.camera import BBox, CameraIntrinsics, Detection2D
from semantly.models.detection import MapDetection
from semantly.models.pose import Pose2, Pose3

from logging import getLogger
logger = getLogger(__name__)

SUB_BOX_FRACTION = 0.5


def to_rotation(pose: Pose3) -> Rotation:
    w, x, y, z = pose.rotation
    return Rotation.from_quat([x, y, z, w])


def from_rotation(rotation: Rotation, translation) -> Pose3:
    x, y, z, w = rotation.as_quat()
    return Pose3(tuple(float(v) for v in translation), (w, x, y, z))


def compose(a: Pose3, b: Pose3) -> Pose3:
    """a∘b: transforming a point by the result equals applying b, then a."""
    ra = to_rotation(a)
    translation = ra.apply(b.translation) + np.asarray(a.translation)
    return from_rotation(ra * to_rotation(b), translation)


def inverse(pose: Pose3) -> Pose3:
    r_inv = to_rotation(pose).inv()
    return from_rotation(r_inv, -r_inv.apply(pose.translation))


def transform_point(pose: Pose3, point: Sequence[float]) -> np.ndarray:
    return to_rotation(pose).apply(np.asarray(point, dtype=np.float64)) + np.asarray(pose.translation)


def flatten(pose: Pose3) -> Pose2:
    """Drop height, roll and pitch."""
    return Pose2(pose.translation[0], pose.translation[1], pose.yaw)


def compose2(a: Pose2, b: Pose2) -> Pose2:
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.yaw + b.yaw)


def inverse2(pose: Pose2) -> Pose2:
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    return Pose2(-c * pose.x - s * pose.y, s * pose.x - c * pose.y, -pose.yaw)


def project(point: Sequence[float], intr: CameraIntrinsics) -> tuple[float, float]:
    """Forward pinhole projection of a camera-frame point to pixel coordinates."""
    x, y, z = (float(v) for v in point)
    if z <= 0:
        raise ValueError(f"point behind the camera (z={z})")
    return (intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy)


def sub_box(bbox: BBox, fraction: float = SUB_BOX_FRACTION) -> BBox:
    """Centered box with `fraction` of the width and height of `bbox`."""
    cu, cv = bbox.center
    half_w = 0.5 * fraction * bbox.width
    half_h = 0.5 * fraction * bbox.height
    return BBox(cu - half_w, cv - half_h, cu + half_w, cv + half_h)


class DepthSampler(Protocol):
    def samples(self, bbox: BBox) -> np.ndarray:
        """Depth values in meters covering the central sub-box of `bbox`."""
        ...


class DepthSamples:
    """Depth values already taken over the sub-box, as stored in run logs."""

    def __init__(self, values_m):
        self.values = np.asarray(values_m, dtype=np.float64).reshape(-1)

    @classmethod
    def from_millimeters(cls, values_mm) -> DepthSamples:
        return cls(np.asarray(values_mm, dtype=np.float64) / 1000.0)

    def samples(self, bbox: BBox) -> np.ndarray:
        return self.values


class DepthImage:
    """Full depth frame (meters, rows = v, columns = u) aligned to the color image."""

    def __init__(self, depth_m: np.ndarray):
        self.depth = np.asarray(depth_m, dtype=np.float64)

    def samples(self, bbox: BBox) -> np.ndarray:
        box = sub_box(bbox)
        height, width = self.depth.shape
        u0 = min(max(int(math.floor(box.u_min)), 0), width - 1)
        v0 = min(max(int(math.floor(box.v_min)), 0), height - 1)
        u1 = max(min(int(math.ceil(box.u_max)), width), u0 + 1)
        v1 = max(min(int(math.ceil(box.v_max)), height), v0 + 1)
        return self.depth[v0:v1, u0:u1].reshape(-1)


def depth_samples_from_image(depth_m: np.ndarray, bbox: BBox) -> list[float]:
    """Convert a full depth frame into the per-detection millimeter samples used in logs."""
    return [float(v) * 1000.0 for v in DepthImage(depth_m).samples(bbox)]


def sample_depth(bbox: BBox, depth: DepthSampler) -> float:
    values = np.asarray(depth.samples(bbox), dtype=np.float64)
    valid = values[np.isfinite(values) & (values > 0)]
    if valid.size == 0:
        raise NoValidDepth(f"no valid depth under bbox {bbox.to_list()}")
    return float(np.median(valid))


def back_project(bbox: BBox, depth: DepthSampler, intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame point of the bbox center at the median sub-box depth."""
    z = sample_depth(bbox, depth)
    u, v = bbox.center
    return np.array([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z])


def detection_to_map(
    det: Detection2D,
    point_cam: Sequence[float],
    T_body_cam: Pose3,
    T_map_body: Pose3,
    stamp: float,
) -> MapDetection:
    """Chain camera -> body -> map, drop the height, and store the robot-to-object bearing as yaw."""
    return detections_to_map([det], [point_cam], T_body_cam, T_map_body, stamp)[0]


def detections_to_map(
    dets: Sequence[Detection2D],
    points_cam,
    T_body_cam: Pose3,
    T_map_body: Pose3,
    stamp: float,
) -> list[MapDetection]:
    """`detection_to_map` for every detection of one frame."""
    if not len(dets):
        return []
    points = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
    points_map = transform_point(T_map_body, transform_point(T_body_cam, points))
    robot_x, robot_y = T_map_body.translation[0], T_map_body.translation[1]
    mapped = []
    for det, point in zip(dets, points_map):
        x, y = float(point[0]), float(point[1])
        bearing = math.atan2(y - robot_y, x - robot_x)
        mapped.append(MapDetection(det.class_label, (x, y), bearing, det.score, stamp))
    return mapped
