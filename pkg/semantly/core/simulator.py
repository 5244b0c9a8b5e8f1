"""Synthetic run logs with ground truth: a planar room, static objects, a robot
trajectory, a 2D LiDAR and a statistically modeled detector.

Every random draw comes from a counter-based generator keyed by
(seed, stream) and addressed by frame, so adding or removing one record never
shifts the draws of another. Within a detection frame each object owns a
fixed block of draws.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from semantly.core.exceptions import ConfigError
from semantly.core.geometry import compose, compose2, inverse, inverse2, project, transform_point
from semantly.core.ingestion import DETECTIONS, POSE, SCAN, LogRecord, merge_streams
from semantly.core.utils import load_json_resource, to_json_line, wrap_angle, write_json
from semantly.models.camera import BBox, Detection2D
from semantly.models.config_settings import RunConfig
from semantly.models.detection import DetectionFrame, DetectionItem
from semantly.models.pose import Pose2, Pose3
from semantly.models.scan import LaserScan
from semantly.models.scenario import GroundTruth, NoiseModel, Scenario

from logging import getLogger
logger = getLogger(__name__)

SCENARIO_FILENAME = "lab_scenario.json"

STREAM_DETECTION = 1
STREAM_SCAN = 3

FALSE_POSITIVE_MIN_DEPTH = 0.5
FALSE_POSITIVE_HALF_SIZE = (10.0, 60.0)


def _rng(seed: int, stream: int, frame: int) -> np.random.Generator:
    # the low counter words advance with each draw; the identifiers live in the high words
    key = [seed & 0xFFFFFFFFFFFFFFFF, stream]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, frame]))


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"scenario {path} is not valid JSON: {e.msg} (line {e.lineno})") from e
    except UnicodeDecodeError as e:
        raise ConfigError(f"scenario {path} is not UTF-8 text: {e.reason}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"scenario {path} must hold a JSON object")
    return Scenario.from_dict(data)


def default_scenario() -> Scenario:
    """The lab scene: two chairs and two people in a closed room."""
    return Scenario.from_dict(load_json_resource(SCENARIO_FILENAME))


def trajectory_pose(sc: Scenario, t: float) -> Pose2:
    """Piecewise-linear position and shortest-arc yaw between waypoints, held outside the span."""
    stamps = [w.stamp for w in sc.trajectory]
    if t <= stamps[0]:
        return sc.trajectory[0].pose
    if t >= stamps[-1]:
        return sc.trajectory[-1].pose
    index = bisect.bisect_right(stamps, t)
    a, b = sc.trajectory[index - 1], sc.trajectory[index]
    ratio = (t - a.stamp) / (b.stamp - a.stamp)
    return Pose2(
        a.pose.x + ratio * (b.pose.x - a.pose.x),
        a.pose.y + ratio * (b.pose.y - a.pose.y),
        a.pose.yaw + ratio * wrap_angle(b.pose.yaw - a.pose.yaw),
    )


def ray_segment_distance(origin: tuple[float, float], angle: float, a: tuple[float, float],
                         b: tuple[float, float]) -> Optional[float]:
    """Distance along the ray to segment ab, or None if the ray misses it."""
    dx, dy = math.cos(angle), math.sin(angle)
    ex, ey = b[0] - a[0], b[1] - a[1]
    denom = dx * ey - dy * ex
    if denom == 0.0:
        return None
    wx, wy = a[0] - origin[0], a[1] - origin[1]
    t = (wx * ey - wy * ex) / denom
    s = (wx * dy - wy * dx) / denom
    if t < 0.0 or s < 0.0 or s > 1.0:
        return None
    return t


def cast_ray(origin: tuple[float, float], angle: float, walls) -> Optional[float]:
    best = None
    for a, b in walls:
        d = ray_segment_distance(origin, angle, a, b)
        if d is not None and (best is None or d < best):
            best = d
    return best


def cast_rays(origin: tuple[float, float], angles: np.ndarray, walls) -> np.ndarray:
    """`cast_ray` for many angles at once; inf where a ray hits no wall."""
    angles = np.asarray(angles, dtype=np.float64)
    if not len(walls):
        return np.full(angles.shape, np.inf)
    segments = np.asarray(walls, dtype=np.float64).reshape(-1, 4)
    dx, dy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    ex, ey = segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1]
    wx, wy = segments[:, 0] - origin[0], segments[:, 1] - origin[1]
    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / denom
        s = (wx * dy - wy * dx) / denom
    hit = (denom != 0.0) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    return np.where(hit, t, np.inf).min(axis=1)


def line_of_sight(p: tuple[float, float], q: tuple[float, float], walls) -> bool:
    """True when no wall crosses the segment pq."""
    length = math.hypot(q[0] - p[0], q[1] - p[1])
    if length == 0.0:
        return True
    angle = math.atan2(q[1] - p[1], q[0] - p[0])
    hit = cast_ray(p, angle, walls)
    return hit is None or hit >= length


def _stamps(start: float, end: float, rate: float) -> list[float]:
    count = int(math.floor((end - start) * rate + 1e-9)) + 1
    return [start + k / rate for k in range(count)]


def _depth_samples(depth: float, jitter: np.ndarray, dropout: np.ndarray, noise: NoiseModel) -> tuple[float, ...]:
    samples = depth + noise.depth_bias + jitter * noise.depth_sigma
    samples[dropout < noise.depth_dropout] = 0.0
    return tuple(float(v) * 1000.0 for v in samples)


@dataclass(frozen=True)
class CameraView:
    """Where the camera is for one detection frame."""

    T_cam_map: Pose3
    position: tuple[float, float]


def camera_view(body: Pose2, cfg: RunConfig, T_cam_body: Optional[Pose3] = None) -> CameraView:
    T_cam_body = T_cam_body or inverse(cfg.T_body_cam)
    map_body = inverse2(body)
    T_cam_map = compose(T_cam_body, Pose3.from_xy_yaw(map_body.x, map_body.y, map_body.yaw))
    mount = cfg.T_body_cam.translation
    return CameraView(T_cam_map, compose2(body, Pose2(mount[0], mount[1], 0.0)).position)


def render_objects(sc: Scenario, cfg: RunConfig, view: CameraView,
                   centers: Optional[np.ndarray] = None) -> list[tuple[int, BBox, float]]:
    """Noise-free bbox and center depth of every visible object, by object index."""
    if not sc.objects:
        return []
    if centers is None:
        centers = object_centers(sc)
    intr = cfg.intrinsics
    points = transform_point(view.T_cam_map, centers)
    half_fov = 0.5 * intr.horizontal_fov
    rendered = []
    for index, obj in enumerate(sc.objects):
        x, y, z = (float(v) for v in points[index])
        if z <= 0.0:
            continue
        if math.hypot(obj.position[0] - view.position[0], obj.position[1] - view.position[1]) > sc.camera_max_range:
            continue
        if abs(math.atan2(x, z)) > half_fov:
            continue
        u, v = project((x, y, z), intr)
        half_u, half_v = intr.fx * obj.radius / z, intr.fy * obj.radius / z
        bbox = BBox(u - half_u, v - half_v, u + half_u, v + half_v)
        if not bbox.within(intr):
            continue
        if not line_of_sight(view.position, obj.position, sc.walls):
            continue
        rendered.append((index, bbox, z))
    return rendered


def object_centers(sc: Scenario) -> np.ndarray:
    return np.array([(o.position[0], o.position[1], o.height) for o in sc.objects], dtype=np.float64).reshape(-1, 3)


def _detection_frame(sc: Scenario, cfg: RunConfig, view: CameraView, stamp: float, frame: int,
                     centers: np.ndarray) -> DetectionFrame:
    noise = sc.noise
    intr = cfg.intrinsics
    count, k = len(sc.objects), sc.depth_samples
    # every object owns a fixed block of draws, visible or not
    rng = _rng(sc.seed, STREAM_DETECTION, frame)
    miss = rng.random(count)
    pixel = rng.normal(0.0, 1.0, (count, 2)) * noise.pixel_sigma
    scores = rng.uniform(noise.score_min, noise.score_max, count)
    depth_jitter = rng.normal(0.0, 1.0, (count, k))
    dropout = rng.random((count, k))

    items = []
    for index, bbox, depth in render_objects(sc, cfg, view, centers):
        if miss[index] < noise.miss_probability:
            continue
        du, dv = (float(d) for d in pixel[index])
        jittered = BBox(bbox.u_min + du, bbox.v_min + dv, bbox.u_max + du, bbox.v_max + dv)
        if not jittered.within(intr):
            continue
        detection = Detection2D(sc.objects[index].class_label, float(scores[index]), jittered)
        items.append(DetectionItem(detection, _depth_samples(depth, depth_jitter[index], dropout[index], noise)))

    classes = sc.classes
    if noise.false_positive_rate > 0 and classes:
        for _ in range(int(rng.poisson(noise.false_positive_rate))):
            class_label = classes[int(rng.integers(len(classes)))]
            depth = float(rng.uniform(FALSE_POSITIVE_MIN_DEPTH, sc.camera_max_range))
            half = float(rng.uniform(*FALSE_POSITIVE_HALF_SIZE))
            u = float(rng.uniform(half, intr.width - half))
            v = float(rng.uniform(half, intr.height - half))
            bbox = BBox(u - half, v - half, u + half, v + half)
            score = float(rng.uniform(noise.score_min, noise.score_max))
            samples = _depth_samples(depth, rng.normal(0.0, 1.0, k), rng.random(k), noise)
            items.append(DetectionItem(Detection2D(class_label, score, bbox), samples))
    return DetectionFrame(stamp, tuple(items))


def _scan(sc: Scenario, cfg: RunConfig, stamp: float, frame: int) -> LaserScan:
    sensor = compose2(trajectory_pose(sc, stamp), cfg.T_body_lidar)
    increment = 2.0 * math.pi / sc.scan_beams
    angles = (sensor.yaw - math.pi) + np.arange(sc.scan_beams) * increment
    ranges = cast_rays(sensor.position, angles, sc.walls)
    no_return = ranges > sc.scan_range_max
    if sc.noise.range_sigma > 0:
        noise = _rng(sc.seed, STREAM_SCAN, frame).normal(0.0, sc.noise.range_sigma, sc.scan_beams)
        ranges = np.maximum(0.0, ranges + noise)
    ranges[no_return] = np.nan
    return LaserScan(stamp, -math.pi, increment, sc.scan_range_min, sc.scan_range_max, tuple(ranges.tolist()))


def synthesize_log(sc: Scenario, cfg: Optional[RunConfig] = None) -> tuple[list[LogRecord], GroundTruth]:
    """Pose, scan and detection records in merged time order, plus the ground truth.

    Detection frames with no detections are not emitted, like a detector that
    only publishes when it sees something.
    """
    cfg = cfg or RunConfig()
    records = []
    for stamp in _stamps(sc.start, sc.end, sc.rates.pose_hz):
        body = trajectory_pose(sc, stamp)
        records.append(LogRecord(stamp, POSE, Pose3.from_xy_yaw(body.x, body.y, body.yaw)))
    for frame, stamp in enumerate(_stamps(sc.start, sc.end, sc.rates.scan_hz)):
        records.append(LogRecord(stamp, SCAN, _scan(sc, cfg, stamp, frame)))
    T_cam_body = inverse(cfg.T_body_cam)
    centers = object_centers(sc)
    for frame, stamp in enumerate(_stamps(sc.start, sc.end, sc.rates.detection_hz)):
        view = camera_view(trajectory_pose(sc, stamp), cfg, T_cam_body)
        detections = _detection_frame(sc, cfg, view, stamp, frame, centers)
        if detections.items:
            records.append(LogRecord(stamp, DETECTIONS, detections))
    merged = merge_streams(records)
    logger.info(f"Synthesized {len(merged)} records for {len(sc.objects)} objects (seed {sc.seed})")
    return merged, GroundTruth(sc.objects, sc.seed)


def log_lines(records: Iterable[LogRecord]) -> list[str]:
    return [to_json_line(record.to_dict()) for record in records]


def write_log(records: Iterable[LogRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in log_lines(records):
            f.write(line + "\n")


def truth_path_for(log_path) -> str:
    """Sidecar ground-truth path: run.jsonl -> run.truth.json."""
    path = str(log_path)
    stem = path[:-len(".jsonl")] if path.endswith(".jsonl") else path
    return f"{stem}.truth.json"


def write_truth(truth: GroundTruth, path) -> None:
    write_json(path, truth.to_dict())
