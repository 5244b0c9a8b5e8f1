"""Run-log parsing, stream merging, pose interpolation and replay.

A run log holds three asynchronous streams in one file, one JSON object per line:

    {"t": 1.0, "type": "pose", "p": [x, y, z], "q": [w, x, y, z]}
    {"t": 1.0, "type": "scan", "angle_min": ..., "angle_increment": ..., "range_min": ...,
     "range_max": ..., "ranges": [r or null, ...]}
    {"t": 1.0, "type": "detections", "items": [{"class": "chair", "score": 0.8,
     "bbox": [u0, v0, u1, v1], "depth_samples_mm": [...]}]}
"""
from __future__ import annotations

import bisect
import json
import math
import os
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from semantly.core.exceptions import (
    ConfigError, LogError, MalformedRecord, NonMonotonicStream, NoValidDepth, PoseGapTooLarge,
)
from semantly.core.geometry import (
    DepthSamples, back_project, compose2, detections_to_map, flatten, from_rotation, to_rotation,
)
from semantly.core.occupancy import OccupancyGrid, integrate_scan
from semantly.core.semantic_layer import SemanticLayer
from semantly.core.sinks import ReplaySink, SinkGroup
from semantly.core.utils import FORMAT_VERSION
from semantly.models.camera import BBox, Detection2D
from semantly.models.config_settings import RunConfig
from semantly.models.detection import DetectionFrame, DetectionItem
from semantly.models.pose import Pose3
from semantly.models.scan import LaserScan
from semantly.models.track import AssociationEvent, DropReason, EventKind, ObjectMapSnapshot

from logging import getLogger
logger = getLogger(__name__)

POSE = "pose"
SCAN = "scan"
DETECTIONS = "detections"
# equal stamps: the pose is known before the scan, the scan before the detections
STREAM_ORDER = {POSE: 0, SCAN: 1, DETECTIONS: 2}


@dataclass(frozen=True, slots=True)
class LogRecord:
    stamp: float
    kind: str
    payload: Union[Pose3, LaserScan, DetectionFrame]
    line_number: int = 0

    def to_dict(self) -> dict:
        if self.kind == POSE:
            return {"t": self.stamp, "type": POSE, **self.payload.to_dict()}
        if self.kind == SCAN:
            return self.payload.to_dict()
        return {"t": self.stamp, "type": DETECTIONS, "items": [item.to_dict() for item in self.payload.items]}


def _number(data: dict, key: str, line_number: int) -> float:
    value = data.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise MalformedRecord(line_number, f"'{key}' must be a finite number")
    return float(value)


def _vector(data: dict, key: str, size: int, line_number: int) -> tuple:
    value = data.get(key)
    if not isinstance(value, list) or len(value) != size:
        raise MalformedRecord(line_number, f"'{key}' must be a list of {size} numbers")
    return tuple(_number({key: v}, key, line_number) for v in value)


def _parse_item(item: Any, line_number: int) -> DetectionItem:
    if not isinstance(item, dict):
        raise MalformedRecord(line_number, "detection item must be an object")
    class_label = item.get("class")
    if not isinstance(class_label, str) or not class_label:
        raise MalformedRecord(line_number, "'class' must be a non-empty string")
    samples = item.get("depth_samples_mm", [])
    if not isinstance(samples, list):
        raise MalformedRecord(line_number, "'depth_samples_mm' must be a list")
    try:
        bbox = BBox(*_vector(item, "bbox", 4, line_number))
        detection = Detection2D(class_label, _number(item, "score", line_number), bbox)
    except ConfigError as e:
        raise MalformedRecord(line_number, str(e)) from e
    # null or non-numeric samples count as invalid depth, not as a malformed record
    values = tuple(
        float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else math.nan
        for v in samples
    )
    return DetectionItem(detection, values)


def parse_record(line: str, line_number: int = 0) -> LogRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecord(line_number, f"invalid JSON: {e.msg}") from e
    if not isinstance(data, dict):
        raise MalformedRecord(line_number, "record must be a JSON object")
    stamp = _number(data, "t", line_number)
    kind = data.get("type")

    try:
        if kind == POSE:
            payload = Pose3(_vector(data, "p", 3, line_number), _vector(data, "q", 4, line_number))
        elif kind == SCAN:
            ranges = data.get("ranges")
            if not isinstance(ranges, list):
                raise MalformedRecord(line_number, "'ranges' must be a list")
            payload = LaserScan(
                stamp,
                _number(data, "angle_min", line_number),
                _number(data, "angle_increment", line_number),
                _number(data, "range_min", line_number),
                _number(data, "range_max", line_number),
                tuple(None if r is None else _number({"ranges": r}, "ranges", line_number) for r in ranges),
            )
        elif kind == DETECTIONS:
            items = data.get("items", [])
            if not isinstance(items, list):
                raise MalformedRecord(line_number, "'items' must be a list")
            payload = DetectionFrame(stamp, tuple(_parse_item(item, line_number) for item in items))
        else:
            raise MalformedRecord(line_number, f"unknown record type {kind!r}")
    except ConfigError as e:
        raise MalformedRecord(line_number, str(e)) from e
    return LogRecord(stamp, kind, payload, line_number)


def parse_log(lines: Iterable[str]) -> Iterator[LogRecord]:
    """Records in file order. Blank lines are skipped; each stream must be strictly increasing."""
    last_stamp: dict[str, float] = {}
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = parse_record(line, line_number)
        previous = last_stamp.get(record.kind)
        if previous is not None and record.stamp <= previous:
            raise NonMonotonicStream(record.kind, record.stamp, line_number)
        last_stamp[record.kind] = record.stamp
        yield record


def decode_lines(raw_lines: Iterable[bytes]) -> Iterator[str]:
    """UTF-8 text lines; an undecodable line is a malformed record."""
    for line_number, raw in enumerate(raw_lines, start=1):
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedRecord(line_number, f"invalid UTF-8 at byte {e.start}") from e


def read_log(path) -> list[LogRecord]:
    try:
        with open(path, "rb") as f:
            return list(parse_log(decode_lines(f)))
    except OSError as e:
        raise LogError(f"cannot read log {path}: {e.strerror or e}") from e


def merge_streams(records: Iterable[LogRecord]) -> list[LogRecord]:
    """Time order across streams; ties go pose, scan, detections, then file order."""
    indexed = list(enumerate(records))
    indexed.sort(key=lambda pair: (pair[1].stamp, STREAM_ORDER[pair[1].kind], pair[0]))
    return [record for _, record in indexed]


class PoseBuffer:
    """Time-indexed poses, appended in increasing stamp order."""

    def __init__(self):
        self.stamps: list[float] = []
        self.poses: list[Pose3] = []

    def __len__(self) -> int:
        return len(self.stamps)

    def add(self, stamp: float, pose: Pose3) -> None:
        if self.stamps and stamp <= self.stamps[-1]:
            raise NonMonotonicStream(POSE, stamp)
        self.stamps.append(stamp)
        self.poses.append(pose)

    @property
    def newest_stamp(self) -> Optional[float]:
        return self.stamps[-1] if self.stamps else None

    def trim(self, before: float) -> None:
        """Forget poses older than `before`, keeping the last one at or before it."""
        cut = bisect.bisect_right(self.stamps, before) - 1
        if cut > 0:
            del self.stamps[:cut]
            del self.poses[:cut]


def interpolate_pose(poses: PoseBuffer, t: float, max_skew: float) -> Pose3:
    """Body pose at `t`.

    Between two buffered poses no more than 2 * max_skew apart: linear translation,
    shortest-arc rotation. Up to max_skew past the newest pose: the newest pose.
    """
    if not len(poses):
        raise PoseGapTooLarge(t, "pose buffer is empty")
    index = bisect.bisect_left(poses.stamps, t)
    if index < len(poses) and poses.stamps[index] == t:
        return poses.poses[index]
    if index == len(poses):
        gap = t - poses.stamps[-1]
        if gap <= max_skew:
            return poses.poses[-1]
        raise PoseGapTooLarge(t, f"{gap:.3f} s past the newest pose")
    if index == 0:
        raise PoseGapTooLarge(t, "before the first pose")

    t0, t1 = poses.stamps[index - 1], poses.stamps[index]
    if t1 - t0 > 2.0 * max_skew:
        raise PoseGapTooLarge(t, f"bracketing poses {t1 - t0:.3f} s apart")
    a, b = poses.poses[index - 1], poses.poses[index]
    ratio = (t - t0) / (t1 - t0)
    translation = (1.0 - ratio) * np.asarray(a.translation) + ratio * np.asarray(b.translation)
    slerp = Slerp([t0, t1], Rotation.from_quat([to_rotation(a).as_quat(), to_rotation(b).as_quat()]))
    return from_rotation(slerp([t])[0], translation)


def load_run_config(path=None) -> RunConfig:
    """RunConfig from a JSON file; None gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e.msg} (line {e.lineno})") from e
    except UnicodeDecodeError as e:
        raise ConfigError(f"config {path} is not UTF-8 text: {e.reason}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return RunConfig.from_dict(data)


@dataclass
class RunReport:
    records: int = 0
    poses: int = 0
    scans: int = 0
    detection_frames: int = 0
    detections: int = 0
    dropped_scans: int = 0
    dropped_frames: int = 0
    drops: dict = field(default_factory=lambda: {reason.value: 0 for reason in DropReason})
    merged_in_frame: int = 0
    objects: int = 0
    per_class: dict = field(default_factory=dict)
    stream_rates: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    snapshot: Optional[ObjectMapSnapshot] = field(default=None, repr=False, compare=False)
    grid: Optional[OccupancyGrid] = field(default=None, repr=False, compare=False)

    def count_events(self, events: list[AssociationEvent]) -> None:
        for event in events:
            if event.kind is EventKind.DROPPED:
                self.drops[event.reason.value] += 1
            elif event.kind is EventKind.MERGED_IN_FRAME:
                self.merged_in_frame += 1

    def to_dict(self, include_wall_clock: bool = True) -> dict:
        document = {
            "format_version": FORMAT_VERSION,
            "records": self.records,
            "poses": self.poses,
            "scans": self.scans,
            "detection_frames": self.detection_frames,
            "detections": self.detections,
            "dropped_scans": self.dropped_scans,
            "dropped_frames": self.dropped_frames,
            "drops": dict(self.drops),
            "merged_in_frame": self.merged_in_frame,
            "objects": self.objects,
            "per_class": dict(sorted(self.per_class.items())),
            "stream_rates": self.stream_rates,
        }
        if include_wall_clock:
            document["wall_clock_s"] = self.wall_clock_s
        return document


def stream_rates(records: list[LogRecord]) -> dict:
    """Count, first/last stamp and mean rate per stream."""
    stamps: dict[str, list[float]] = {}
    for record in records:
        stamps.setdefault(record.kind, []).append(record.stamp)
    rates = {}
    for kind in sorted(stamps, key=STREAM_ORDER.get):
        values = stamps[kind]
        span = values[-1] - values[0]
        rates[kind] = {
            "count": len(values),
            "first": values[0],
            "last": values[-1],
            "mean_hz": (len(values) - 1) / span if span > 0 else None,
        }
    return rates


class Replayer:
    """Drives occupancy and the semantic layer from merged records.

    Scans and detection frames wait until a pose at or after their stamp has
    arrived, a later record is more than max_pose_skew newer, or the log ends.
    """

    def __init__(self, cfg: RunConfig, sinks: Optional[ReplaySink] = None):
        self.cfg = cfg
        self.sinks = sinks or SinkGroup()
        self.poses = PoseBuffer()
        self.grid = OccupancyGrid.empty(cfg.occupancy)
        self.layer = SemanticLayer(cfg.layer)
        self.report = RunReport()
        self.pending: deque[LogRecord] = deque()

    def feed(self, record: LogRecord) -> None:
        self.report.records += 1
        if record.kind == POSE:
            self.poses.add(record.stamp, record.payload)
            self.report.poses += 1
        self._flush(record.stamp)
        if record.kind != POSE:
            self.pending.append(record)
            self._flush(record.stamp)

    def finish(self) -> RunReport:
        self._flush(None)
        snapshot = self.layer.snapshot()
        self.report.snapshot = snapshot
        self.report.grid = self.grid
        self.report.objects = len(snapshot.objects)
        per_class: dict[str, int] = {}
        for obj in snapshot.objects:
            per_class[obj.class_label] = per_class.get(obj.class_label, 0) + 1
        self.report.per_class = per_class
        return self.report

    def _ready(self, item: LogRecord, now: Optional[float]) -> bool:
        if now is None:
            return True
        newest = self.poses.newest_stamp
        if newest is not None and newest >= item.stamp:
            return True
        return now - item.stamp > self.cfg.max_pose_skew

    def _flush(self, now: Optional[float]) -> None:
        while self.pending and self._ready(self.pending[0], now):
            item = self.pending.popleft()
            if item.kind == SCAN:
                self._process_scan(item)
            else:
                self._process_frame(item)
            self.poses.trim(item.stamp - 2.0 * self.cfg.max_pose_skew)

    def _process_scan(self, record: LogRecord) -> None:
        try:
            body = interpolate_pose(self.poses, record.stamp, self.cfg.max_pose_skew)
        except PoseGapTooLarge as e:
            self.report.dropped_scans += 1
            logger.warning(f"Scan dropped: {e}")
            return
        sensor = compose2(flatten(body), self.cfg.T_body_lidar)
        integrate_scan(self.grid, sensor, record.payload, self.cfg.occupancy)
        self.report.scans += 1

    def _process_frame(self, record: LogRecord) -> None:
        frame: DetectionFrame = record.payload
        self.report.detection_frames += 1
        self.report.detections += len(frame.items)
        try:
            body = interpolate_pose(self.poses, frame.stamp, self.cfg.max_pose_skew)
        except PoseGapTooLarge as e:
            self.report.dropped_frames += 1
            logger.warning(f"Detection frame dropped: {e}")
            events = [
                AssociationEvent(EventKind.DROPPED, frame.stamp, item.detection.class_label, reason=DropReason.NO_POSE)
                for item in frame.items
            ]
            self.report.count_events(events)
            self.sinks.on_events(events)
            return

        events, kept, points = [], [], []
        for item in frame.items:
            det = item.detection
            if not det.bbox.within(self.cfg.intrinsics):
                logger.debug(f"Detection dropped at t={frame.stamp}: bbox {det.bbox.to_list()} outside the image")
                events.append(AssociationEvent(EventKind.DROPPED, frame.stamp, det.class_label,
                                               reason=DropReason.OUT_OF_IMAGE))
                continue
            try:
                point = back_project(det.bbox, DepthSamples.from_millimeters(item.depth_samples_mm), self.cfg.intrinsics)
            except NoValidDepth as e:
                logger.debug(f"Detection dropped at t={frame.stamp}: {e}")
                events.append(AssociationEvent(EventKind.DROPPED, frame.stamp, det.class_label, reason=DropReason.NO_DEPTH))
                continue
            kept.append(det)
            points.append(point)
        map_detections = detections_to_map(kept, points, self.cfg.T_body_cam, body, frame.stamp)

        snapshot, layer_events = self.layer.process_frame(map_detections, frame.stamp)
        events.extend(layer_events)
        self.report.count_events(events)
        self.sinks.on_events(events)
        self.sinks.on_snapshot(snapshot)


def replay(log: Union[str, Iterable[str], Iterable[LogRecord]], cfg: Optional[RunConfig] = None,
           sinks: Optional[ReplaySink] = None) -> RunReport:
    """Run a whole log through the pipeline.

    `log` is a path, an iterable of text lines, or already parsed records.
    Parse errors propagate; missing poses and depth are counted and skipped.
    """
    cfg = cfg or RunConfig()
    started = time.perf_counter()
    if isinstance(log, (str, os.PathLike)):
        records = read_log(log)
    else:
        items = list(log)
        records = items if items and isinstance(items[0], LogRecord) else list(parse_log(items))
    merged = merge_streams(records)
    logger.info(f"Replaying {len(merged)} records")

    replayer = Replayer(cfg, sinks)
    for record in merged:
        replayer.feed(record)
    report = replayer.finish()
    report.stream_rates = stream_rates(merged)
    report.wall_clock_s = time.perf_counter() - started
    logger.info(
        f"Replay done: {report.objects} objects, {report.scans} scans, {report.detection_frames} frames, "
        f"drops {report.drops} in {report.wall_clock_s:.2f} s"
    )
    return report
