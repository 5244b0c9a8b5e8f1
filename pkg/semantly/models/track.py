from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from semantly.core.utils import FORMAT_VERSION, distance
from semantly.models.pose import Pose2


@dataclass(frozen=True, slots=True)
class Hit:
    stamp: float
    position: tuple[float, float]
    score: float
    yaw: float = 0.0


@dataclass(slots=True)
class TrackCandidate:
    """Short-term record of co-located same-class sightings awaiting promotion."""

    candidate_id: int
    class_label: str
    hits: list[Hit] = field(default_factory=list)
    mean_position: tuple[float, float] = (0.0, 0.0)

    def add_hit(self, hit: Hit) -> None:
        self.hits.append(hit)
        self.recompute_mean()

    def recompute_mean(self) -> None:
        if not self.hits:
            return
        n = len(self.hits)
        self.mean_position = (
            math.fsum(h.position[0] for h in self.hits) / n,
            math.fsum(h.position[1] for h in self.hits) / n,
        )

    @property
    def newest_stamp(self) -> float:
        return self.hits[-1].stamp

    def window_hits(self, now: float, window: float) -> list[Hit]:
        start = now - window
        return [h for h in self.hits if start <= h.stamp <= now]


@dataclass(frozen=True, slots=True)
class MapObject:
    """Confirmed long-term object. Updates produce new values; the pose never changes."""

    id: int
    class_label: str
    pose: Pose2
    hit_count: int
    mean_score: float
    first_seen: float
    last_seen: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.pose.x, self.pose.y)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "class": self.class_label,
            "x": self.pose.x,
            "y": self.pose.y,
            "yaw": self.pose.yaw,
            "hits": self.hit_count,
            "mean_score": self.mean_score,
        }

    @classmethod
    def from_dict(cls, data: dict, stamp: float = 0.0) -> MapObject:
        return cls(
            id=int(data["id"]),
            class_label=str(data["class"]),
            pose=Pose2(data["x"], data["y"], data.get("yaw", 0.0)),
            hit_count=int(data["hits"]),
            mean_score=float(data["mean_score"]),
            first_seen=stamp,
            last_seen=stamp,
        )


class ObjectJournal:
    """Id-ordered confirmed objects with constant-time point-in-time views.

    Writes append to a log over an immutable base tuple. A view remembers the
    base, the log and its length, and is only materialized when read. Once the
    log outgrows the base it is folded into a new base; the old log is never
    written again, so earlier views stay valid.
    """

    def __init__(self):
        self.base: tuple[MapObject, ...] = ()
        self.log: list[MapObject] = []

    def put(self, obj: MapObject, current: dict[int, MapObject]) -> None:
        """Record a write; `current` is the writer's id-ordered table after it."""
        self.log.append(obj)
        if len(self.log) > max(64, len(self.base)):
            self.base = tuple(current.values())
            self.log = []

    def view(self) -> tuple:
        return self.base, self.log, len(self.log)


def _materialize(view: tuple) -> tuple[MapObject, ...]:
    base, log, length = view
    if not length:
        return base
    merged = {obj.id: obj for obj in base}
    for obj in log[:length]:
        merged[obj.id] = obj
    return tuple(sorted(merged.values(), key=lambda obj: obj.id))


class ObjectMapSnapshot:
    """Confirmed objects at one stamp, sorted by id. Never changes once built."""

    __slots__ = ("stamp", "_objects", "_view")

    def __init__(self, stamp: float, objects: tuple[MapObject, ...] = ()):
        self.stamp = stamp
        self._objects = tuple(objects)
        self._view = None

    @classmethod
    def of_journal(cls, stamp: float, journal: ObjectJournal) -> ObjectMapSnapshot:
        snapshot = cls(stamp)
        snapshot._objects = None
        snapshot._view = journal.view()
        return snapshot

    @property
    def objects(self) -> tuple[MapObject, ...]:
        objects = self._objects
        if objects is None:
            objects = _materialize(self._view)
            self._objects = objects
        return objects

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObjectMapSnapshot):
            return NotImplemented
        return self.stamp == other.stamp and self.objects == other.objects

    __hash__ = None

    def __repr__(self) -> str:
        return f"ObjectMapSnapshot(stamp={self.stamp!r}, objects={self.objects!r})"

    def count(self, class_label: str) -> int:
        return sum(1 for obj in self.objects if obj.class_label == class_label)

    def nearest(self, class_label: str, x: float, y: float) -> Optional[MapObject]:
        best = None
        best_distance = math.inf
        for obj in self.objects:
            if obj.class_label != class_label:
                continue
            d = distance(obj.position, (x, y))
            if d < best_distance or (d == best_distance and obj.id < best.id):
                best, best_distance = obj, d
        return best

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "t": self.stamp,
            "objects": [obj.to_dict() for obj in self.objects],
        }

    @classmethod
    def from_dict(cls, data: dict) -> ObjectMapSnapshot:
        stamp = float(data["t"])
        objects = sorted(
            (MapObject.from_dict(item, stamp) for item in data["objects"]),
            key=lambda obj: obj.id,
        )
        return cls(stamp, tuple(objects))


class EventKind(str, Enum):
    DROPPED = "dropped"
    MERGED_IN_FRAME = "merged_in_frame"
    MATCHED_LONG_TERM = "matched_long_term"
    UPDATED_CANDIDATE = "updated_candidate"
    NEW_CANDIDATE = "new_candidate"
    PROMOTED = "promoted"


class DropReason(str, Enum):
    LOW_SCORE = "low_score"
    NO_DEPTH = "no_depth"
    NO_POSE = "no_pose"
    OUT_OF_IMAGE = "out_of_image"
    UNTRACKED = "untracked"


@dataclass(frozen=True, slots=True)
class AssociationEvent:
    """Terminal outcome of one input detection."""

    kind: EventKind
    stamp: float
    class_label: str
    object_id: Optional[int] = None
    reason: Optional[DropReason] = None

    def to_dict(self) -> dict:
        document = {"t": self.stamp, "kind": self.kind.value, "class": self.class_label}
        if self.object_id is not None:
            document["object_id"] = self.object_id
        if self.reason is not None:
            document["reason"] = self.reason.value
        return document
