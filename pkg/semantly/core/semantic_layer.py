"""Association and memory engine of the semantic object layer.

Per frame: confidence gate -> same-frame merge -> association against the
long-term list, then the short-term buffer -> promotion -> pruning -> snapshot.
"""
from __future__ import annotations

import math
from dataclasses import replace
from typing import Iterable, Optional

from semantly.core.exceptions import NonMonotonicStamp
from semantly.core.spatial_index import GridIndex
from semantly.core.utils import distance
from semantly.models.config_settings import LayerConfig
from semantly.models.detection import MapDetection
from semantly.models.pose import Pose2
from semantly.models.track import (
    AssociationEvent, DropReason, EventKind, Hit, MapObject, ObjectJournal, ObjectMapSnapshot, TrackCandidate,
)

from logging import getLogger
logger = getLogger(__name__)


class LayerState:
    """Mutable memories of the layer. Single writer: one caller advances it at a time."""

    def __init__(self, cfg: LayerConfig):
        self.objects: dict[int, MapObject] = {}
        self.candidates: dict[int, TrackCandidate] = {}
        self.object_index = GridIndex(cfg.reuse_radius)
        self.candidate_index = GridIndex(cfg.reuse_radius)
        self.next_object_id = 1
        self.next_candidate_id = 1
        self.last_stamp: Optional[float] = None
        self.journal = ObjectJournal()

    def put_object(self, obj: MapObject) -> None:
        if obj.id not in self.objects:
            self.object_index.insert(obj.id, obj.class_label, obj.position)
        self.objects[obj.id] = obj
        self.journal.put(obj, self.objects)

    def remove_candidate(self, candidate_id: int) -> None:
        del self.candidates[candidate_id]
        self.candidate_index.remove(candidate_id)


def _sort_key(indexed: tuple) -> tuple:
    index, det = indexed
    return (-det.score, det.x, det.y, index)


def gate_by_confidence(dets: Iterable[MapDetection], cfg: LayerConfig) -> tuple[list, list]:
    """Keep detections whose score reaches the cutoff of their class (inclusive)."""
    kept, dropped = [], []
    for det in dets:
        (kept if det.score >= cfg.cutoff_for(det.class_label) else dropped).append(det)
    return kept, dropped


def _merge(dets: list, cfg: LayerConfig) -> tuple[list, list]:
    if len(dets) < 2:
        return list(dets), []
    survivors, merged = [], []
    kept_by_class: dict[str, list] = {}
    for _, det in sorted(enumerate(dets), key=_sort_key):
        kept = kept_by_class.setdefault(det.class_label, [])
        if any(distance(det.position, other.position) <= cfg.frame_merge_radius for other in kept):
            merged.append(det)
        else:
            kept.append(det)
            survivors.append(det)
    return survivors, merged


def merge_in_frame(dets: list, cfg: LayerConfig) -> list:
    """Greedy per-class suppression of near-duplicates, highest score first.

    Ties on score go to the smaller x, then y, then input order. Survivors come
    back in descending score order.
    """
    return _merge(dets, cfg)[0]


def _match_long_term(det: MapDetection, state: LayerState, cfg: LayerConfig) -> Optional[MapObject]:
    found = state.object_index.nearest(det.class_label, det.position, cfg.reuse_radius)
    if found is None:
        return None
    obj = state.objects[found[0]]
    updated = MapObject(
        obj.id, obj.class_label, obj.pose,
        obj.hit_count + 1,
        (obj.mean_score * obj.hit_count + det.score) / (obj.hit_count + 1),
        obj.first_seen,
        max(obj.last_seen, det.stamp),
    )
    state.put_object(updated)
    return updated


def _associate(det: MapDetection, state: LayerState, cfg: LayerConfig) -> tuple[AssociationEvent, Optional[int]]:
    obj = _match_long_term(det, state, cfg)
    if obj is not None:
        return AssociationEvent(EventKind.MATCHED_LONG_TERM, det.stamp, det.class_label, object_id=obj.id), None

    hit = Hit(det.stamp, det.position, det.score, det.yaw)
    found = state.candidate_index.nearest(det.class_label, det.position, cfg.reuse_radius)
    if found is not None:
        cand = state.candidates[found[0]]
        cand.add_hit(hit)
        state.candidate_index.move(cand.candidate_id, cand.mean_position)
        return AssociationEvent(EventKind.UPDATED_CANDIDATE, det.stamp, det.class_label), cand.candidate_id

    cand = TrackCandidate(state.next_candidate_id, det.class_label)
    state.next_candidate_id += 1
    cand.add_hit(hit)
    state.candidates[cand.candidate_id] = cand
    state.candidate_index.insert(cand.candidate_id, cand.class_label, cand.mean_position)
    return AssociationEvent(EventKind.NEW_CANDIDATE, det.stamp, det.class_label), cand.candidate_id


def associate(det: MapDetection, state: LayerState, cfg: LayerConfig) -> AssociationEvent:
    """Attribute one gated, frame-merged detection to memory.

    Nearest same-class confirmed object within reuse_radius wins (its pose is
    left unchanged); otherwise the nearest same-class candidate; otherwise a new
    candidate is started.
    """
    return _associate(det, state, cfg)[0]


def promotion_gate(cand: TrackCandidate, now: float, cfg: LayerConfig) -> Optional[list]:
    """In-window hits if the candidate passes the hits / window / mean-score gate."""
    window = cand.window_hits(now, cfg.promote_window)
    if len(window) < cfg.promote_min_hits:
        return None
    if math.fsum(h.score for h in window) / len(window) < cfg.promote_min_mean_score:
        return None
    return window


def _promote(cand: TrackCandidate, now: float, cfg: LayerConfig, state: LayerState) -> Optional[tuple[MapObject, bool]]:
    window = promotion_gate(cand, now, cfg)
    if window is None:
        return None
    n = len(window)
    pose = Pose2(
        math.fsum(h.position[0] for h in window) / n,
        math.fsum(h.position[1] for h in window) / n,
        window[-1].yaw,
    )
    state.remove_candidate(cand.candidate_id)

    found = state.object_index.nearest(cand.class_label, pose.position, cfg.reuse_radius)
    if found is not None:
        # folding keeps same-class objects further apart than reuse_radius
        obj = state.objects[found[0]]
        folded = replace(
            obj,
            hit_count=obj.hit_count + n,
            mean_score=(obj.mean_score * obj.hit_count + math.fsum(h.score for h in window)) / (obj.hit_count + n),
            last_seen=max(obj.last_seen, window[-1].stamp),
        )
        state.put_object(folded)
        logger.debug(f"Candidate {cand.candidate_id} folded into object {obj.id} ({obj.class_label})")
        return folded, False

    obj = MapObject(
        id=state.next_object_id,
        class_label=cand.class_label,
        pose=pose,
        hit_count=n,
        mean_score=math.fsum(h.score for h in window) / n,
        first_seen=window[0].stamp,
        last_seen=window[-1].stamp,
    )
    state.next_object_id += 1
    state.put_object(obj)
    logger.info(f"Promoted {obj.class_label} #{obj.id} at ({pose.x:.3f}, {pose.y:.3f}) with {n} hits")
    return obj, True


def try_promote(cand: TrackCandidate, now: float, cfg: LayerConfig, state: LayerState) -> Optional[MapObject]:
    """Promote the candidate if it passes the gate.

    The candidate leaves short-term memory. If its pose lands within
    reuse_radius of a same-class object, its hits are folded into that object,
    which is returned instead of a new one.
    """
    result = _promote(cand, now, cfg, state)
    return None if result is None else result[0]


def prune(state: LayerState, now: float, cfg: LayerConfig) -> int:
    """Drop stale hits and candidates. Confirmed objects are never pruned."""
    window_start = now - cfg.promote_window
    ttl_start = now - cfg.candidate_ttl
    removed = 0
    for candidate_id in sorted(state.candidates):
        cand = state.candidates[candidate_id]
        first_fresh = 0
        while first_fresh < len(cand.hits) and cand.hits[first_fresh].stamp < window_start:
            first_fresh += 1
        if first_fresh:
            del cand.hits[:first_fresh]
        if not cand.hits or cand.newest_stamp < ttl_start:
            state.remove_candidate(candidate_id)
            removed += 1
        elif first_fresh:
            cand.recompute_mean()
            state.candidate_index.move(candidate_id, cand.mean_position)
    return removed


def snapshot(state: LayerState, stamp: float) -> ObjectMapSnapshot:
    """Detached view of the confirmed objects; later updates never alter it."""
    return ObjectMapSnapshot.of_journal(stamp, state.journal)


def process_frame(
    frame: list,
    stamp: float,
    state: LayerState,
    cfg: LayerConfig,
) -> tuple[ObjectMapSnapshot, list]:
    if state.last_stamp is not None and stamp < state.last_stamp:
        raise NonMonotonicStamp(stamp, state.last_stamp)
    state.last_stamp = stamp

    events = []
    tracked = []
    for det in frame:
        if cfg.tracks(det.class_label):
            tracked.append(det)
        else:
            events.append(AssociationEvent(EventKind.DROPPED, det.stamp, det.class_label, reason=DropReason.UNTRACKED))

    kept, dropped = gate_by_confidence(tracked, cfg)
    for det in dropped:
        events.append(AssociationEvent(EventKind.DROPPED, det.stamp, det.class_label, reason=DropReason.LOW_SCORE))

    survivors, merged = _merge(kept, cfg)
    for det in merged:
        events.append(AssociationEvent(EventKind.MERGED_IN_FRAME, det.stamp, det.class_label))

    last_touch: dict[int, int] = {}
    for det in survivors:
        event, candidate_id = _associate(det, state, cfg)
        if candidate_id is not None:
            last_touch[candidate_id] = len(events)
        events.append(event)

    for candidate_id in sorted(last_touch):
        cand = state.candidates.get(candidate_id)
        if cand is None:
            continue
        result = _promote(cand, stamp, cfg, state)
        if result is None:
            continue
        obj, created = result
        index = last_touch[candidate_id]
        kind = EventKind.PROMOTED if created else EventKind.MATCHED_LONG_TERM
        events[index] = AssociationEvent(kind, events[index].stamp, obj.class_label, object_id=obj.id)

    removed = prune(state, stamp, cfg)
    if removed:
        logger.debug(f"Pruned {removed} candidate(s) at t={stamp}")
    return snapshot(state, stamp), events


class SemanticLayer:
    """Configuration plus state, advanced frame by frame."""

    def __init__(self, cfg: Optional[LayerConfig] = None):
        self.cfg = cfg or LayerConfig()
        self.state = LayerState(self.cfg)

    def process_frame(self, frame: list, stamp: float) -> tuple[ObjectMapSnapshot, list]:
        return process_frame(frame, stamp, self.state, self.cfg)

    def snapshot(self, stamp: Optional[float] = None) -> ObjectMapSnapshot:
        if stamp is None:
            stamp = self.state.last_stamp if self.state.last_stamp is not None else 0.0
        return snapshot(self.state, stamp)

    @property
    def objects(self) -> list:
        return list(self.state.objects.values())

