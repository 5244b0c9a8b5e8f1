from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from semantly.core.utils import FORMAT_VERSION, distance
from semantly.models.scenario import GroundTruth
from semantly.models.track import ObjectMapSnapshot

from logging import getLogger
logger = getLogger(__name__)

DEFAULT_MATCH_RADIUS = 0.5


@dataclass(frozen=True)
class Metrics:
    true_positives: int = 0
    duplicates: int = 0
    false_objects: int = 0
    missed: int = 0
    mean_position_error: Optional[float] = None

    def to_dict(self) -> dict:
        document = {
            "format_version": FORMAT_VERSION,
            "true_positives": self.true_positives,
            "duplicates": self.duplicates,
            "false_objects": self.false_objects,
            "missed": self.missed,
        }
        if self.mean_position_error is not None:
            document["mean_position_error"] = self.mean_position_error
        return document


def score_run(snapshot: ObjectMapSnapshot, truth: GroundTruth, match_radius: float = DEFAULT_MATCH_RADIUS) -> Metrics:
    """Greedy same-class matching by increasing distance; each true object is matched once.

    Unmatched map objects within match_radius of an already matched true object
    are duplicates, the rest are false objects.
    """
    pairs = []
    for obj in snapshot.objects:
        for index, true_obj in enumerate(truth.objects):
            if obj.class_label != true_obj.class_label:
                continue
            d = distance(obj.position, true_obj.position)
            if d <= match_radius:
                pairs.append((d, obj.id, index))
    pairs.sort()

    matched_objects, matched_truth, errors = set(), set(), []
    for d, object_id, index in pairs:
        if object_id in matched_objects or index in matched_truth:
            continue
        matched_objects.add(object_id)
        matched_truth.add(index)
        errors.append(d)

    near_truth = {object_id for _, object_id, _ in pairs}
    duplicates = sum(1 for obj in snapshot.objects if obj.id not in matched_objects and obj.id in near_truth)
    false_objects = sum(1 for obj in snapshot.objects if obj.id not in near_truth)
    metrics = Metrics(
        true_positives=len(matched_objects),
        duplicates=duplicates,
        false_objects=false_objects,
        missed=len(truth.objects) - len(matched_truth),
        mean_position_error=math.fsum(errors) / len(errors) if errors else None,
    )
    logger.debug(f"Scored {len(snapshot.objects)} objects against {len(truth.objects)}: {metrics}")
    return metrics
