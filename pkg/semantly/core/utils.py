import os
import json
import math

from logging import getLogger
logger = getLogger(__name__)


FORMAT_VERSION = 1


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def distance(a: tuple, b: tuple) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def probability(log_odds: float) -> float:
    return 1.0 / (1.0 + math.exp(-log_odds))


def get_resource_path(filename: str) -> str:
    return os.path.join(os.path.dirname(__file__), filename)


def load_json_resource(filename: str) -> dict:
    filepath = get_resource_path(filename)
    logger.debug(f"Loading resource from: {filepath}")
    with open(filepath, "r", encoding="utf-8") as f:
        return json.load(f)


def to_json_line(document) -> str:
    """Compact, key-order preserving JSON on one line."""
    return json.dumps(document, separators=(",", ":"), allow_nan=False)


def write_json(path, document) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, allow_nan=False)
        f.write("\n")
