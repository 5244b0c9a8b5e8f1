"""Map-server style export: an 8-bit P5 graymap plus a YAML metadata file."""
from __future__ import annotations

import os
from dataclasses import replace
from typing import Optional

import numpy as np
import yaml
from PIL import Image

from semantly.core.exceptions import ExportError
from semantly.core.occupancy import FREE, OCCUPIED, OccupancyGrid, classify
from semantly.models.config_settings import OccupancyParams

from logging import getLogger
logger = getLogger(__name__)

OCCUPIED_PIXEL = 0
FREE_PIXEL = 254
UNKNOWN_PIXEL = 205


def to_pixels(grid: OccupancyGrid) -> np.ndarray:
    """Image rows top to bottom, so image row 0 is the highest y."""
    labels = classify(grid)
    pixels = np.full(labels.shape, UNKNOWN_PIXEL, dtype=np.uint8)
    pixels[labels == OCCUPIED] = OCCUPIED_PIXEL
    pixels[labels == FREE] = FREE_PIXEL
    return np.flipud(pixels)


def pgm_bytes(grid: OccupancyGrid) -> bytes:
    header = f"P5\n# CREATOR: semantly {grid.resolution:.3f} m/pix\n{grid.width} {grid.height}\n255\n"
    return header.encode("ascii") + np.ascontiguousarray(to_pixels(grid)).tobytes()


def metadata_text(grid: OccupancyGrid, image_name: str) -> str:
    origin = grid.origin
    return (
        f"image: {image_name}\n"
        f"resolution: {grid.resolution:.6f}\n"
        f"origin: [{origin.x:.6f}, {origin.y:.6f}, {origin.yaw:.6f}]\n"
        f"negate: 0\n"
        f"occupied_thresh: {grid.params.occupied_thresh:g}\n"
        f"free_thresh: {grid.params.free_thresh:g}\n"
    )


def export_map(grid: OccupancyGrid, path_prefix) -> tuple[str, str]:
    """Write <prefix>.pgm and <prefix>.yaml; returns both paths."""
    if grid.width == 0 or grid.height == 0:
        raise ExportError(path_prefix, "grid is empty")
    image_path = f"{path_prefix}.pgm"
    yaml_path = f"{path_prefix}.yaml"
    try:
        with open(image_path, "wb") as f:
            f.write(pgm_bytes(grid))
        with open(yaml_path, "w", encoding="ascii", newline="\n") as f:
            f.write(metadata_text(grid, os.path.basename(image_path)))
    except OSError as e:
        raise ExportError(e.filename or image_path, e.strerror or str(e)) from e
    logger.info(f"Map exported to {image_path} ({grid.width}x{grid.height} @ {grid.resolution} m)")
    return image_path, yaml_path


def read_image(path: str) -> np.ndarray:
    """8-bit gray pixels of a map image, row 0 on top."""
    with Image.open(path) as image:
        if image.mode != "L":
            raise ValueError(f"unsupported image mode {image.mode}")
        return np.asarray(image).copy()


def load_map(path, params: Optional[OccupancyParams] = None) -> OccupancyGrid:
    """Read an exported map back as a trinary grid (cells at the clamp bounds or 0).

    `path` is either the metadata file or the common prefix of both files.
    """
    yaml_path = str(path) if str(path).endswith((".yaml", ".yml")) else f"{path}.yaml"
    try:
        with open(yaml_path, "r", encoding="utf-8") as f:
            meta = yaml.safe_load(f)
        image_path = os.path.join(os.path.dirname(yaml_path), meta["image"])
        pixels = read_image(image_path)
    except (OSError, KeyError, TypeError, ValueError, yaml.YAMLError) as e:
        raise ExportError(yaml_path, f"cannot read map: {e}") from e

    base = params or OccupancyParams()
    params = replace(
        base,
        resolution=float(meta["resolution"]),
        occupied_thresh=float(meta.get("occupied_thresh", base.occupied_thresh)),
        free_thresh=float(meta.get("free_thresh", base.free_thresh)),
    )
    occupancy = pixels.astype(np.float64) / 255.0
    if not meta.get("negate", 0):
        occupancy = 1.0 - occupancy
    log_odds = np.zeros(pixels.shape, dtype=np.float64)
    log_odds[occupancy > params.occupied_thresh] = params.l_max
    log_odds[occupancy < params.free_thresh] = params.l_min
    log_odds[pixels == UNKNOWN_PIXEL] = 0.0
    log_odds = np.flipud(log_odds).copy()

    origin = meta.get("origin", [0.0, 0.0, 0.0])
    grid = OccupancyGrid(params, log_odds, (float(origin[0]), float(origin[1])), (0, 0))
    grid.touched = log_odds != 0.0
    logger.debug(f"Loaded map {image_path}: {grid.width}x{grid.height}")
    return grid
