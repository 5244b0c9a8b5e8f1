"""Log-odds occupancy grid built from planar scans at known poses.

Cells are addressed two ways: lattice indices, which are fixed to a world anchor
and never move, and array indices (col, row), which shift when the grid grows.
Rows run along +y.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from semantly.models.config_settings import OccupancyParams
from semantly.models.pose import Pose2
from semantly.models.scan import LaserScan

from logging import getLogger
logger = getLogger(__name__)

# trinary labels, same values as a ROS OccupancyGrid message
UNKNOWN = -1
FREE = 0
OCCUPIED = 100

# endpoints closer than this to a cell border, in cells, lie on it
BORDER_SNAP = 1e-6


class OccupancyGrid:

    def __init__(
        self,
        params: OccupancyParams,
        log_odds: np.ndarray,
        anchor: tuple[float, float] = (0.0, 0.0),
        offset: tuple[int, int] = (0, 0),
        touched: Optional[np.ndarray] = None,
    ):
        self.params = params
        self.log_odds = np.asarray(log_odds, dtype=np.float64)
        self.anchor = (float(anchor[0]), float(anchor[1]))
        self.offset = (int(offset[0]), int(offset[1]))
        self.touched = np.zeros(self.log_odds.shape, dtype=bool) if touched is None else touched

    @classmethod
    def empty(
        cls,
        params: Optional[OccupancyParams] = None,
        origin: Optional[tuple[float, float]] = None,
        width: Optional[int] = None,
        height: Optional[int] = None,
    ) -> OccupancyGrid:
        """All-unknown grid. Without an origin the grid is centered on the world origin."""
        params = params or OccupancyParams()
        width = width or params.initial_size
        height = height or params.initial_size
        if origin is None:
            return cls(params, np.zeros((height, width)), (0.0, 0.0), (-(width // 2), -(height // 2)))
        return cls(params, np.zeros((height, width)), origin, (0, 0))

    @property
    def resolution(self) -> float:
        return self.params.resolution

    @property
    def width(self) -> int:
        return self.log_odds.shape[1]

    @property
    def height(self) -> int:
        return self.log_odds.shape[0]

    @property
    def origin(self) -> Pose2:
        """World pose of the lower-left corner of array cell (0, 0)."""
        return Pose2(
            self.anchor[0] + self.offset[0] * self.resolution,
            self.anchor[1] + self.offset[1] * self.resolution,
            0.0,
        )

    def to_lattice(self, x: float, y: float) -> tuple[float, float]:
        """World point in continuous lattice units (one unit per cell)."""
        return ((x - self.anchor[0]) / self.resolution, (y - self.anchor[1]) / self.resolution)

    def lattice_of(self, x: float, y: float) -> tuple[int, int]:
        lx, ly = self.to_lattice(x, y)
        return (math.floor(lx), math.floor(ly))

    def cell_of(self, x: float, y: float) -> Optional[tuple[int, int]]:
        """Array (col, row) of the cell holding the world point, or None outside the grid."""
        lx, ly = self.lattice_of(x, y)
        col, row = lx - self.offset[0], ly - self.offset[1]
        if 0 <= col < self.width and 0 <= row < self.height:
            return (col, row)
        return None

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        origin = self.origin
        return (origin.x + (col + 0.5) * self.resolution, origin.y + (row + 0.5) * self.resolution)

    def ensure_contains(self, lx_min: int, ly_min: int, lx_max: int, ly_max: int) -> bool:
        """Grow by doubling toward each side until the lattice box fits. Returns True if the grid grew."""
        ox, oy = self.offset
        width, height = self.width, self.height
        left = right = bottom = top = 0
        while lx_min < ox - left:
            left += width + left + right
        while lx_max >= ox + width + right:
            right += width + left + right
        while ly_min < oy - bottom:
            bottom += height + bottom + top
        while ly_max >= oy + height + top:
            top += height + bottom + top
        if not (left or right or bottom or top):
            return False
        pad = ((bottom, top), (left, right))
        self.log_odds = np.pad(self.log_odds, pad, constant_values=0.0)
        self.touched = np.pad(self.touched, pad, constant_values=False)
        self.offset = (ox - left, oy - bottom)
        logger.debug(f"Grid grown to {self.width}x{self.height}, origin ({self.origin.x:.3f}, {self.origin.y:.3f})")
        return True

    def probabilities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.log_odds))

    def copy(self) -> OccupancyGrid:
        return OccupancyGrid(self.params, self.log_odds.copy(), self.anchor, self.offset, self.touched.copy())


def traverse(start: tuple[float, float], end: tuple[float, float]) -> list[tuple[int, int]]:
    """Lattice cells crossed by the segment start -> end, in order, without the end cell.

    Points are in continuous lattice units. Amanatides-Woo stepping; on an exact
    corner crossing x steps first.
    """
    return [tuple(cell) for cell in traverse_many(start, [end]).tolist()]


def _crossings(origin: float, cell: int, ends: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell border crossings along one axis: (ray index, ray parameter, step) per crossing."""
    delta = ends - origin
    counts = np.abs(np.floor(ends).astype(np.int64) - cell)
    step = np.sign(delta).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = (cell + (step > 0) - origin) / delta
        spacing = 1.0 / np.abs(delta)
    ray = np.repeat(np.arange(len(ends)), counts)
    k = np.arange(len(ray)) - np.repeat(np.cumsum(counts) - counts, counts)
    return ray, first[ray] + k * spacing[ray], step[ray]


def traverse_many(start: tuple[float, float], ends) -> np.ndarray:
    """`traverse` from one start to many ends, concatenated ray by ray as (n, 2) lattice cells."""
    ends = np.asarray(ends, dtype=np.float64).reshape(-1, 2)
    x0, y0 = float(start[0]), float(start[1])
    cx, cy = math.floor(x0), math.floor(y0)
    ray_x, t_x, step_x = _crossings(x0, cx, ends[:, 0])
    ray_y, t_y, step_y = _crossings(y0, cy, ends[:, 1])
    ray = np.concatenate([ray_x, ray_y])
    if not len(ray):
        return np.empty((0, 2), dtype=np.int64)
    t = np.concatenate([t_x, t_y])
    on_y = np.concatenate([np.zeros(len(ray_x), dtype=bool), np.ones(len(ray_y), dtype=bool)])
    steps = np.concatenate([step_x, step_y])

    order = np.lexsort((on_y, t, ray))
    ray, on_y, steps = ray[order], on_y[order], steps[order]
    move_x = np.where(on_y, 0, steps)
    move_y = np.where(on_y, steps, 0)
    # the cell before each crossing: start cell plus the earlier moves of the same ray
    before_x = np.cumsum(move_x) - move_x
    before_y = np.cumsum(move_y) - move_y
    first = np.flatnonzero(np.r_[True, ray[1:] != ray[:-1]])
    lengths = np.diff(np.r_[first, len(ray)])
    before_x -= np.repeat(before_x[first], lengths)
    before_y -= np.repeat(before_y[first], lengths)
    return np.column_stack([cx + before_x, cy + before_y])


def snap_to_border(values: np.ndarray) -> np.ndarray:
    nearest = np.round(values)
    return np.where(np.abs(values - nearest) < BORDER_SNAP, nearest, values)


def _cell_counts(grid: OccupancyGrid, cells: np.ndarray) -> np.ndarray:
    ox, oy = grid.offset
    flat = (cells[:, 1] - oy) * grid.width + (cells[:, 0] - ox)
    return np.bincount(flat, minlength=grid.log_odds.size).reshape(grid.log_odds.shape)


def integrate_scan(grid: OccupancyGrid, pose: Pose2, scan: LaserScan, params: Optional[OccupancyParams] = None) -> OccupancyGrid:
    """Inverse sensor model update of one scan taken from the sensor pose `pose`.

    A return on a cell border belongs to the cell whose lower edge it is.
    Updates are counted per cell and applied at once, then clamped, so the
    result does not depend on beam order.
    """
    params = params or grid.params
    ranges = np.asarray(scan.ranges, dtype=np.float64)
    beams = np.flatnonzero(np.isfinite(ranges) & (ranges >= scan.range_min))
    if not len(beams):
        return grid
    ranges = ranges[beams]
    hit = ranges < scan.range_max
    length = np.where(hit, ranges, scan.range_max)
    angle = pose.yaw + (scan.angle_min + beams * scan.angle_increment)

    start = grid.to_lattice(pose.x, pose.y)
    end_x = snap_to_border((pose.x + length * np.cos(angle) - grid.anchor[0]) / grid.resolution)
    end_y = snap_to_border((pose.y + length * np.sin(angle) - grid.anchor[1]) / grid.resolution)
    cell_x, cell_y = np.floor(end_x).astype(np.int64), np.floor(end_y).astype(np.int64)
    sx, sy = math.floor(start[0]), math.floor(start[1])
    grid.ensure_contains(
        min(sx, int(cell_x.min())), min(sy, int(cell_y.min())),
        max(sx, int(cell_x.max())), max(sy, int(cell_y.max())),
    )

    free_count = _cell_counts(grid, traverse_many(start, np.column_stack([end_x, end_y])))
    occupied_count = _cell_counts(grid, np.column_stack([cell_x[hit], cell_y[hit]]))
    grid.log_odds += free_count * params.l_free + occupied_count * params.l_occ
    np.clip(grid.log_odds, params.l_min, params.l_max, out=grid.log_odds)
    grid.touched |= (free_count > 0) | (occupied_count > 0)
    return grid


def classify(grid: OccupancyGrid) -> np.ndarray:
    """Per-cell OCCUPIED / FREE / UNKNOWN, indexed [row, col]."""
    p = grid.probabilities()
    labels = np.full(p.shape, UNKNOWN, dtype=np.int8)
    labels[p > grid.params.occupied_thresh] = OCCUPIED
    labels[p < grid.params.free_thresh] = FREE
    return labels
