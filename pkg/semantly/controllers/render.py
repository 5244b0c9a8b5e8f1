"""Offline figure of an exported map with the confirmed objects drawn on top."""
from __future__ import annotations

from typing import Optional

from semantly.core.map_io import to_pixels
from semantly.core.occupancy import OccupancyGrid
from semantly.models.track import ObjectMapSnapshot

from logging import getLogger
logger = getLogger(__name__)

CLASS_COLORS = ("tab:red", "tab:blue", "tab:green", "tab:orange", "tab:purple", "tab:brown")


def object_label(obj) -> str:
    return f"{obj.class_label} #{obj.id} ({obj.hit_count})"


def render_map(grid: OccupancyGrid, snapshot: Optional[ObjectMapSnapshot], out_path, dpi: int = 150) -> str:
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    origin = grid.origin
    extent = (
        origin.x, origin.x + grid.width * grid.resolution,
        origin.y, origin.y + grid.height * grid.resolution,
    )
    fig, ax = plt.subplots(figsize=(8, 8 * grid.height / max(grid.width, 1)))
    try:
        ax.imshow(to_pixels(grid), cmap="gray", vmin=0, vmax=255, extent=extent, interpolation="nearest")
        if snapshot is not None:
            classes = sorted({obj.class_label for obj in snapshot.objects})
            for obj in snapshot.objects:
                color = CLASS_COLORS[classes.index(obj.class_label) % len(CLASS_COLORS)]
                ax.plot(obj.pose.x, obj.pose.y, marker="o", color=color)
                ax.annotate(object_label(obj), (obj.pose.x, obj.pose.y), textcoords="offset points",
                            xytext=(4, 4), fontsize=7, color=color)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
        plt.tight_layout()
        fig.savefig(out_path, dpi=dpi)
    finally:
        plt.close(fig)
    logger.info(f"Rendered map with {0 if snapshot is None else len(snapshot.objects)} objects to {out_path}")
    return str(out_path)
