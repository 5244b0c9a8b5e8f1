"""Uniform grid hash over (class, cell) buckets for fixed-radius neighbor queries."""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Hashable, Optional

from semantly.core.utils import distance


class GridIndex:

    def __init__(self, cell_size: float):
        if cell_size <= 0:
            raise ValueError(f"cell_size must be positive, got {cell_size}")
        self.cell_size = cell_size
        self.inv_cell_size = 1.0 / cell_size
        self.buckets = defaultdict(dict)
        self._where = {}

    def __len__(self) -> int:
        return len(self._where)

    def __contains__(self, key: Hashable) -> bool:
        return key in self._where

    def _cell(self, position: tuple[float, float]) -> tuple[int, int]:
        return (math.floor(position[0] * self.inv_cell_size), math.floor(position[1] * self.inv_cell_size))

    def insert(self, key: Hashable, class_label: str, position: tuple[float, float]) -> None:
        if key in self._where:
            self.remove(key)
        cx, cy = self._cell(position)
        bucket_key = (class_label, cx, cy)
        self.buckets[bucket_key][key] = position
        self._where[key] = bucket_key

    def remove(self, key: Hashable) -> None:
        bucket_key = self._where.pop(key)
        bucket = self.buckets[bucket_key]
        del bucket[key]
        if not bucket:
            del self.buckets[bucket_key]

    def move(self, key: Hashable, position: tuple[float, float]) -> None:
        class_label = self._where[key][0]
        self.insert(key, class_label, position)

    def _span(self, value: float, radius: float) -> range:
        # slack keeps points exactly radius away inside the scanned cells
        low = math.floor((value - radius) * self.inv_cell_size - 1e-9)
        high = math.floor((value + radius) * self.inv_cell_size + 1e-9)
        return range(low, high + 1)

    def _neighborhood(self, class_label: str, position: tuple[float, float], radius: float):
        ys = self._span(position[1], radius)
        for cx in self._span(position[0], radius):
            for cy in ys:
                bucket = self.buckets.get((class_label, cx, cy))
                if bucket:
                    yield from bucket.items()

    def within(self, class_label: str, position: tuple[float, float], radius: float) -> list:
        """All (key, distance) pairs of the class with distance <= radius, nearest first, ties by key."""
        found = []
        for key, other in self._neighborhood(class_label, position, radius):
            d = distance(position, other)
            if d <= radius:
                found.append((d, key))
        found.sort()
        return [(key, d) for d, key in found]

    def nearest(self, class_label: str, position: tuple[float, float], radius: float) -> Optional[tuple]:
        """Nearest (key, distance) of the class within radius; ties broken by the lowest key."""
        best = None
        for key, other in self._neighborhood(class_label, position, radius):
            d = distance(position, other)
            if d > radius:
                continue
            if best is None or d < best[1] or (d == best[1] and key < best[0]):
                best = (key, d)
        return best
