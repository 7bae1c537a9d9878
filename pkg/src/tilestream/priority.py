"""Four-level tile priority classification and the per-class tile counts."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from tilestream.errors import InvalidInput
from tilestream.media import TileGrid


class Priority(IntEnum):
    LOW = 0
    MID_LOW = 1
    TOP_MID = 2
    TOP = 3

    @property
    def slot(self) -> int:
        """Position in class-ordered vectors (Top first)."""
        return 3 - int(self)


# decision order within a chunk, highest priority first
CLASS_ORDER = (Priority.TOP, Priority.TOP_MID, Priority.MID_LOW, Priority.LOW)
_SYMBOLS = {Priority.TOP: "T", Priority.TOP_MID: "M", Priority.MID_LOW: "L", Priority.LOW: "."}


class WeightMatrix(NamedTuple):
    top: int
    top_mid: int
    mid_low: int
    low: int


@dataclass(frozen=True)
class PriorityMap:
    grid: TileGrid
    classes: np.ndarray  # Priority value per tile

    def __post_init__(self):
        c = np.asarray(self.classes, dtype=np.int8)
        if c.shape != (self.grid.n_tiles,):
            raise InvalidInput("priority map needs one entry per tile")
        c.setflags(write=False)
        object.__setattr__(self, "classes", c)

    def __getitem__(self, tile: int) -> Priority:
        return Priority(int(self.classes[tile]))

    def tiles_of(self, p: Priority) -> list[int]:
        return [int(t) for t in np.flatnonzero(self.classes == int(p))]

    def weights(self) -> WeightMatrix:
        counts = np.bincount(self.classes, minlength=4)
        return WeightMatrix(*(int(counts[int(p)]) for p in CLASS_ORDER))

    def render(self) -> str:
        """Rows of ``T``/``M``/``L``/``.`` characters, one per tile."""
        g = self.grid
        return "\n".join(
            "".join(_SYMBOLS[self[g.index(r, c)]] for c in range(g.cols)) for r in range(g.rows)
        )


def _check_tiles(tiles, g: TileGrid, what: str) -> np.ndarray:
    idx = np.fromiter(tiles, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= g.n_tiles):
        raise InvalidInput(f"{what} contains a tile outside the {g.rows}x{g.cols} grid")
    return idx


def classify_tiles(viewport, obj_overlapping, obj_disjoint, g: TileGrid) -> tuple[PriorityMap, WeightMatrix]:
    """Assign every tile a priority; the first matching rule wins.

    viewport tiles are Top; object tiles whose box touches the viewport are
    Top-Mid; tiles of boxes away from the viewport are Mid-Low; the rest Low.
    """
    vp = _check_tiles(viewport, g, "viewport set")
    near = _check_tiles(obj_overlapping, g, "overlapping object set")
    far = _check_tiles(obj_disjoint, g, "disjoint object set")
    classes = np.full(g.n_tiles, int(Priority.LOW), dtype=np.int8)
    # assign lowest first so higher classes overwrite
    classes[far] = int(Priority.MID_LOW)
    classes[near] = int(Priority.TOP_MID)
    classes[vp] = int(Priority.TOP)
    pm = PriorityMap(g, classes)
    return pm, pm.weights()


def uniform_top(g: TileGrid) -> tuple[PriorityMap, WeightMatrix]:
    """Every tile Top: the classification-off ablation."""
    pm = PriorityMap(g, np.full(g.n_tiles, int(Priority.TOP), dtype=np.int8))
    return pm, pm.weights()


def priority_order(pm: PriorityMap) -> list[int]:
    """Tiles by descending priority, ties by ascending index."""
    # stable sort on the negated class keeps index order within a class
    return [int(t) for t in np.argsort(-pm.classes.astype(np.int64), kind="stable")]
