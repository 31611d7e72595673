"""Morton-coded quadrant arithmetic and point/rectangle primitives.

One coding convention is used everywhere: cell coordinates (cx, cy) count
from the MBR's lower-left corner, cx bits sit in the even positions of the
code and cy bits in the odd positions, so the child order at every level is
SW=0, SE=1, NW=2, NE=3. A point on an internal cell border belongs to the
cell with the larger coordinate; points on or beyond the MBR's max edges
clamp inward. All functions are pure and the array variants are vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Interleaved codes must stay within 62 bits so everything fits a signed int64.
MAX_LEVEL = 31


@dataclass(frozen=True)
class Point:
    x: float
    y: float


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, closed on all edges."""

    x_lo: float
    y_lo: float
    x_hi: float
    y_hi: float

    def __post_init__(self) -> None:
        if not np.isfinite([self.x_lo, self.y_lo, self.x_hi, self.y_hi]).all():
            raise ValueError("rect coordinates must be finite")
        if self.x_lo > self.x_hi or self.y_lo > self.y_hi:
            raise ValueError(f"inverted rect: {self}")

    @classmethod
    def square(cls, side: float, x_lo: float = 0.0, y_lo: float = 0.0) -> "Rect":
        return cls(x_lo, y_lo, x_lo + side, y_lo + side)

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def height(self) -> float:
        return self.y_hi - self.y_lo

    def center(self) -> Point:
        return Point((self.x_lo + self.x_hi) / 2.0, (self.y_lo + self.y_hi) / 2.0)

    def contains(self, x: float, y: float) -> bool:
        return self.x_lo <= x <= self.x_hi and self.y_lo <= y <= self.y_hi


@dataclass(frozen=True)
class MortonCell:
    """A quadtree quadrant identified by (level, Morton code)."""

    level: int
    code: int

    def __post_init__(self) -> None:
        if not 0 <= self.level <= MAX_LEVEL:
            raise ValueError(f"level {self.level} outside [0, {MAX_LEVEL}]")
        if not 0 <= self.code < 4**self.level:
            raise ValueError(f"code {self.code} outside level {self.level}")


def spread_bits(v):
    """Spread the low 32 bits of ``v`` so bit i lands at position 2i."""
    v = v & 0xFFFFFFFF
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    v = (v | (v << 1)) & 0x5555555555555555
    return v


def compact_bits(v):
    """Inverse of spread_bits: gather the even-position bits of ``v``."""
    v = v & 0x5555555555555555
    v = (v | (v >> 1)) & 0x3333333333333333
    v = (v | (v >> 2)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF0000FFFF
    v = (v | (v >> 16)) & 0x00000000FFFFFFFF
    return v


def interleave(cx, cy):
    return spread_bits(cx) | (spread_bits(cy) << 1)


def deinterleave(code):
    return compact_bits(code), compact_bits(code >> 1)


def cell_coords(x, y, rect: Rect, level: int):
    """Grid coordinates of the level-``level`` cell containing each point.

    The normalized offset (x - x_lo) / width is computed once and scaled by
    the exact power of two 2**level, so the coordinates of one point at
    different levels are consistent bit for bit (the deeper cell is always a
    descendant of the shallower one). Out-of-rect points clamp to the
    boundary cells.
    """
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level {level} outside [0, {MAX_LEVEL}]")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = 1 << level
    if rect.width > 0:
        tx = (x - rect.x_lo) / rect.width
    else:
        tx = np.zeros_like(x)
    if rect.height > 0:
        ty = (y - rect.y_lo) / rect.height
    else:
        ty = np.zeros_like(y)
    cx = np.clip(np.floor(tx * n), 0, n - 1).astype(np.int64)
    cy = np.clip(np.floor(ty * n), 0, n - 1).astype(np.int64)
    return cx, cy


def encode_points(x, y, rect: Rect, level: int) -> np.ndarray:
    """Morton codes at ``level`` for arrays of coordinates."""
    cx, cy = cell_coords(x, y, rect, level)
    return interleave(cx, cy)


def morton_encode(p: Point, mbr: Rect, level: int) -> MortonCell:
    code = encode_points(np.array([p.x]), np.array([p.y]), mbr, level)[0]
    return MortonCell(level, int(code))


def morton_parent(code, from_level: int, to_level: int):
    """Code of the ancestor quadrant ``to_level`` levels up the tree."""
    if to_level > from_level:
        raise ValueError(f"to_level {to_level} above from_level {from_level}")
    return code >> (2 * (from_level - to_level))


def leaf_order_keys(levels, codes, l_deep: int):
    """First l_deep-level code covered by each quadrant.

    Keys are comparable across levels and order leaves exactly as a
    depth-first SW,SE,NW,NE traversal of the tree would.
    """
    levels = np.asarray(levels, dtype=np.int64)
    if levels.size and levels.max() > l_deep:
        raise ValueError("quadrant level below l_deep")
    return np.left_shift(np.asarray(codes, dtype=np.int64), 2 * (l_deep - levels))


def leaf_order_key(cell: MortonCell, l_deep: int) -> int:
    return int(leaf_order_keys([cell.level], [cell.code], l_deep)[0])


def cell_bounds_arrays(levels, codes, mbr: Rect):
    """Bounds of many cells at once: (x_lo, y_lo, x_hi, y_hi) arrays."""
    levels = np.asarray(levels, dtype=np.int32)
    codes = np.asarray(codes, dtype=np.int64)
    cx, cy = deinterleave(codes)
    # cx / 2**level is exact, so shared borders of sibling cells coincide.
    fx_lo = np.ldexp(cx.astype(np.float64), -levels)
    fy_lo = np.ldexp(cy.astype(np.float64), -levels)
    fx_hi = np.ldexp((cx + 1).astype(np.float64), -levels)
    fy_hi = np.ldexp((cy + 1).astype(np.float64), -levels)
    return (
        mbr.x_lo + fx_lo * mbr.width,
        mbr.y_lo + fy_lo * mbr.height,
        mbr.x_lo + fx_hi * mbr.width,
        mbr.y_lo + fy_hi * mbr.height,
    )


def cell_bounds(cell: MortonCell, mbr: Rect) -> Rect:
    x_lo, y_lo, x_hi, y_hi = cell_bounds_arrays([cell.level], [cell.code], mbr)
    return Rect(float(x_lo[0]), float(y_lo[0]), float(x_hi[0]), float(y_hi[0]))


def min_dist2_point_cells(qx, qy, x_lo, y_lo, x_hi, y_hi):
    """Squared distance from points to rectangles (0 inside), elementwise."""
    dx = np.maximum(np.maximum(x_lo - qx, qx - x_hi), 0.0)
    dy = np.maximum(np.maximum(y_lo - qy, qy - y_hi), 0.0)
    return dx * dx + dy * dy


def min_dist_point_rect(p: Point, r: Rect) -> float:
    d2 = min_dist2_point_cells(
        np.float64(p.x), np.float64(p.y), r.x_lo, r.y_lo, r.x_hi, r.y_hi
    )
    return float(np.sqrt(d2))


def squared_dist_matrix(qx, qy, ox, oy) -> np.ndarray:
    """(n_queries, n_objects) squared distances.

    This is the one distance expression shared by the engine and the
    brute-force reference, so both produce bitwise-identical values for the
    same pair of points.
    """
    dx = np.subtract.outer(np.asarray(qx, np.float64), np.asarray(ox, np.float64))
    dy = np.subtract.outer(np.asarray(qy, np.float64), np.asarray(oy, np.float64))
    return dx * dx + dy * dy


def count_outside(x, y, rect: Rect) -> int:
    """How many points fall outside the rect (they clamp when encoded)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = (x < rect.x_lo) | (x > rect.x_hi) | (y < rect.y_lo) | (y > rect.y_hi)
    return int(out.sum())
