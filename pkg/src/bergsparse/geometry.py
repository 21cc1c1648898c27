"""Intervals, Carleson boxes, Whitney rectangles and shifted dyadic grids.

Coordinates on the three grids are exact: every grid interval is
``2**level * [index + o, index + 1 + o)`` with offset ``o = (-1)**level * shift``
and ``shift`` one of ``0, 1/3, -1/3``, materialised as :class:`fractions.Fraction`
values. The sign alternation is what makes each shifted family nested.
Floating point only enters when a caller converts a region for quadrature.

All intervals are half-open ``[left, left + length)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Iterator

__all__ = [
    "GRID_SHIFTS",
    "CarlesonBox",
    "CoverResult",
    "DyadicInterval",
    "HalfPlanePoint",
    "Interval",
    "Rectangle",
    "ShiftedDyadicGrid",
    "TruncatedBoxCollection",
    "WhitneyRectangle",
    "clip_to_halfplane",
    "cover_interval",
    "dilate",
    "enclosing_interval",
    "enumerate_boxes",
    "overlap_count",
    "strict_descendant_union",
    "tent",
    "upper_box",
    "whitney_decompose",
]

# grid id -> shift; ids are 1-based
GRID_SHIFTS: dict[int, Fraction] = {1: Fraction(0), 2: Fraction(1, 3), 3: Fraction(-1, 3)}


def _pow2(j: int) -> Fraction:
    return Fraction(2) ** j


def _offset3(grid: int, level: int) -> int:
    """Three times the level offset ``(-1)**level * shift``; always an integer."""
    s3 = int(3 * GRID_SHIFTS[grid])
    return s3 if level % 2 == 0 else -s3


@dataclass(frozen=True)
class Interval:
    """Half-open interval ``[left, left + length)``."""

    left: Real
    length: Real

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"interval length must be positive, got {self.length!r}")

    @property
    def right(self) -> Real:
        return self.left + self.length

    @property
    def center(self) -> Real:
        return self.left + self.length / 2

    def contains(self, x: Real) -> bool:
        return self.left <= x < self.right

    def contains_interval(self, other: "Interval") -> bool:
        return self.left <= other.left and other.right <= self.right

    def intersects(self, other: "Interval") -> bool:
        return self.left < other.right and other.left < self.right

    def as_float(self) -> tuple[float, float]:
        return float(self.left), float(self.right)

    @classmethod
    def from_endpoints(cls, left: Real, right: Real) -> "Interval":
        return cls(left, right - left)


@dataclass(frozen=True)
class HalfPlanePoint:
    """A point ``x + iy`` of the upper half-plane."""

    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"point must satisfy y > 0, got y={self.y!r}")

    @property
    def z(self) -> complex:
        return complex(float(self.x), float(self.y))

    @classmethod
    def from_complex(cls, z: complex) -> "HalfPlanePoint":
        return cls(z.real, z.imag)


@dataclass(frozen=True)
class Rectangle:
    """Product of two half-open intervals. ``y`` may extend below zero."""

    x: Interval
    y: Interval

    def contains(self, px: Real, py: Real) -> bool:
        return self.x.contains(px) and self.y.contains(py)

    def as_float(self) -> tuple[float, float, float, float]:
        return (*self.x.as_float(), *self.y.as_float())


@dataclass(frozen=True)
class CarlesonBox:
    """The box ``base x (0, len(base))``."""

    base: Interval

    @property
    def height(self) -> Real:
        return self.base.length

    @property
    def rect(self) -> Rectangle:
        return Rectangle(self.base, Interval(0 * self.base.length, self.base.length))

    def contains(self, px: Real, py: Real) -> bool:
        return self.base.contains(px) and 0 < py < self.base.length


def tent(apex: HalfPlanePoint) -> CarlesonBox:
    """Carleson tent of ``apex``: the box over the interval of length ``y`` centred at ``x``.

    The tent is written with closed sides ``|x - x_a| <= y_a / 2``; as a set of
    positive area it coincides with the half-open box used here.
    """
    return CarlesonBox(Interval(apex.x - apex.y / 2, apex.y))


@dataclass(frozen=True)
class WhitneyRectangle:
    generation: int
    index: int
    xrange: Interval
    yrange: Interval

    @property
    def rect(self) -> Rectangle:
        return Rectangle(self.xrange, self.yrange)


def whitney_decompose(base: Interval, max_generation: int) -> list[WhitneyRectangle]:
    """Upper Whitney rectangles of generations ``1..max_generation`` for ``base``.

    Generation ``i`` splits ``base`` into ``2**(i-1)`` equal pieces, each lifted to
    the strip ``[len/2**i, len/2**(i-1))``.
    """
    if max_generation < 1:
        raise ValueError("max_generation must be >= 1")
    out = []
    ell = base.length
    for i in range(1, max_generation + 1):
        pieces = 2 ** (i - 1)
        width = ell / pieces
        yr = Interval(ell / 2**i, ell / 2**i)
        for j in range(1, pieces + 1):
            out.append(WhitneyRectangle(i, j, Interval(base.left + width * (j - 1), width), yr))
    return out


def upper_box(base: Interval) -> WhitneyRectangle:
    return whitney_decompose(base, 1)[0]


def dilate(rect: Rectangle, factor: Real) -> Rectangle:
    """Scale both sides of ``rect`` by ``factor`` about its centre. No clipping."""
    if not 1 < factor < 3:
        raise ValueError("dilation factor must lie in (1, 3)")

    def grow(iv: Interval) -> Interval:
        new_len = iv.length * factor
        return Interval(iv.center - new_len / 2, new_len)

    return Rectangle(grow(rect.x), grow(rect.y))


def clip_to_halfplane(rect: Rectangle) -> Rectangle:
    """Intersect with ``y > 0``; the lower edge 0 is then excluded, not included."""
    lo, hi = rect.y.left, rect.y.right
    if hi <= 0:
        raise ValueError("rectangle lies entirely below the real axis")
    if lo >= 0:
        return rect
    return Rectangle(rect.x, Interval(0 * lo, hi))


def enclosing_interval(z: HalfPlanePoint, zeta: HalfPlanePoint) -> Interval:
    """Interval centred at the mean abscissa with half-length ``|conj(zeta) - z|``.

    Both points lie in the Carleson box of the result.
    """
    r = abs(zeta.z.conjugate() - z.z)
    mid = (zeta.x + z.x) / 2
    return Interval(mid - r, 2 * r)


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """Interval ``2**level * [index + o, index + 1 + o)``, ``o = (-1)**level * shift``."""

    grid: int
    level: int
    index: int

    @property
    def shift(self) -> Fraction:
        return GRID_SHIFTS[self.grid]

    @property
    def offset(self) -> Fraction:
        return Fraction(_offset3(self.grid, self.level), 3)

    @property
    def interval(self) -> Interval:
        s = _pow2(self.level)
        return Interval(s * (self.index + self.offset), s)

    @property
    def length(self) -> Fraction:
        return _pow2(self.level)

    @property
    def parent(self) -> "DyadicInterval":
        # 2(m' + o_{j+1}) <= m + o_j with o_{j+1} = -o_j  =>  m' = floor((m + 3 o_j) / 2)
        m = (self.index + _offset3(self.grid, self.level)) // 2
        return DyadicInterval(self.grid, self.level + 1, m)

    @property
    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        m0 = 2 * self.index + _offset3(self.grid, self.level)
        return (DyadicInterval(self.grid, self.level - 1, m0),
                DyadicInterval(self.grid, self.level - 1, m0 + 1))

    @property
    def box(self) -> CarlesonBox:
        return CarlesonBox(self.interval)

    @property
    def up(self) -> WhitneyRectangle:
        return upper_box(self.interval)


@dataclass(frozen=True)
class ShiftedDyadicGrid:
    """One of the three grids; ``grid`` is 1, 2 or 3 for shifts 0, +1/3, -1/3."""

    grid: int = 1

    def __post_init__(self):
        if self.grid not in GRID_SHIFTS:
            raise ValueError(f"grid id must be one of {sorted(GRID_SHIFTS)}")

    @property
    def shift(self) -> Fraction:
        return GRID_SHIFTS[self.grid]

    @classmethod
    def from_shift(cls, shift: Real) -> "ShiftedDyadicGrid":
        for k, t in GRID_SHIFTS.items():
            if Fraction(shift).limit_denominator(1000) == t:
                return cls(k)
        raise ValueError(f"shift must be one of 0, 1/3, -1/3, got {shift!r}")

    def cell(self, level: int, index: int) -> DyadicInterval:
        return DyadicInterval(self.grid, level, index)

    def interval(self, level: int, index: int) -> Interval:
        return self.cell(level, index).interval

    def locate(self, x: Real, level: int) -> DyadicInterval:
        """The level-``level`` cell containing ``x``."""
        m = math.floor(Fraction(x) / _pow2(level) - Fraction(_offset3(self.grid, level), 3))
        return self.cell(level, m)


@dataclass(frozen=True)
class CoverResult:
    grid: int
    cell: DyadicInterval
    ratio: float
    escalated: bool

    @property
    def interval(self) -> Interval:
        return self.cell.interval


def _scaled(x: Fraction, level: int) -> tuple[int, int]:
    # 3 * x / 2**level as an unreduced integer pair
    n, d = 3 * x.numerator, x.denominator
    return (n, d << level) if level >= 0 else (n << -level, d)


def _pow2_times(j: int, d: int, n: int) -> tuple[int, int]:
    # (2**j * d, n) scaled to integers, for comparing 2**j with n / d
    return (d << j, n) if j >= 0 else (d, n << -j)


def _fits(a: Fraction, b: Fraction, level: int, grid: int) -> DyadicInterval | None:
    # exact integer test of [a, b) inside a level-`level` cell of `grid`; works with
    # the values 3 * x / 2^level so the 1/3 shift stays integral
    s3 = _offset3(grid, level)
    an, ad = _scaled(a, level)
    bn, bd = _scaled(b, level)
    m = (an - s3 * ad) // (3 * ad)
    right = 3 * (m + 1) + s3
    if bn <= right * bd:
        return DyadicInterval(grid, level, m)
    return None


def cover_interval(iv: Interval) -> CoverResult:
    """Smallest grid interval containing ``iv`` with length at most ``3 * len(iv)``.

    Scales are searched upward from the first dyadic length ``>= len(iv)``; at each
    scale the lowest grid id wins. The three-grid argument guarantees success at the
    first scale exceeding ``3 * len / 2``; one further scale is tried (and flagged)
    should that ever fail.
    """
    a, b = Fraction(iv.left), Fraction(iv.right)
    ell = b - a
    n, d = ell.numerator, ell.denominator
    j = n.bit_length() - d.bit_length() - 1
    while True:
        lhs, rhs = _pow2_times(j, d, n)
        if lhs >= rhs:
            break
        j += 1
    j_star = j
    while True:
        lhs, rhs = _pow2_times(j_star + 1, d, 3 * n)
        if lhs > rhs:
            break
        j_star += 1
    for level in range(j, j_star + 2):
        for grid in (1, 2, 3):
            cell = _fits(a, b, level, grid)
            if cell is not None:
                return CoverResult(grid, cell, float(cell.length / ell), level > j_star)
    raise RuntimeError(f"no grid interval covers {iv}")  # unreachable: some grid always fits


@dataclass(frozen=True)
class TruncatedBoxCollection:
    """Grid boxes with level in ``[level_min, level_max]`` whose base meets ``window``."""

    grid: int
    level_min: int
    level_max: int
    window: Interval

    def __post_init__(self):
        if self.grid not in GRID_SHIFTS:
            raise ValueError(f"grid id must be one of {sorted(GRID_SHIFTS)}")

    def cells_at(self, level: int) -> list[DyadicInterval]:
        g = ShiftedDyadicGrid(self.grid)
        w = self.window
        first = g.locate(w.left, level).index
        out = []
        m = first
        while True:
            c = g.cell(level, m)
            if c.interval.left >= w.right:
                break
            out.append(c)
            m += 1
        return out

    def cells(self) -> Iterator[DyadicInterval]:
        for level in range(self.level_max, self.level_min - 1, -1):
            yield from self.cells_at(level)

    def widened(self, factor: int = 2) -> "TruncatedBoxCollection":
        """Same grid with the spatial window scaled about its centre and one more level on top."""
        w = self.window
        new = Interval(w.center - w.length * factor / 2, w.length * factor)
        return TruncatedBoxCollection(self.grid, self.level_min, self.level_max + 1, new)


def enumerate_boxes(collection: TruncatedBoxCollection) -> list[CarlesonBox]:
    """Boxes in level-descending, left-ascending order."""
    if collection.level_min > collection.level_max:
        return []
    return [c.box for c in collection.cells()]


def strict_descendant_union(cell: DyadicInterval) -> Rectangle:
    """Union of all grid boxes strictly inside ``Q_cell`` as a single rectangle.

    Every strictly smaller grid box inside ``Q_I`` sits inside one of the two child
    boxes, and the children tile ``I x (0, len/2)``.
    """
    left, right = (c.interval for c in cell.children)
    if left.right != right.left or left.length != right.length:
        raise AssertionError("children do not tile the parent")
    base = Interval(left.left, left.length + right.length)
    if base != cell.interval:
        raise AssertionError("children do not tile the parent")
    return Rectangle(base, Interval(Fraction(0), left.length))


def overlap_count(px: float, py: float, collection: TruncatedBoxCollection,
                  factor: float = 1.5) -> int:
    """How many dilated upper rectangles ``factor * Q_I^up`` contain the point."""
    n = 0
    for c in collection.cells():
        r = dilate(upper_box(c.interval).rect, factor)
        x0, x1, y0, y1 = r.as_float()
        if x0 <= px < x1 and y0 <= py < y1:
            n += 1
    return n
