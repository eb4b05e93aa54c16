"""Premise bounds, hex-packed zone placement and coverage queries.

Zones are circular detection ranges. The hexagonal lattice only decides where
their centres go; with a radius above ``pitch / sqrt(3)`` neighbouring circles
overlap and the lattice interior is covered without holes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from dpe.errors import InvalidGeometry

ROW_FACTOR = math.sqrt(3) / 2


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidGeometry(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Zone:
    zone_id: str
    center: Point
    radius: float
    tags: frozenset[str] = frozenset()
    fvu_id: str = ""

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise InvalidGeometry(f"zone {self.zone_id}: radius must be > 0")
        object.__setattr__(self, "tags", frozenset(self.tags))
        if not self.fvu_id:
            object.__setattr__(self, "fvu_id", "fvu-" + self.zone_id)

    def covers(self, x: float, y: float) -> bool:
        # boundary counts as covered
        return math.hypot(x - self.center.x, y - self.center.y) <= self.radius


@dataclass(frozen=True)
class PremiseLayout:
    """A rectangular premise.

    Zone centres are in premise-local coordinates, ``[0, width] x [0, height]``.
    ``origin`` places the rectangle in the shared world frame so several
    premises can coexist in one simulation; query points are world points.
    """

    premise_id: str
    width: float
    height: float
    zones: tuple[Zone, ...] = ()
    console_id: str = ""
    origin: Point = field(default_factory=lambda: Point(0.0, 0.0))

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise InvalidGeometry(f"premise {self.premise_id}: width and height must be > 0")
        object.__setattr__(self, "zones", tuple(self.zones))
        if not self.console_id:
            object.__setattr__(self, "console_id", "cms-" + self.premise_id)
        ids: set[str] = set()
        fvus: set[str] = set()
        for zone in self.zones:
            if zone.zone_id in ids:
                raise InvalidGeometry(f"premise {self.premise_id}: duplicate zone_id {zone.zone_id}")
            if zone.fvu_id in fvus:
                raise InvalidGeometry(f"premise {self.premise_id}: duplicate fvu_id {zone.fvu_id}")
            ids.add(zone.zone_id)
            fvus.add(zone.fvu_id)
            c = zone.center
            if not (0 <= c.x <= self.width and 0 <= c.y <= self.height):
                raise InvalidGeometry(f"zone {zone.zone_id}: centre outside premise bounds")

    def to_local(self, p: Point) -> tuple[float, float]:
        return p.x - self.origin.x, p.y - self.origin.y

    def contains(self, p: Point) -> bool:
        x, y = self.to_local(p)
        return 0 <= x <= self.width and 0 <= y <= self.height

    def zone(self, zone_id: str) -> Zone:
        for z in self.zones:
            if z.zone_id == zone_id:
                return z
        raise KeyError(zone_id)

    def bounds(self) -> tuple[float, float, float, float]:
        """World-frame (xmin, ymin, xmax, ymax)."""
        ox, oy = self.origin
        return ox, oy, ox + self.width, oy + self.height


def hex_layout(
    width: float, height: float, pitch: float, radius: float, tags: Iterable[str] = ()
) -> list[Zone]:
    """Place zones on a hexagonal lattice anchored at the origin.

    Rows are ``pitch * sqrt(3) / 2`` apart and odd rows shift right by half a
    pitch. Centres outside ``[0, width] x [0, height]`` are dropped.
    """
    for name, value in (("width", width), ("height", height), ("pitch", pitch), ("radius", radius)):
        if not value > 0:
            raise InvalidGeometry(f"{name} must be > 0, got {value}")
    tags = frozenset(tags)
    zones = []
    row_step = pitch * ROW_FACTOR
    row = 0
    while row * row_step <= height:
        y = row * row_step
        offset = pitch / 2 if row % 2 else 0.0
        col = 0
        while offset + col * pitch <= width:
            zone_id = f"z{row}-{col}"
            zones.append(Zone(zone_id, Point(offset + col * pitch, y), radius, tags))
            col += 1
        row += 1
    return zones


def zones_covering(layout: PremiseLayout, p: Point) -> list[Zone]:
    x, y = layout.to_local(p)
    return sorted((z for z in layout.zones if z.covers(x, y)), key=lambda z: z.zone_id)


def grid_points(width: float, height: float, step: float) -> list[tuple[float, float]]:
    """Regular sample grid over ``[0, width] x [0, height]`` including both edges."""
    if not step > 0:
        raise InvalidGeometry(f"grid_step must be > 0, got {step}")
    nx = math.floor(width / step + 1e-9)
    ny = math.floor(height / step + 1e-9)
    xs = [i * step for i in range(nx + 1)]
    ys = [j * step for j in range(ny + 1)]
    # a far edge that is not a multiple of the step is still sampled
    if xs[-1] < width - 1e-9:
        xs.append(width)
    if ys[-1] < height - 1e-9:
        ys.append(height)
    return [(x, y) for y in ys for x in xs]


def coverage_fraction(layout: PremiseLayout, grid_step: float) -> float:
    points = grid_points(layout.width, layout.height, grid_step)
    if not layout.zones:
        return 0.0
    covered = sum(1 for x, y in points if any(z.covers(x, y) for z in layout.zones))
    return covered / len(points)


def coverage_gaps(layout: PremiseLayout, grid_step: float) -> dict[str, float | int | None]:
    """Diagnostics for uncovered grid points.

    ``max_gap`` is the largest distance from a grid point to the edge of its
    nearest zone (0 when every sample is covered, ``None`` with no zones).
    """
    points = grid_points(layout.width, layout.height, grid_step)
    if not layout.zones:
        return {"samples": len(points), "uncovered": len(points), "max_gap": None,
                "worst_x": None, "worst_y": None}
    uncovered = 0
    max_gap = 0.0
    worst: Sequence[float] | None = None
    for x, y in points:
        gap = min(math.hypot(x - z.center.x, y - z.center.y) - z.radius for z in layout.zones)
        if gap > 0:
            uncovered += 1
            if gap > max_gap:
                max_gap, worst = gap, (x, y)
    return {
        "samples": len(points),
        "uncovered": uncovered,
        "max_gap": max_gap,
        "worst_x": worst[0] if worst else None,
        "worst_y": worst[1] if worst else None,
    }
