"""Axis-aligned box geometry over tagged coordinate spaces."""

from __future__ import annotations

import enum
from dataclasses import dataclass

# Tolerated out-of-range overshoot for normalized spaces, as a fraction of the
# space's scale. Within it values clamp; beyond it construction fails.
RANGE_SLACK = 0.01


class SpaceMismatchError(ValueError):
    """An operation mixed boxes from different coordinate spaces."""


class CoordinateRangeError(ValueError):
    """A coordinate fell outside its space's range beyond the tolerated slack."""


class CoordSpace(enum.Enum):
    """Coordinate space a box's values are expressed in."""

    ABSOLUTE = "absolute-pixels"
    UNIT = "normalized-unit"
    THOUSAND = "normalized-1000"
    NINE99 = "normalized-999"

    @property
    def scale(self) -> float | None:
        """Upper bound of the nominal range, or None for absolute pixels."""
        return _SCALES[self]


_SCALES = {
    CoordSpace.ABSOLUTE: None,
    CoordSpace.UNIT: 1.0,
    CoordSpace.THOUSAND: 1000.0,
    CoordSpace.NINE99: 999.0,
}


@dataclass(frozen=True)
class ImageDims:
    """Pixel dimensions of an image."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dims must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, corner-ordered and clamped to its space on construction."""

    x1: float
    y1: float
    x2: float
    y2: float
    space: CoordSpace = CoordSpace.ABSOLUTE

    def __post_init__(self) -> None:
        x1, x2 = sorted((float(self.x1), float(self.x2)))
        y1, y2 = sorted((float(self.y1), float(self.y2)))
        scale = self.space.scale
        if scale is None:
            # Absolute pixels have no finite scale: clamp below at zero only.
            x1, y1, x2, y2 = (max(0.0, v) for v in (x1, y1, x2, y2))
        else:
            slack = RANGE_SLACK * scale
            for v in (x1, y1, x2, y2):
                if v < -slack or v > scale + slack:
                    raise CoordinateRangeError(
                        f"coordinate {v!r} outside {self.space.value} range [0, {scale}]"
                    )
            x1, y1, x2, y2 = (min(max(0.0, v), scale) for v in (x1, y1, x2, y2))
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "y2", y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def x_center(self) -> float:
        return (self.x1 + self.x2) / 2.0

    @property
    def y_center(self) -> float:
        return (self.y1 + self.y2) / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def _require_same_space(a: BBox, b: BBox) -> None:
    if a.space is not b.space:
        raise SpaceMismatchError(f"mixed coordinate spaces: {a.space.value} vs {b.space.value}")


def area(b: BBox) -> float:
    """Area of the box in its own space's units."""
    return b.width * b.height


def _intersection_area(a: BBox, b: BBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0.0 when the union has zero area.

    Args:
        a: first box.
        b: second box, same coordinate space as ``a``.

    Returns:
        Value in [0, 1].
    """
    _require_same_space(a, b)
    inter = _intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def overlap_ratio(inner: BBox, outer: BBox) -> float:
    """Fraction of ``inner``'s area covered by ``outer``; 0.0 for degenerate inner."""
    _require_same_space(inner, outer)
    denom = area(inner)
    if denom <= 0.0:
        return 0.0
    return _intersection_area(inner, outer) / denom


def union_box(a: BBox, b: BBox) -> BBox:
    """Smallest box covering both inputs."""
    _require_same_space(a, b)
    return BBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2), a.space)


def convert(b: BBox, target: CoordSpace, dims: ImageDims | None = None) -> BBox:
    """Re-express a box in another coordinate space.

    Args:
        b: source box.
        target: destination space.
        dims: image dimensions; required whenever absolute pixels are involved.

    Returns:
        Box tagged with ``target``; values clamped to the target range.
    """
    if target is b.space:
        return b
    if (b.space is CoordSpace.ABSOLUTE or target is CoordSpace.ABSOLUTE) and dims is None:
        raise ValueError("image dims required to convert to or from absolute pixels")

    src = b.space.scale
    if src is None:
        ux1, uy1 = b.x1 / dims.width, b.y1 / dims.height
        ux2, uy2 = b.x2 / dims.width, b.y2 / dims.height
    else:
        ux1, uy1, ux2, uy2 = b.x1 / src, b.y1 / src, b.x2 / src, b.y2 / src

    dst = target.scale
    if dst is None:
        coords = (ux1 * dims.width, uy1 * dims.height, ux2 * dims.width, uy2 * dims.height)
    else:
        coords = (ux1 * dst, uy1 * dst, ux2 * dst, uy2 * dst)
    return BBox(*coords, target)
