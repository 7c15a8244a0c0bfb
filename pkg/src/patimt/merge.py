"""Greedy spatial merge of OCR lines into reading-order text blocks.

Grouping is sequential and order-sensitive by design: a group's bounding
extent, expanded by threshold multiples of the group's mean member height,
absorbs the first ungrouped box it overlaps, one box per sweep, until no box
qualifies; then the next group opens. Each finished group is then merged in
reading order: repeatedly take the highest candidate row and consume its
leftmost box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .corpus import BlockKind, LayoutBlock, OcrLine
from .geometry import BBox, CoordSpace, union_box


@dataclass(frozen=True)
class MergeParams:
    x_ths: float = 1.0
    y_ths: float = 0.5
    row_tolerance: float = 0.5
    joiner: str = " "

    def __post_init__(self) -> None:
        if self.x_ths < 0 or self.y_ths < 0:
            raise ValueError("x_ths and y_ths must be non-negative")
        if self.row_tolerance < 0:
            raise ValueError("row_tolerance must be non-negative")


@dataclass
class WorkingBox:
    """Mutable working representation of one line; group 0 means ungrouped."""

    text: str
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: float
    y_center: float
    space: CoordSpace = CoordSpace.ABSOLUTE
    group: int = 0

    @classmethod
    def from_line(cls, line: OcrLine) -> "WorkingBox":
        box = line.bbox
        return cls(
            text=line.text,
            x_min=box.x1,
            x_max=box.x2,
            y_min=box.y1,
            y_max=box.y2,
            height=box.height,
            y_center=box.y_center,
            space=box.space,
        )

    def bbox(self) -> BBox:
        return BBox(self.x_min, self.y_min, self.x_max, self.y_max, self.space)


@dataclass
class MergeGroup:
    """One merged group: members in assignment order, reading-order text."""

    members: list[WorkingBox] = field(default_factory=list)
    text: str = ""
    bbox: BBox | None = None


def group_boxes(boxes: Sequence[WorkingBox], params: MergeParams) -> list[list[int]]:
    """Partition box indices into groups; also stamps 1-based group ids.

    Args:
        boxes: working boxes; their ``group`` fields are overwritten.
        params: expansion thresholds.

    Returns:
        Groups in creation order, members in assignment order.
    """
    for b in boxes:
        b.group = 0
    n = len(boxes)
    groups: list[list[int]] = []
    current: list[int] = []
    gid = 0
    assigned = 0
    while assigned < n:
        if not current:
            gid += 1
            seed = next(i for i in range(n) if boxes[i].group == 0)
            boxes[seed].group = gid
            current = [seed]
            assigned += 1
            continue
        members = [boxes[i] for i in current]
        h_mean = sum(m.height for m in members) / len(members)
        x_lo = min(m.x_min for m in members) - params.x_ths * h_mean
        x_hi = max(m.x_max for m in members) + params.x_ths * h_mean
        y_lo = min(m.y_min for m in members) - params.y_ths * h_mean
        y_hi = max(m.y_max for m in members) + params.y_ths * h_mean
        hit = None
        for i in range(n):
            b = boxes[i]
            if b.group:
                continue
            if b.x_min <= x_hi and b.x_max >= x_lo and b.y_min <= y_hi and b.y_max >= y_lo:
                hit = i
                break
        if hit is None:
            groups.append(current)
            current = []
        else:
            boxes[hit].group = gid
            current.append(hit)
            assigned += 1
    if current:
        groups.append(current)
    return groups


def order_and_merge(members: Sequence[WorkingBox], params: MergeParams) -> MergeGroup:
    """Merge one group's boxes in reading order.

    Repeatedly: take the topmost remaining box by y-center, gather the
    candidate row (boxes whose y-center sits within row_tolerance times that
    box's height), and consume the row's leftmost box.
    """
    if not members:
        raise ValueError("cannot merge an empty group")
    remaining = list(range(len(members)))
    parts: list[str] = []
    bbox: BBox | None = None
    while remaining:
        top = min(remaining, key=lambda i: members[i].y_center)
        tol = params.row_tolerance * members[top].height
        row = [i for i in remaining if abs(members[i].y_center - members[top].y_center) <= tol]
        pick = min(row, key=lambda i: members[i].x_min)
        parts.append(members[pick].text)
        box = members[pick].bbox()
        bbox = box if bbox is None else union_box(bbox, box)
        remaining.remove(pick)
    return MergeGroup(members=list(members), text=params.joiner.join(parts).strip(), bbox=bbox)


def spatial_merge(lines: Sequence[OcrLine], params: MergeParams | None = None) -> list[LayoutBlock]:
    """Merge OCR lines into text blocks: group, then order within each group.

    Returns:
        One text block per group, in group-creation order.
    """
    params = params or MergeParams()
    boxes = [WorkingBox.from_line(line) for line in lines]
    blocks = []
    for members in group_boxes(boxes, params):
        merged = order_and_merge([boxes[i] for i in members], params)
        blocks.append(LayoutBlock(kind=BlockKind.TEXT, bbox=merged.bbox, text=merged.text))
    return blocks
