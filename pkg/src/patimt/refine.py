"""Refinement for hard layouts: recover OCR lines the block dialect missed.

Layout engines on dense documents drop stray lines; any line insufficiently
covered by every block (whatever its kind) is re-merged spatially and appended,
then the whole list is re-sorted into reading position. Original blocks pass
through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .corpus import ImageAnnotation, LayoutBlock, OcrLine
from .geometry import overlap_ratio
from .merge import MergeParams, spatial_merge
from .scenario import Difficulty, difficulty


class MissingBlocksError(ValueError):
    """A hard-scenario image arrived without layout blocks."""


@dataclass(frozen=True)
class RefineParams:
    coverage_tau: float = 0.5
    merge: MergeParams = field(default_factory=MergeParams)

    def __post_init__(self) -> None:
        if not 0.0 < self.coverage_tau <= 1.0:
            raise ValueError("coverage_tau must lie in (0, 1]")


def find_omitted(
    lines: Sequence[OcrLine], blocks: Sequence[LayoutBlock], tau: float = 0.5
) -> list[OcrLine]:
    """Lines whose best overlap ratio against every block stays below tau.

    With no blocks at all, every line is omitted. Input order is preserved.
    """
    omitted = []
    for line in lines:
        best = max((overlap_ratio(line.bbox, b.bbox) for b in blocks), default=0.0)
        if best < tau:
            omitted.append(line)
    return omitted


def refine_blocks(
    lines: Sequence[OcrLine],
    blocks: Sequence[LayoutBlock],
    params: RefineParams | None = None,
) -> list[LayoutBlock]:
    """Append spatially merged omitted lines and re-sort by (y_min, x_min).

    Returns:
        Original blocks (verbatim) plus recovered text blocks, in reading
        position; the sort is stable, so equal keys keep their relative order.
    """
    params = params or RefineParams()
    omitted = find_omitted(lines, blocks, params.coverage_tau)
    recovered = spatial_merge(omitted, params.merge)
    return sorted(list(blocks) + recovered, key=lambda b: (b.bbox.y1, b.bbox.x1))


def adaptive_process(
    annotation: ImageAnnotation,
    blocks: Sequence[LayoutBlock] | None = None,
    params: RefineParams | None = None,
) -> list[LayoutBlock]:
    """Dispatch on scenario difficulty: refine hard layouts, merge easy ones.

    Raises:
        MissingBlocksError: hard scenario without layout blocks.
        ValueError: annotation has not been classified yet.
    """
    params = params or RefineParams()
    if annotation.scenario is None:
        raise ValueError(f"image {annotation.image_id!r} has no scenario; classify first")
    if difficulty(annotation.scenario) is Difficulty.HARD:
        if blocks is None:
            raise MissingBlocksError(
                f"image {annotation.image_id!r}: hard scenario requires layout blocks"
            )
        return refine_blocks(annotation.lines, blocks, params)
    return spatial_merge(annotation.lines, params.merge)
