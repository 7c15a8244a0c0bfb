"""Image exclusion rules: empty OCR, repeated characters, low text coverage."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .corpus import OcrLine
from .geometry import ImageDims, area


class FilterReason(enum.Enum):
    EMPTY_OCR = "empty-ocr"
    REPETITION = "repetition"
    LOW_COVERAGE = "low-coverage"


@dataclass(frozen=True)
class FilterParams:
    repetition_len: int = 3
    coverage_threshold: float = 0.03

    def __post_init__(self) -> None:
        if self.repetition_len < 2:
            raise ValueError("repetition_len must be >= 2")
        if not 0.0 < self.coverage_threshold < 1.0:
            raise ValueError("coverage_threshold must lie strictly between 0 and 1")


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reasons: tuple[FilterReason, ...]


def detect_repetition(text: str, run_length: int = 3) -> bool:
    """True iff some non-whitespace character repeats run_length+ times in a row."""
    if run_length < 2:
        raise ValueError("run_length must be >= 2")
    run_char, run_len = None, 0
    for ch in text:
        if ch.isspace():
            run_char, run_len = None, 0
            continue
        run_len = run_len + 1 if ch == run_char else 1
        run_char = ch
        if run_len >= run_length:
            return True
    return False


def check_image(lines: Sequence[OcrLine], dims: ImageDims, params: FilterParams) -> FilterVerdict:
    """Apply the exclusion rules to one image's OCR lines.

    An empty line set yields the empty-ocr reason alone; repetition and
    coverage are only evaluated when lines exist. Line order never matters.
    """
    if not lines:
        return FilterVerdict(keep=False, reasons=(FilterReason.EMPTY_OCR,))
    reasons = []
    if any(detect_repetition(line.text, params.repetition_len) for line in lines):
        reasons.append(FilterReason.REPETITION)
    coverage = sum(area(line.bbox) for line in lines) / (dims.width * dims.height)
    if coverage < params.coverage_threshold:
        reasons.append(FilterReason.LOW_COVERAGE)
    return FilterVerdict(keep=not reasons, reasons=tuple(reasons))
