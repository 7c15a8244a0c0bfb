"""Parsing of model prediction outputs.

Model output is adversarial input. Salvage mode (the default) recovers what it
can and records a diagnostic per deviation instead of raising; strict mode
raises PredictionParseError on the first deviation or when nothing parses.
Recovered boxes are converted to absolute pixels.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from typing import Callable

from .corpus import ParseError, _decode, _records, _req_str
from .geometry import BBox, CoordSpace, ImageDims, convert
from .instruct import SEPARATOR, BoxDialect, TaskType


class PredictionParseError(ValueError):
    """Strict-mode parsing rejected a model output."""


class ParseStrictness(enum.Enum):
    SALVAGE = "salvage"
    STRICT = "strict"


@dataclass(frozen=True)
class ParsedPrediction:
    text: str | None
    translation: str
    bbox: BBox | None


@dataclass
class ParseResult:
    predictions: list[ParsedPrediction]
    diagnostics: list[str]


_NUMBER = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")

_TAIL_PATTERNS = (
    re.compile(r"Box\(\[(?P<body>[^\[\]]*)\]\)\s*$"),
    re.compile(r"<box>\s*\[\[?(?P<body>[^\[\]]*)\]?\]\s*</box>\s*$"),
    re.compile(r"<\|det\|>\s*\[(?P<body>[^\[\]]*)\]\s*<\|/det\|>\s*$"),
    re.compile(r"\[(?P<body>[^\[\]]*)\]\s*$"),
)

_TRAILING_COMMA = re.compile(r",\s*([\]}])")
_FENCE_OPEN = re.compile(r"^```[A-Za-z]*\s*")
_FENCE_CLOSE = re.compile(r"\s*```\s*$")
_JSON_PREFIX = re.compile(r"^json\s*(?=[\[{])", re.IGNORECASE)


def _parse_float(token: str) -> float | None:
    try:
        value = float(token)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _check_dims(dialect: BoxDialect, dims: ImageDims | None) -> None:
    if dialect is not BoxDialect.ABSOLUTE and dims is None:
        raise ValueError(f"dims are required to convert {dialect.value} boxes to pixels")


def _to_absolute(
    coords: list[float], dialect: BoxDialect, dims: ImageDims | None
) -> tuple[BBox | None, str | None]:
    try:
        box = BBox(*coords, dialect.space)
    except ValueError as exc:
        return None, f"box {coords} rejected: {exc}"
    return convert(box, CoordSpace.ABSOLUTE, dims), None


def _extract_tail_box(
    segment: str, dialect: BoxDialect, dims: ImageDims | None
) -> tuple[BBox | None, str, str | None]:
    """Split a trailing box off a translation segment.

    Returns (box, remaining text, diagnostic). A quad that matches a box
    surface form but has out-of-range values is dropped with a diagnostic;
    anything that is not a four-number quad stays part of the text.
    """
    for pattern in _TAIL_PATTERNS:
        m = pattern.search(segment)
        if not m:
            continue
        values = [_parse_float(tok) for tok in m.group("body").split(",")]
        if len(values) != 4 or any(v is None for v in values):
            continue
        remainder = segment[: m.start()].rstrip()
        box, diag = _to_absolute(values, dialect, dims)
        return box, remainder, diag
    return None, segment, None


def _finish(
    predictions: list[ParsedPrediction], diagnostics: list[str], strictness: ParseStrictness
) -> ParseResult:
    if strictness is ParseStrictness.STRICT:
        if diagnostics:
            raise PredictionParseError(diagnostics[0])
        if not predictions:
            raise PredictionParseError("no predictions found in output")
    return ParseResult(predictions=predictions, diagnostics=diagnostics)


def parse_plain(
    output: str,
    dialect: BoxDialect,
    dims: ImageDims | None,
    strictness: ParseStrictness = ParseStrictness.SALVAGE,
) -> ParseResult:
    """Parse "text <|translation|> translation [box]" lines."""
    _check_dims(dialect, dims)
    predictions: list[ParsedPrediction] = []
    diagnostics: list[str] = []
    for n, line in enumerate(output.splitlines(), start=1):
        if not line.strip():
            continue
        head, sep, tail = line.partition(SEPARATOR)
        if not sep:
            diagnostics.append(f"line {n}: missing {SEPARATOR!r} separator")
            continue
        box, translation, diag = _extract_tail_box(tail.strip(), dialect, dims)
        if diag:
            diagnostics.append(f"line {n}: {diag}")
        predictions.append(
            ParsedPrediction(text=head.strip() or None, translation=translation.strip(), bbox=box)
        )
    return _finish(predictions, diagnostics, strictness)


# ---------------------------------------------------------------------------
# Structured outputs.
# ---------------------------------------------------------------------------


def _strip_wrappers(s: str) -> str:
    s = s.strip()
    if s.startswith("```"):
        s = _FENCE_OPEN.sub("", s)
        s = _FENCE_CLOSE.sub("", s).strip()
    return _JSON_PREFIX.sub("", s)


def _salvage_truncated_list(s: str) -> list:
    decoder = json.JSONDecoder()
    pos, items = 1, []
    while True:
        while pos < len(s) and s[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(s) or s[pos] == "]":
            break
        try:
            value, pos = decoder.raw_decode(s, pos)
        except ValueError:
            break
        items.append(value)
    return items


def _load_json(s: str) -> tuple[object, str | None]:
    """Progressively forgiving JSON loading; returns (value, diagnostic)."""
    try:
        return json.loads(s), None
    except (ValueError, RecursionError):
        pass
    repaired = _TRAILING_COMMA.sub(r"\1", s)
    if repaired != s:
        try:
            return json.loads(repaired), "repaired trailing comma(s)"
        except (ValueError, RecursionError):
            pass
    try:
        value, end = json.JSONDecoder().raw_decode(s)
        return value, "ignored trailing content after JSON value"
    except (ValueError, RecursionError):
        pass
    if s.startswith("["):
        items = _salvage_truncated_list(s)
        if items:
            return items, f"recovered {len(items)} item(s) from malformed list"
    return [], "unparseable structured output"


def _coerce_bbox(
    value: object, dialect: BoxDialect, dims: ImageDims | None
) -> tuple[BBox | None, str | None]:
    if value is None:
        return None, None
    if isinstance(value, list) and len(value) == 1 and isinstance(value[0], list):
        value = value[0]
    if isinstance(value, str):
        tokens = _NUMBER.findall(value)
        if len(tokens) != 4:
            return None, f"bbox_2d string {value!r} does not contain 4 numbers"
        return _to_absolute([float(t) for t in tokens], dialect, dims)
    if isinstance(value, list):
        coords = [
            float(v)
            for v in value
            if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
        ]
        if len(coords) != 4 or len(value) != 4:
            return None, f"bbox_2d {value!r} is not a list of 4 finite numbers"
        return _to_absolute(coords, dialect, dims)
    return None, f"bbox_2d {value!r} has an unsupported type"


def parse_structured(
    output: str,
    dialect: BoxDialect,
    dims: ImageDims | None,
    strictness: ParseStrictness = ParseStrictness.SALVAGE,
) -> ParseResult:
    """Parse JSON outputs: an object or list of objects with bbox_2d /
    text_content / translation keys, tolerating code fences, a leading "json"
    tag, trailing commas, and truncated lists."""
    _check_dims(dialect, dims)
    predictions: list[ParsedPrediction] = []
    diagnostics: list[str] = []
    value, diag = _load_json(_strip_wrappers(output))
    if diag:
        diagnostics.append(diag)
    items = [value] if isinstance(value, dict) else value
    if not isinstance(items, list):
        diagnostics.append(f"expected a JSON object or list, got {type(value).__name__}")
        items = []
    for j, item in enumerate(items):
        if not isinstance(item, dict):
            diagnostics.append(f"item {j}: not a JSON object")
            continue
        translation = item.get("translation")
        if not isinstance(translation, str) or not translation:
            diagnostics.append(f"item {j}: missing or empty 'translation'")
            continue
        text = item.get("text_content")
        if text is not None and not isinstance(text, str):
            diagnostics.append(f"item {j}: ignoring non-string 'text_content'")
            text = None
        box, box_diag = _coerce_bbox(item.get("bbox_2d"), dialect, dims)
        if box_diag:
            diagnostics.append(f"item {j}: {box_diag}")
        predictions.append(ParsedPrediction(text=text, translation=translation, bbox=box))
    return _finish(predictions, diagnostics, strictness)


def parser_for(fmt_value: str) -> Callable[..., ParseResult]:
    """Map an instance-format value to its parser."""
    return parse_structured if fmt_value == "structured" else parse_plain


# ---------------------------------------------------------------------------
# Predictions interchange file.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictionRecord:
    image_id: str
    task: TaskType
    output: str


def serialize_predictions_file(records: list[PredictionRecord] | tuple) -> bytes:
    rows = [
        json.dumps(
            {"image_id": r.image_id, "task": r.task.value, "output": r.output},
            ensure_ascii=False,
            separators=(",", ":"),
        )
        for r in records
    ]
    return ("\n".join(rows) + "\n" if rows else "").encode("utf-8")


def parse_predictions_file(data: bytes | str) -> list[PredictionRecord]:
    records = []
    for idx, obj in _records(_decode(data)):
        image_id = _req_str(obj, "image_id", idx)
        try:
            task = TaskType(obj.get("task"))
        except ValueError:
            raise ParseError(f"record {idx}: field 'task' must be region or full-image") from None
        output = obj.get("output")
        if not isinstance(output, str):
            raise ParseError(f"record {idx}: field 'output' must be a string")
        records.append(PredictionRecord(image_id=image_id, task=task, output=output))
    return records
