"""Corpus data model, NDJSON interchange, and corpus statistics."""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, Mapping

from .geometry import BBox, CoordSpace, ImageDims

if TYPE_CHECKING:
    from .scenario import ScenarioLabel

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """An interchange document violated its schema."""


class BlockKind(enum.Enum):
    TEXT = "text"
    IMAGE = "image"
    TABLE = "table"
    OTHER = "other"


@dataclass(frozen=True)
class OcrLine:
    """Single engine-detected text line."""

    text: str
    bbox: BBox
    confidence: float | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("line text must be non-empty after trimming")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence!r} outside [0, 1]")


@dataclass(frozen=True)
class LayoutBlock:
    """Layout region; text blocks carry text and optionally a translation."""

    kind: BlockKind
    bbox: BBox
    text: str | None = None
    translation: str | None = None

    def __post_init__(self) -> None:
        if self.kind is BlockKind.TEXT and (self.text is None or not self.text.strip()):
            raise ValueError("text blocks must carry non-empty text")


@dataclass
class ImageAnnotation:
    """Everything known about one image; scenario/lang_pair fill in downstream."""

    image_id: str
    dims: ImageDims
    lines: list[OcrLine] = field(default_factory=list)
    blocks: list[LayoutBlock] = field(default_factory=list)
    scenario: "ScenarioLabel | None" = None
    lang_pair: str | None = None


@dataclass
class LinesRecord:
    image_id: str
    dims: ImageDims
    lines: list[OcrLine]


@dataclass
class BlocksRecord:
    image_id: str
    dims: ImageDims
    blocks: list[LayoutBlock]


# ---------------------------------------------------------------------------
# Word counting.
# ---------------------------------------------------------------------------

_CJK_RANGES = (
    (0x4E00, 0x9FFF),
    (0x3400, 0x4DBF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
)


def is_cjk_char(ch: str) -> bool:
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _CJK_RANGES)


def count_words(text: str) -> int:
    """Count words: per whitespace token, one per CJK codepoint plus one per
    maximal non-CJK run. Pure Latin tokens therefore count one each."""
    total = 0
    for token in text.split():
        in_run = False
        for ch in token:
            if is_cjk_char(ch):
                total += 1
                in_run = False
            elif not in_run:
                total += 1
                in_run = True
    return total


# ---------------------------------------------------------------------------
# Statistics.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusStats:
    images: int = 0
    ocr_boxes: int = 0
    boxes: int = 0
    src_words: int = 0
    tgt_words: int = 0

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(
            images=self.images + other.images,
            ocr_boxes=self.ocr_boxes + other.ocr_boxes,
            boxes=self.boxes + other.boxes,
            src_words=self.src_words + other.src_words,
            tgt_words=self.tgt_words + other.tgt_words,
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "images": self.images,
            "ocr_boxes": self.ocr_boxes,
            "boxes": self.boxes,
            "src_words": self.src_words,
            "tgt_words": self.tgt_words,
        }


def corpus_stats(annotations: Iterable[ImageAnnotation]) -> CorpusStats:
    """Corpus totals: image, OCR box, and text-block counts plus word counts.

    Missing translations count zero target words and are logged, never fatal.
    """
    images = ocr_boxes = boxes = src_words = tgt_words = 0
    for ann in annotations:
        images += 1
        ocr_boxes += len(ann.lines)
        missing = 0
        for block in ann.blocks:
            if block.kind is not BlockKind.TEXT:
                continue
            boxes += 1
            src_words += count_words(block.text or "")
            if block.translation is None:
                missing += 1
            else:
                tgt_words += count_words(block.translation)
        if missing:
            logger.warning(
                "image %s: %d text block(s) missing translation; counted 0 target words",
                ann.image_id,
                missing,
            )
    return CorpusStats(images, ocr_boxes, boxes, src_words, tgt_words)


# ---------------------------------------------------------------------------
# Interchange parsing. Errors always name the record and offending field.
# ---------------------------------------------------------------------------


def _decode(data: bytes | str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"interchange file is not valid UTF-8: {exc}") from exc
    return data


def _records(text: str) -> Iterable[tuple[int, dict]]:
    for idx, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"record {idx}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"record {idx}: expected a JSON object")
        yield idx, obj


def _is_num(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _req_str(obj: dict, key: str, idx: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise ParseError(f"record {idx}: field '{key}' must be a non-empty string")
    return value


def _req_dim(obj: dict, key: str, idx: int) -> int:
    value = obj.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ParseError(f"record {idx}: field '{key}' must be a positive integer")
    return value


def _req_bbox(item: dict, idx: int, where: str) -> BBox:
    value = item.get("bbox")
    if not isinstance(value, list) or len(value) != 4 or not all(_is_num(v) for v in value):
        raise ParseError(f"record {idx}: {where}: field 'bbox' must be a list of 4 finite numbers")
    return BBox(*(float(v) for v in value), CoordSpace.ABSOLUTE)


def parse_lines_file(data: bytes | str) -> list[LinesRecord]:
    """Parse the line-level interchange; bbox values are absolute pixels."""
    records: list[LinesRecord] = []
    seen: set[str] = set()
    for idx, obj in _records(_decode(data)):
        image_id = _req_str(obj, "image_id", idx)
        if image_id in seen:
            raise ParseError(f"record {idx}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        dims = ImageDims(_req_dim(obj, "width", idx), _req_dim(obj, "height", idx))
        items = obj.get("lines")
        if not isinstance(items, list):
            raise ParseError(f"record {idx}: field 'lines' must be a list")
        lines = []
        for j, item in enumerate(items):
            if not isinstance(item, dict):
                raise ParseError(f"record {idx}: line {j}: expected a JSON object")
            where = f"line {j}"
            text = item.get("text")
            if not isinstance(text, str) or not text.strip():
                raise ParseError(f"record {idx}: {where}: field 'text' must be non-empty")
            bbox = _req_bbox(item, idx, where)
            conf = item.get("confidence")
            if conf is not None:
                if not _is_num(conf) or not 0.0 <= conf <= 1.0:
                    raise ParseError(f"record {idx}: {where}: field 'confidence' outside [0, 1]")
                conf = float(conf)
            lines.append(OcrLine(text=text, bbox=bbox, confidence=conf))
        records.append(LinesRecord(image_id=image_id, dims=dims, lines=lines))
    return records


def parse_blocks_file(data: bytes | str) -> list[BlocksRecord]:
    """Parse the block-level interchange; unknown kinds map to 'other'."""
    records: list[BlocksRecord] = []
    seen: set[str] = set()
    for idx, obj in _records(_decode(data)):
        image_id = _req_str(obj, "image_id", idx)
        if image_id in seen:
            raise ParseError(f"record {idx}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        dims = ImageDims(_req_dim(obj, "width", idx), _req_dim(obj, "height", idx))
        items = obj.get("blocks")
        if not isinstance(items, list):
            raise ParseError(f"record {idx}: field 'blocks' must be a list")
        blocks = []
        for j, item in enumerate(items):
            if not isinstance(item, dict):
                raise ParseError(f"record {idx}: block {j}: expected a JSON object")
            where = f"block {j}"
            kind_str = item.get("kind")
            if not isinstance(kind_str, str):
                raise ParseError(f"record {idx}: {where}: field 'kind' must be a string")
            try:
                kind = BlockKind(kind_str)
            except ValueError:
                logger.warning("record %d: unknown block kind %r mapped to 'other'", idx, kind_str)
                kind = BlockKind.OTHER
            bbox = _req_bbox(item, idx, where)
            text = item.get("text")
            if text is not None and (not isinstance(text, str) or not text.strip()):
                raise ParseError(f"record {idx}: {where}: field 'text' must be non-empty when present")
            if kind is BlockKind.TEXT and text is None:
                raise ParseError(f"record {idx}: {where}: text blocks require field 'text'")
            translation = item.get("translation")
            if translation is not None and (not isinstance(translation, str) or not translation.strip()):
                raise ParseError(
                    f"record {idx}: {where}: field 'translation' must be non-empty when present"
                )
            blocks.append(LayoutBlock(kind=kind, bbox=bbox, text=text, translation=translation))
        records.append(BlocksRecord(image_id=image_id, dims=dims, blocks=blocks))
    return records


# ---------------------------------------------------------------------------
# Serialization. Canonical form: compact NDJSON, UTF-8, integral coordinates
# rendered as integers; serialize(parse(x)) is a fixed point.
# ---------------------------------------------------------------------------


def _num(value: float) -> int | float:
    return int(value) if float(value).is_integer() else float(value)


def bbox_to_list(bbox: BBox) -> list[int | float]:
    """Plain JSON-ready coordinate list; integral values render as integers."""
    return [_num(v) for v in bbox.as_tuple()]


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def serialize_lines_file(records: Iterable[LinesRecord]) -> bytes:
    rows = []
    for r in records:
        lines = []
        for line in r.lines:
            item: dict[str, Any] = {"text": line.text, "bbox": bbox_to_list(line.bbox)}
            if line.confidence is not None:
                item["confidence"] = line.confidence
            lines.append(item)
        rows.append(
            _dumps(
                {
                    "image_id": r.image_id,
                    "width": r.dims.width,
                    "height": r.dims.height,
                    "lines": lines,
                }
            )
        )
    return ("\n".join(rows) + "\n" if rows else "").encode("utf-8")


def serialize_blocks_file(records: Iterable[BlocksRecord]) -> bytes:
    rows = []
    for r in records:
        blocks = []
        for block in r.blocks:
            item: dict[str, Any] = {"kind": block.kind.value, "bbox": bbox_to_list(block.bbox)}
            if block.text is not None:
                item["text"] = block.text
            if block.translation is not None:
                item["translation"] = block.translation
            blocks.append(item)
        rows.append(
            _dumps(
                {
                    "image_id": r.image_id,
                    "width": r.dims.width,
                    "height": r.dims.height,
                    "blocks": blocks,
                }
            )
        )
    return ("\n".join(rows) + "\n" if rows else "").encode("utf-8")


def assemble_annotations(
    lines_records: Iterable[LinesRecord] | None = None,
    blocks_records: Iterable[BlocksRecord] | None = None,
    scenarios: Mapping[str, "ScenarioLabel"] | None = None,
    lang_pair: str | None = None,
) -> list[ImageAnnotation]:
    """Outer-join interchange records by image_id into full annotations."""
    anns: dict[str, ImageAnnotation] = {}
    for r in lines_records or []:
        anns[r.image_id] = ImageAnnotation(
            image_id=r.image_id, dims=r.dims, lines=list(r.lines), lang_pair=lang_pair
        )
    for r in blocks_records or []:
        if r.image_id in anns:
            ann = anns[r.image_id]
            if ann.dims != r.dims:
                raise ParseError(f"image {r.image_id!r}: dims mismatch between interchange files")
            ann.blocks = list(r.blocks)
        else:
            anns[r.image_id] = ImageAnnotation(
                image_id=r.image_id, dims=r.dims, blocks=list(r.blocks), lang_pair=lang_pair
            )
    if scenarios:
        for image_id, label in scenarios.items():
            if image_id in anns:
                anns[image_id].scenario = label
    return list(anns.values())
