"""Instruction-instance construction: questions, answers, gold records.

One region instance per translated text block plus one full-image instance per
image. Questions come from a configurable pool; boxes render in the target
model's dialect; answers follow either the plain-text or the structured format.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
import random
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping, Protocol, Sequence

import requests

from .corpus import (
    BlockKind,
    ImageAnnotation,
    LayoutBlock,
    ParseError,
    _decode,
    _is_num,
    _records,
    _req_str,
    bbox_to_list,
)
from .geometry import BBox, CoordSpace, ImageDims, convert
from .scenario import ScenarioLabel

logger = logging.getLogger(__name__)

SEPARATOR = "<|translation|>"

_LANG_NAMES = {"EN": "English", "ZH": "Chinese"}


class TaskType(enum.Enum):
    REGION = "region"
    FULL_IMAGE = "full-image"


class InstanceFormat(enum.Enum):
    PLAIN_TEXT = "plain-text"
    STRUCTURED = "structured"


class BoxDialect(enum.Enum):
    PLAIN_UNIT = "plain-unit"
    BOXED_1000 = "boxed-1000"
    DET_999 = "det-999"
    ABSOLUTE = "absolute"

    @property
    def space(self) -> CoordSpace:
        return _DIALECT_SPACES[self]

    @property
    def quantum(self) -> float:
        """Smallest representable step in the rendered form."""
        return 0.01 if self is BoxDialect.PLAIN_UNIT else 1.0


_DIALECT_SPACES = {
    BoxDialect.PLAIN_UNIT: CoordSpace.UNIT,
    BoxDialect.BOXED_1000: CoordSpace.THOUSAND,
    BoxDialect.DET_999: CoordSpace.NINE99,
    BoxDialect.ABSOLUTE: CoordSpace.ABSOLUTE,
}


def _round_half_away(value: float) -> int:
    if value >= 0:
        return int(math.floor(value + 0.5))
    return int(math.ceil(value - 0.5))


def render_box(b: BBox, dialect: BoxDialect, dims: ImageDims | None = None) -> str:
    """Render a box in the dialect's surface form.

    Plain-unit boxes print exactly two decimal places; integer dialects round
    half away from zero.
    """
    cb = convert(b, dialect.space, dims)
    if dialect is BoxDialect.PLAIN_UNIT:
        return "[" + ", ".join(f"{v:.2f}" for v in cb.as_tuple()) + "]"
    body = ", ".join(str(_round_half_away(v)) for v in cb.as_tuple())
    if dialect is BoxDialect.BOXED_1000:
        return f"<box>[[{body}]]</box>"
    if dialect is BoxDialect.DET_999:
        return f"<|det|>[{body}]<|/det|>"
    return f"[{body}]"


def box_surface(b: BBox, dialect: BoxDialect, dims: ImageDims | None = None) -> str:
    """Box form used inside questions and plain-text answers.

    Bracket-only dialects get a Box(...) wrapper; the tagged dialects are
    already self-delimiting.
    """
    rendered = render_box(b, dialect, dims)
    if dialect in (BoxDialect.PLAIN_UNIT, BoxDialect.ABSOLUTE):
        return f"Box({rendered})"
    return rendered


def _structured_coords(b: BBox, dialect: BoxDialect, dims: ImageDims | None) -> list[int | float]:
    cb = convert(b, dialect.space, dims)
    if dialect is BoxDialect.PLAIN_UNIT:
        return [round(v, 2) for v in cb.as_tuple()]
    return [_round_half_away(v) for v in cb.as_tuple()]


# ---------------------------------------------------------------------------
# Question pool.
# ---------------------------------------------------------------------------


@dataclass
class QuestionPool:
    region: list[str]
    full_image: list[str]
    format_instructions: dict[tuple[str, str], str]


def load_question_pool(path: str | None = None) -> QuestionPool:
    """Load question templates; defaults to the packaged pool.

    Region templates must contain a {box} placeholder; {src_lang} and
    {tgt_lang} are available to every template.
    """
    if path is None:
        raw = resources.files("patimt").joinpath("data/question_pool.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    doc = json.loads(raw)
    region = list(doc["region"])
    full_image = list(doc["full_image"])
    if not region or not full_image:
        raise ValueError("question pool must provide region and full_image templates")
    if any("{box}" not in q for q in region):
        raise ValueError("every region template needs a {box} placeholder")
    instructions = {
        (task, fmt): text
        for task, by_fmt in doc["format_instructions"].items()
        for fmt, text in by_fmt.items()
    }
    return QuestionPool(region=region, full_image=full_image, format_instructions=instructions)


def _lang_names(lang_pair: str) -> tuple[str, str]:
    src, sep, tgt = lang_pair.partition("-")
    if not sep or not src or not tgt:
        raise ValueError(f"malformed lang_pair {lang_pair!r}; expected e.g. 'EN-ZH'")
    return _LANG_NAMES.get(src, src), _LANG_NAMES.get(tgt, tgt)


# ---------------------------------------------------------------------------
# Instances.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoldRecord:
    bbox: BBox
    text: str
    translation: str


@dataclass
class InstructionInstance:
    image_id: str
    task: TaskType
    question: str
    answer: str
    gold: list[GoldRecord]
    dims: ImageDims | None = None
    scenario: ScenarioLabel | None = None
    lang_pair: str | None = None


def _translated_text_blocks(annotation: ImageAnnotation) -> list[LayoutBlock]:
    usable = []
    skipped = 0
    for block in annotation.blocks:
        if block.kind is not BlockKind.TEXT:
            continue
        if block.translation is None:
            skipped += 1
            continue
        usable.append(block)
    if skipped:
        logger.warning(
            "image %s: skipped %d text block(s) without translation", annotation.image_id, skipped
        )
    return usable


def _plain_line(block: LayoutBlock, dialect: BoxDialect, dims: ImageDims, with_box: bool) -> str:
    line = f"{block.text} {SEPARATOR} {block.translation}"
    if with_box:
        line += " " + box_surface(block.bbox, dialect, dims)
    return line


def _structured_obj(block: LayoutBlock, dialect: BoxDialect, dims: ImageDims) -> dict:
    return {
        "bbox_2d": _structured_coords(block.bbox, dialect, dims),
        "text_content": block.text,
        "translation": block.translation,
    }


def build_region_instances(
    annotation: ImageAnnotation,
    dialect: BoxDialect,
    fmt: InstanceFormat,
    pool: QuestionPool | None = None,
    rng_seed: int = 0,
) -> list[InstructionInstance]:
    """One instance per translated text block; blocks without translation are
    skipped with a warning. A fixed seed reproduces identical instances."""
    if annotation.lang_pair is None:
        raise ValueError(f"image {annotation.image_id!r} has no lang_pair")
    pool = pool or load_question_pool()
    src_lang, tgt_lang = _lang_names(annotation.lang_pair)
    rng = random.Random(f"{rng_seed}:{annotation.image_id}:region")
    suffix = pool.format_instructions[(TaskType.REGION.value, fmt.value)]
    instances = []
    for block in _translated_text_blocks(annotation):
        template = rng.choice(pool.region)
        question = (
            template.format(
                box=box_surface(block.bbox, dialect, annotation.dims),
                src_lang=src_lang,
                tgt_lang=tgt_lang,
            )
            + " "
            + suffix
        )
        if fmt is InstanceFormat.PLAIN_TEXT:
            answer = _plain_line(block, dialect, annotation.dims, with_box=False)
        else:
            answer = json.dumps(_structured_obj(block, dialect, annotation.dims), ensure_ascii=False)
        instances.append(
            InstructionInstance(
                image_id=annotation.image_id,
                task=TaskType.REGION,
                question=question,
                answer=answer,
                gold=[GoldRecord(bbox=block.bbox, text=block.text, translation=block.translation)],
                dims=annotation.dims,
                scenario=annotation.scenario,
                lang_pair=annotation.lang_pair,
            )
        )
    return instances


def build_fullimage_instance(
    annotation: ImageAnnotation,
    dialect: BoxDialect,
    fmt: InstanceFormat,
    pool: QuestionPool | None = None,
    rng_seed: int = 0,
) -> InstructionInstance:
    """Single whole-image instance covering every translated text block.

    Raises:
        ValueError: no translated text blocks exist.
    """
    if annotation.lang_pair is None:
        raise ValueError(f"image {annotation.image_id!r} has no lang_pair")
    pool = pool or load_question_pool()
    blocks = _translated_text_blocks(annotation)
    if not blocks:
        raise ValueError(f"image {annotation.image_id!r} has no translated text blocks")
    src_lang, tgt_lang = _lang_names(annotation.lang_pair)
    rng = random.Random(f"{rng_seed}:{annotation.image_id}:full-image")
    template = rng.choice(pool.full_image)
    question = (
        template.format(src_lang=src_lang, tgt_lang=tgt_lang)
        + " "
        + pool.format_instructions[(TaskType.FULL_IMAGE.value, fmt.value)]
    )
    if fmt is InstanceFormat.PLAIN_TEXT:
        answer = "\n".join(
            _plain_line(b, dialect, annotation.dims, with_box=True) for b in blocks
        )
    else:
        answer = json.dumps(
            [_structured_obj(b, dialect, annotation.dims) for b in blocks], ensure_ascii=False
        )
    return InstructionInstance(
        image_id=annotation.image_id,
        task=TaskType.FULL_IMAGE,
        question=question,
        answer=answer,
        gold=[GoldRecord(bbox=b.bbox, text=b.text, translation=b.translation) for b in blocks],
        dims=annotation.dims,
        scenario=annotation.scenario,
        lang_pair=annotation.lang_pair,
    )


# ---------------------------------------------------------------------------
# Instances interchange.
# ---------------------------------------------------------------------------


def serialize_instances_file(instances: Sequence[InstructionInstance]) -> bytes:
    rows = []
    for inst in instances:
        obj: dict = {
            "image_id": inst.image_id,
            "task": inst.task.value,
            "question": inst.question,
            "answer": inst.answer,
            "gold": [
                {"bbox": bbox_to_list(g.bbox), "text": g.text, "translation": g.translation}
                for g in inst.gold
            ],
        }
        if inst.dims is not None:
            obj["dims"] = [inst.dims.width, inst.dims.height]
        if inst.scenario is not None:
            obj["scenario"] = inst.scenario.value
        if inst.lang_pair is not None:
            obj["lang_pair"] = inst.lang_pair
        rows.append(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
    return ("\n".join(rows) + "\n" if rows else "").encode("utf-8")


def parse_instances_file(data: bytes | str) -> list[InstructionInstance]:
    """Parse the instance interchange; gold boxes are absolute pixels."""
    instances = []
    for idx, obj in _records(_decode(data)):
        image_id = _req_str(obj, "image_id", idx)
        try:
            task = TaskType(obj.get("task"))
        except ValueError:
            raise ParseError(f"record {idx}: field 'task' must be region or full-image") from None
        question = _req_str(obj, "question", idx)
        answer = _req_str(obj, "answer", idx)
        gold_items = obj.get("gold")
        if not isinstance(gold_items, list):
            raise ParseError(f"record {idx}: field 'gold' must be a list")
        gold = []
        for j, item in enumerate(gold_items):
            where = f"gold {j}"
            if not isinstance(item, dict):
                raise ParseError(f"record {idx}: {where}: expected a JSON object")
            bbox = item.get("bbox")
            if not isinstance(bbox, list) or len(bbox) != 4 or not all(_is_num(v) for v in bbox):
                raise ParseError(
                    f"record {idx}: {where}: field 'bbox' must be a list of 4 finite numbers"
                )
            text = item.get("text")
            translation = item.get("translation")
            if not isinstance(text, str) or not text:
                raise ParseError(f"record {idx}: {where}: field 'text' must be a non-empty string")
            if not isinstance(translation, str) or not translation:
                raise ParseError(
                    f"record {idx}: {where}: field 'translation' must be a non-empty string"
                )
            gold.append(
                GoldRecord(
                    bbox=BBox(*(float(v) for v in bbox), CoordSpace.ABSOLUTE),
                    text=text,
                    translation=translation,
                )
            )
        dims_val = obj.get("dims")
        dims = None
        if dims_val is not None:
            if (
                not isinstance(dims_val, list)
                or len(dims_val) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in dims_val)
            ):
                raise ParseError(f"record {idx}: field 'dims' must be [width, height] integers")
            dims = ImageDims(dims_val[0], dims_val[1])
        scenario_val = obj.get("scenario")
        scenario = None
        if scenario_val is not None:
            try:
                scenario = ScenarioLabel(scenario_val)
            except ValueError:
                raise ParseError(f"record {idx}: unknown scenario {scenario_val!r}") from None
        lang_pair = obj.get("lang_pair")
        if lang_pair is not None and (not isinstance(lang_pair, str) or not lang_pair):
            raise ParseError(f"record {idx}: field 'lang_pair' must be a non-empty string")
        instances.append(
            InstructionInstance(
                image_id=image_id,
                task=task,
                question=question,
                answer=answer,
                gold=gold,
                dims=dims,
                scenario=scenario,
                lang_pair=lang_pair,
            )
        )
    return instances


# ---------------------------------------------------------------------------
# Translator clients.
# ---------------------------------------------------------------------------

TOKEN_ENV_VAR = "PATIMT_TRANSLATOR_TOKEN"


class TranslationError(RuntimeError):
    """A translator client could not produce a translation."""


class Translator(Protocol):
    def translate(self, text: str, lang_pair: str) -> str: ...


class DictionaryTranslator:
    """Lookup-table translator; handy as a deterministic stub."""

    def __init__(self, mapping: Mapping[str, str]):
        self._mapping = dict(mapping)

    def translate(self, text: str, lang_pair: str) -> str:
        try:
            return self._mapping[text]
        except KeyError:
            raise TranslationError(f"no dictionary entry for {text!r}") from None


class HttpTranslator:
    """POSTs {"text", "lang_pair"} to an endpoint; expects {"translation"}.

    The bearer token comes from the PATIMT_TRANSLATOR_TOKEN environment
    variable unless passed explicitly.
    """

    def __init__(self, endpoint: str, token: str | None = None, session=None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        self.timeout = timeout
        self._session = session or requests.Session()

    def translate(self, text: str, lang_pair: str) -> str:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = self._session.post(
                self.endpoint,
                json={"text": text, "lang_pair": lang_pair},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise TranslationError(f"translator request failed: {exc}") from exc
        translation = payload.get("translation") if isinstance(payload, dict) else None
        if not isinstance(translation, str) or not translation:
            raise TranslationError("translator response missing 'translation'")
        return translation


def translate_blocks(
    blocks: Sequence[LayoutBlock], translator: Translator, lang_pair: str
) -> list[LayoutBlock]:
    """Fill missing translations on text blocks; failures leave blocks as-is.

    Already-translated blocks pass through untouched, so the call is
    idempotent.
    """
    out = []
    for i, block in enumerate(blocks):
        if block.kind is not BlockKind.TEXT or block.translation is not None or block.text is None:
            out.append(block)
            continue
        try:
            out.append(replace(block, translation=translator.translate(block.text, lang_pair)))
        except Exception as exc:
            logger.warning("block %d (%r): translation failed: %s", i, block.text[:40], exc)
            out.append(block)
    return out
