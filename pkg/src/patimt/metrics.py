"""Scoring: corpus BLEU, box matching, grounding IoU, and report aggregation.

BLEU pools clipped n-gram counts over the whole corpus before taking the
geometric mean (not an average of sentence scores). Grounding IoU pools
matched-IoU mass over gold boxes, so images with more text weigh more.
"""

from __future__ import annotations

import enum
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import is_cjk_char
from .geometry import BBox, iou
from .instruct import BoxDialect, GoldRecord, InstanceFormat, InstructionInstance, TaskType
from .predparse import (
    ParsedPrediction,
    ParseStrictness,
    PredictionRecord,
    parse_plain,
    parse_structured,
)
from .scenario import eval_category

logger = logging.getLogger(__name__)

_LATIN_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str, mode: str) -> list[str]:
    """Tokenize for BLEU. latin: word/punctuation split; cjk: every CJK
    codepoint is its own token, anything else falls back to the latin rule."""
    if mode == "latin":
        return _LATIN_TOKEN.findall(text)
    if mode != "cjk":
        raise ValueError(f"unknown tokenizer mode {mode!r}")
    tokens: list[str] = []
    pending: list[str] = []
    for ch in text:
        if is_cjk_char(ch):
            if pending:
                tokens.extend(_LATIN_TOKEN.findall("".join(pending)))
                pending.clear()
            tokens.append(ch)
        else:
            pending.append(ch)
    if pending:
        tokens.extend(_LATIN_TOKEN.findall("".join(pending)))
    return tokens


def mode_for_lang_pair(lang_pair: str | None) -> str:
    """Tokenizer mode follows the translation's target language."""
    if lang_pair:
        tgt = lang_pair.partition("-")[2]
        if tgt.upper().startswith("ZH"):
            return "cjk"
    return "latin"


# ---------------------------------------------------------------------------
# Corpus BLEU.
# ---------------------------------------------------------------------------


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
    smooth: bool = False,
) -> float:
    """Corpus-level BLEU in percent, one reference per hypothesis.

    With smooth=True a zero match count at order n is replaced by
    1 / (2^k * total_n) where k counts the zero orders seen so far.
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references must pair up one to one")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += len(hyp) - n + 1
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    smooth_factor = 1.0
    for n in range(max_n):
        if totals[n] == 0:
            return 0.0
        if matches[n] == 0:
            if not smooth:
                return 0.0
            smooth_factor *= 2.0
            precision = 1.0 / (smooth_factor * totals[n])
        else:
            precision = matches[n] / totals[n]
        log_sum += math.log(precision)
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / max_n)


# ---------------------------------------------------------------------------
# Box matching.
# ---------------------------------------------------------------------------


class MatchStrategy(enum.Enum):
    OPTIMAL = "optimal"
    GREEDY = "greedy"


def iou_matrix(pred_boxes: Sequence[BBox], gold_boxes: Sequence[BBox]) -> np.ndarray:
    scores = np.zeros((len(pred_boxes), len(gold_boxes)))
    for i, p in enumerate(pred_boxes):
        for j, g in enumerate(gold_boxes):
            scores[i, j] = iou(p, g)
    return scores


def assign_pairs(scores: np.ndarray, strategy: MatchStrategy) -> list[tuple[int, int]]:
    """One-to-one assignment on an IoU matrix; zero-overlap pairs are never
    matched. Greedy repeatedly takes the global maximum (earliest index pair
    on ties), which can be beaten by the optimal assignment."""
    if scores.size == 0:
        return []
    if strategy is MatchStrategy.OPTIMAL:
        rows, cols = linear_sum_assignment(scores, maximize=True)
        return [(int(i), int(j)) for i, j in zip(rows, cols) if scores[i, j] > 0.0]
    remaining = scores.astype(float).copy()
    pairs = []
    while True:
        i, j = divmod(int(np.argmax(remaining)), remaining.shape[1])
        if remaining[i, j] <= 0.0:
            break
        pairs.append((i, j))
        remaining[i, :] = -1.0
        remaining[:, j] = -1.0
    return sorted(pairs)


def match_boxes(
    pred_boxes: Sequence[BBox],
    gold_boxes: Sequence[BBox],
    strategy: MatchStrategy = MatchStrategy.OPTIMAL,
) -> list[tuple[int, int, float]]:
    scores = iou_matrix(pred_boxes, gold_boxes)
    return [(i, j, float(scores[i, j])) for i, j in assign_pairs(scores, strategy)]


def grounding_iou(
    pred_boxes: Sequence[BBox],
    gold_boxes: Sequence[BBox],
    strategy: MatchStrategy = MatchStrategy.OPTIMAL,
) -> float:
    """Matched IoU mass divided by the gold box count: unmatched gold boxes
    pull the score down, spurious predictions do not add anything."""
    if not gold_boxes:
        return 0.0
    return sum(v for _, _, v in match_boxes(pred_boxes, gold_boxes, strategy)) / len(gold_boxes)


# ---------------------------------------------------------------------------
# Evaluation over instances + predictions.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoryReport:
    bleu: float
    iou: float | None
    n_images: int


@dataclass
class EvalReport:
    per_category: dict[str, CategoryReport]
    overall_bleu: float
    overall_iou: float | None

    def as_dict(self) -> dict:
        return {
            "per_category": {
                name: {"bleu": rep.bleu, "iou": rep.iou, "n_images": rep.n_images}
                for name, rep in self.per_category.items()
            },
            "overall": {"bleu": self.overall_bleu, "iou": self.overall_iou},
        }


@dataclass
class _Bucket:
    hyps: list[list[str]] = field(default_factory=list)
    refs: list[list[str]] = field(default_factory=list)
    iou_num: float = 0.0
    iou_den: int = 0
    images: set[str] = field(default_factory=set)


def _fullimage_pairs(
    preds: list[ParsedPrediction], gold: list[GoldRecord], strategy: MatchStrategy
) -> tuple[list[tuple[str, str]], float]:
    """Pair predicted and gold translations for one image.

    Box matching drives the pairing; every unmatched gold gets an empty
    hypothesis, unmatched predictions are dropped. Only when no box matched at
    all does the pairing fall back to reading order.
    """
    boxed = [k for k, p in enumerate(preds) if p.bbox is not None]
    scores = iou_matrix([preds[k].bbox for k in boxed], [g.bbox for g in gold])
    matched = assign_pairs(scores, strategy)
    pairs: list[tuple[str, str]] = []
    if matched:
        taken = {gj for _, gj in matched}
        for bi, gj in matched:
            pairs.append((preds[boxed[bi]].translation, gold[gj].translation))
        pairs.extend(("", g.translation) for gj, g in enumerate(gold) if gj not in taken)
        return pairs, float(sum(scores[bi, gj] for bi, gj in matched))
    if preds:
        for k, g in enumerate(gold):
            pairs.append((preds[k].translation if k < len(preds) else "", g.translation))
        return pairs, 0.0
    return [("", g.translation) for g in gold], 0.0


def evaluate(
    instances: Sequence[InstructionInstance],
    predictions: Sequence[PredictionRecord],
    dialect: BoxDialect,
    fmt: InstanceFormat,
    strategy: MatchStrategy = MatchStrategy.OPTIMAL,
    smooth: bool = False,
) -> EvalReport:
    """Score predictions against instances; joins by (image_id, task) with
    file order breaking ties within a key.

    Raises:
        ValueError: instances and predictions do not pair up exactly.
    """
    pred_map: dict[tuple[str, TaskType], list[PredictionRecord]] = {}
    for record in predictions:
        pred_map.setdefault((record.image_id, record.task), []).append(record)
    cursor = {key: 0 for key in pred_map}
    parser = parse_structured if fmt is InstanceFormat.STRUCTURED else parse_plain
    buckets: dict[str, _Bucket] = {}
    for inst in instances:
        key = (inst.image_id, inst.task)
        queue = pred_map.get(key)
        if queue is None or cursor[key] >= len(queue):
            raise ValueError(
                f"prediction count mismatch for image {inst.image_id!r} ({inst.task.value})"
            )
        record = queue[cursor[key]]
        cursor[key] += 1
        if not inst.gold:
            logger.warning("image %s: instance has no gold records; skipped", inst.image_id)
            continue
        result = parser(record.output, dialect, inst.dims, ParseStrictness.SALVAGE)
        mode = mode_for_lang_pair(inst.lang_pair)
        name = eval_category(inst.scenario).value if inst.scenario else "uncategorized"
        bucket = buckets.setdefault(name, _Bucket())
        bucket.images.add(inst.image_id)
        if inst.task is TaskType.REGION:
            hyp = result.predictions[0].translation if result.predictions else ""
            bucket.hyps.append(tokenize(hyp, mode))
            bucket.refs.append(tokenize(inst.gold[0].translation, mode))
        else:
            pairs, iou_num = _fullimage_pairs(result.predictions, inst.gold, strategy)
            for hyp, ref in pairs:
                bucket.hyps.append(tokenize(hyp, mode))
                bucket.refs.append(tokenize(ref, mode))
            bucket.iou_num += iou_num
            bucket.iou_den += len(inst.gold)
    leftovers = [key for key, lst in pred_map.items() if cursor[key] != len(lst)]
    if leftovers:
        image_id, task = leftovers[0]
        raise ValueError(
            f"prediction count mismatch for image {image_id!r} ({task.value}): unused predictions"
        )
    per_category = {
        name: CategoryReport(
            bleu=corpus_bleu(bucket.hyps, bucket.refs, smooth=smooth),
            iou=bucket.iou_num / bucket.iou_den if bucket.iou_den else None,
            n_images=len(bucket.images),
        )
        for name, bucket in sorted(buckets.items())
    }
    bleus = [rep.bleu for rep in per_category.values()]
    ious = [rep.iou for rep in per_category.values() if rep.iou is not None]
    return EvalReport(
        per_category=per_category,
        overall_bleu=sum(bleus) / len(bleus) if bleus else 0.0,
        overall_iou=sum(ious) / len(ious) if ious else None,
    )
