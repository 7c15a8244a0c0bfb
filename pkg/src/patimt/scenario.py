"""Zero-shot scenario classification as pure vector math.

Encoders live elsewhere; this module consumes precomputed embeddings from the
embedding interchange file, ensembles per-label template vectors, and assigns
each image the superclass of its most cosine-similar label.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .corpus import ParseError


class DegenerateLabelError(ValueError):
    """A label's template vectors average to (numerically) zero."""


class ScenarioLabel(enum.Enum):
    ADS = "ads"
    BOOK = "book"
    POSTER = "poster"
    NATURAL = "natural"
    STREET = "street"
    HAND_WRITTEN = "hand-written"
    INFOGRAPHIC = "infographic"
    DOCUMENT = "document"
    CHART = "chart"
    TABLE = "table"


class Difficulty(enum.Enum):
    EASY = "easy"
    HARD = "hard"


class EvalCategory(enum.Enum):
    ADS_BOOK_POSTER = "ads&book&poster"
    CHART_TABLE = "chart&table"
    DOCUMENT = "document"
    HAND_WRITTEN = "hand-written"
    INFOGRAPHIC = "infographic"
    NATURAL_STREET = "natural&street"


HARD_SCENARIOS = frozenset({ScenarioLabel.DOCUMENT, ScenarioLabel.INFOGRAPHIC})

_CATEGORY_BY_LABEL = {
    ScenarioLabel.ADS: EvalCategory.ADS_BOOK_POSTER,
    ScenarioLabel.BOOK: EvalCategory.ADS_BOOK_POSTER,
    ScenarioLabel.POSTER: EvalCategory.ADS_BOOK_POSTER,
    ScenarioLabel.CHART: EvalCategory.CHART_TABLE,
    ScenarioLabel.TABLE: EvalCategory.CHART_TABLE,
    ScenarioLabel.DOCUMENT: EvalCategory.DOCUMENT,
    ScenarioLabel.HAND_WRITTEN: EvalCategory.HAND_WRITTEN,
    ScenarioLabel.INFOGRAPHIC: EvalCategory.INFOGRAPHIC,
    ScenarioLabel.NATURAL: EvalCategory.NATURAL_STREET,
    ScenarioLabel.STREET: EvalCategory.NATURAL_STREET,
}


def difficulty(label: ScenarioLabel) -> Difficulty:
    return Difficulty.HARD if label in HARD_SCENARIOS else Difficulty.EASY


def eval_category(label: ScenarioLabel) -> EvalCategory:
    return _CATEGORY_BY_LABEL[label]


@dataclass
class LabelEntry:
    """One label text with its per-template embedding rows."""

    text: str
    superclass: ScenarioLabel
    vectors: np.ndarray


@dataclass
class LabelBank:
    entries: list[LabelEntry]
    dim: int


@dataclass
class EnsembledLabel:
    text: str
    superclass: ScenarioLabel
    vector: np.ndarray


def ensemble(bank: LabelBank) -> list[EnsembledLabel]:
    """Normalize template vectors, average per label, re-normalize.

    Raises:
        DegenerateLabelError: a template vector or an averaged vector has
            (numerically) zero norm.
    """
    out = []
    for entry in bank.entries:
        rows = np.asarray(entry.vectors, dtype=float)
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms < 1e-12):
            raise DegenerateLabelError(f"label {entry.text!r}: zero-norm template vector")
        mean = (rows / norms[:, None]).mean(axis=0)
        mean_norm = float(np.linalg.norm(mean))
        if mean_norm < 1e-12:
            raise DegenerateLabelError(f"label {entry.text!r}: template vectors average to zero")
        out.append(EnsembledLabel(text=entry.text, superclass=entry.superclass, vector=mean / mean_norm))
    return out


def classify(image_vec: np.ndarray, labels: Sequence[EnsembledLabel]) -> ScenarioLabel:
    """Cosine argmax over ensembled labels; ties keep the earliest bank entry."""
    if not labels:
        raise ValueError("cannot classify against an empty label bank")
    v = np.asarray(image_vec, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise ValueError("cannot classify a zero image vector")
    v = v / norm
    best, best_score = None, -np.inf
    for label in labels:
        score = float(np.dot(v, label.vector))
        if score > best_score:
            best, best_score = label, score
    return best.superclass


# ---------------------------------------------------------------------------
# Label config (texts + prompt templates), shipped as package data.
# ---------------------------------------------------------------------------


def load_label_config(path: str | None = None) -> tuple[list[str], dict[ScenarioLabel, list[str]]]:
    """Load prompt templates and per-superclass label texts.

    Args:
        path: optional override; defaults to the packaged config.
    """
    if path is None:
        raw = resources.files("patimt").joinpath("data/scenario_labels.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    doc = json.loads(raw)
    templates = doc["templates"]
    classes = {ScenarioLabel(name): list(texts) for name, texts in doc["classes"].items()}
    return templates, classes


def prompts_for(label_text: str, templates: Sequence[str]) -> list[str]:
    return [t.format(label_text) for t in templates]


# ---------------------------------------------------------------------------
# Embedding interchange.
# ---------------------------------------------------------------------------


def _vector(value, dim: int, where: str) -> np.ndarray:
    if (
        not isinstance(value, list)
        or len(value) != dim
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ParseError(f"{where}: expected a numeric vector of dim {dim}")
    return np.asarray(value, dtype=float)


def load_embedding_file(data: bytes | str) -> tuple[LabelBank, list[tuple[str, np.ndarray]]]:
    """Parse the embedding interchange document.

    Returns:
        (label bank, [(image_id, vector), ...]) in document order.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"embedding file: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("embedding file: expected a JSON object")
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ParseError("embedding file: field 'dim' must be a positive integer")

    entries = []
    labels = doc.get("labels")
    if not isinstance(labels, list) or not labels:
        raise ParseError("embedding file: field 'labels' must be a non-empty list")
    for i, item in enumerate(labels):
        where = f"label {i}"
        if not isinstance(item, dict):
            raise ParseError(f"{where}: expected a JSON object")
        text = item.get("text")
        if not isinstance(text, str) or not text:
            raise ParseError(f"{where}: field 'text' must be a non-empty string")
        superclass = item.get("superclass")
        try:
            label = ScenarioLabel(superclass)
        except ValueError:
            raise ParseError(f"{where}: unknown superclass {superclass!r}") from None
        vectors = item.get("vectors")
        if not isinstance(vectors, list) or not vectors:
            raise ParseError(f"{where}: field 'vectors' must be a non-empty list")
        rows = np.stack([_vector(v, dim, f"{where}, vector {j}") for j, v in enumerate(vectors)])
        entries.append(LabelEntry(text=text, superclass=label, vectors=rows))

    images = []
    seen: set[str] = set()
    for i, item in enumerate(doc.get("images") or []):
        where = f"image {i}"
        if not isinstance(item, dict):
            raise ParseError(f"{where}: expected a JSON object")
        image_id = item.get("image_id")
        if not isinstance(image_id, str) or not image_id:
            raise ParseError(f"{where}: field 'image_id' must be a non-empty string")
        if image_id in seen:
            raise ParseError(f"{where}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        images.append((image_id, _vector(item.get("vector"), dim, where)))
    return LabelBank(entries=entries, dim=dim), images


# ---------------------------------------------------------------------------
# Scenario-assignment interchange (one JSON object per line).
# ---------------------------------------------------------------------------


def serialize_scenarios_file(assignments: "dict[str, ScenarioLabel]") -> bytes:
    rows = [
        json.dumps(
            {
                "image_id": image_id,
                "scenario": label.value,
                "difficulty": difficulty(label).value,
                "category": eval_category(label).value,
            },
            ensure_ascii=False,
            separators=(",", ":"),
        )
        for image_id, label in assignments.items()
    ]
    return ("\n".join(rows) + "\n" if rows else "").encode("utf-8")


def parse_scenarios_file(data: bytes | str) -> dict[str, ScenarioLabel]:
    """Parse scenario assignments; difficulty/category fields are derived
    data and ignored on input."""
    from .corpus import _decode, _records, _req_str

    assignments: dict[str, ScenarioLabel] = {}
    for idx, obj in _records(_decode(data)):
        image_id = _req_str(obj, "image_id", idx)
        if image_id in assignments:
            raise ParseError(f"record {idx}: duplicate image_id {image_id!r}")
        value = obj.get("scenario")
        try:
            assignments[image_id] = ScenarioLabel(value)
        except ValueError:
            raise ParseError(f"record {idx}: unknown scenario {value!r}") from None
    return assignments
