#!/usr/bin/env python3
"""Run the whole corpus pipeline on a small synthetic corpus.

Generates OCR lines, image/label embeddings, and a dictionary translator, then
drives every CLI stage in order: check, classify, filter, merge, refine,
build-instructions, a simulated model, parse-predictions, evaluate, stats.
Artifacts land in --out-dir so they can be inspected afterwards.

Usage:
    python3 scripts/demo_pipeline.py --out-dir demo_out
"""

import argparse
import json
import random
import sys
from pathlib import Path

import numpy as np

from patimt.cli import main as patimt_main
from patimt.corpus import (
    LinesRecord,
    OcrLine,
    parse_blocks_file,
    serialize_blocks_file,
    serialize_lines_file,
)
from patimt.geometry import BBox, ImageDims
from patimt.instruct import (
    SEPARATOR,
    BoxDialect,
    DictionaryTranslator,
    TaskType,
    box_surface,
    parse_instances_file,
    translate_blocks,
)
from patimt.predparse import PredictionRecord, serialize_predictions_file
from patimt.scenario import HARD_SCENARIOS, ScenarioLabel

# (source line a, source line b, translation of the merged block)
CLUSTERS = [
    ("fresh", "coffee", "新鲜咖啡"),
    ("grand", "opening", "盛大开业"),
    ("quarterly", "report", "季度报告"),
    ("annual", "summary", "年度总结"),
    ("train", "station", "火车站台"),
    ("north", "exit", "北面出口"),
    ("sales", "chart", "销售图表"),
    ("growth", "trend", "增长趋势"),
    ("old", "library", "古老图书馆"),
    ("reading", "room", "安静阅览室"),
    ("data", "table", "数据表格"),
    ("unit", "price", "单位价格"),
    ("mountain", "lake", "高山湖泊"),
    ("quiet", "valley", "幽静山谷"),
    ("shopping", "list", "购物清单"),
    ("thank", "you", "谢谢你们"),
]

SCENARIOS = [
    ScenarioLabel.POSTER,
    ScenarioLabel.DOCUMENT,
    ScenarioLabel.STREET,
    ScenarioLabel.CHART,
    ScenarioLabel.BOOK,
    ScenarioLabel.INFOGRAPHIC,
    ScenarioLabel.NATURAL,
    ScenarioLabel.HAND_WRITTEN,
]

DIMS = ImageDims(1000, 800)


def run(argv: list[str]) -> None:
    print("$ patimt " + " ".join(argv))
    rc = patimt_main(argv)
    if rc != 0:
        sys.exit(f"step {argv[0]!r} failed with exit code {rc}")


def make_corpus(out: Path, rng: random.Random) -> dict[str, Path]:
    """Write lines, embeddings, and the translation dictionary; return paths."""
    records, dictionary = [], {}
    for i, scenario in enumerate(SCENARIOS):
        lines = []
        for c in range(2):
            word_a, word_b, translation = CLUSTERS[2 * i + c]
            y = 120 + 380 * c
            lines.append(OcrLine(word_a, BBox(80, y, 420, y + 70)))
            lines.append(OcrLine(word_b, BBox(440, y, 820, y + 70)))
            dictionary[f"{word_a} {word_b}"] = translation
        records.append(LinesRecord(f"img-{i:02d}", DIMS, lines))
    # Two images the quality filter should reject.
    records.append(LinesRecord("img-repeat", DIMS, [OcrLine("loading!!!", BBox(100, 100, 700, 300))]))
    records.append(LinesRecord("img-sparse", DIMS, [OcrLine("hi", BBox(0, 0, 40, 40))]))

    # Embeddings: one near-orthogonal direction per label, images near their
    # planted label's direction. classify must recover SCENARIOS exactly.
    gen = np.random.default_rng(rng.randrange(2**32))
    dim = 12
    directions = {label: gen.normal(size=dim) for label in ScenarioLabel}
    doc = {
        "dim": dim,
        "labels": [
            {
                "text": f"a photo of a {label.value}",
                "superclass": label.value,
                "vectors": [
                    (directions[label] + 0.05 * gen.normal(size=dim)).tolist() for _ in range(2)
                ],
            }
            for label in ScenarioLabel
        ],
        "images": [
            {
                "image_id": f"img-{i:02d}",
                "vector": (directions[scenario] + 0.1 * gen.normal(size=dim)).tolist(),
            }
            for i, scenario in enumerate(SCENARIOS)
        ],
    }

    paths = {
        "lines": out / "lines.ndjson",
        "embeddings": out / "embeddings.json",
        "dictionary": out / "dictionary.json",
    }
    paths["lines"].write_bytes(serialize_lines_file(records))
    paths["embeddings"].write_text(json.dumps(doc), encoding="utf-8")
    paths["dictionary"].write_text(json.dumps(dictionary, ensure_ascii=False), encoding="utf-8")
    return paths


def drop_one_hard_block(blocks_path: Path, out_path: Path) -> None:
    """Simulate a layout engine missing a block on each hard-scenario image."""
    hard_ids = {
        f"img-{i:02d}" for i, s in enumerate(SCENARIOS) if s in HARD_SCENARIOS
    }
    records = parse_blocks_file(blocks_path.read_bytes())
    for rec in records:
        if rec.image_id in hard_ids and len(rec.blocks) > 1:
            del rec.blocks[-1]
    out_path.write_bytes(serialize_blocks_file(records))


def simulate_model(instances_path: Path, predictions_path: Path, rng: random.Random) -> None:
    """Produce near-perfect outputs: true text, boxes jittered by a few pixels.

    One output drops the separator on purpose so the salvage parser and the
    diagnostics counter have something to do.
    """
    instances = parse_instances_file(instances_path.read_bytes())
    outputs = []
    for n, inst in enumerate(instances):
        lines = []
        for gold in inst.gold:
            body = f"{gold.text} {SEPARATOR} {gold.translation}"
            if TaskType(inst.task) is TaskType.FULL_IMAGE:
                b = gold.bbox
                jit = [v + rng.randint(-4, 4) for v in (b.x1, b.y1, b.x2, b.y2)]
                jittered = BBox(
                    max(0.0, min(jit[0], jit[2])),
                    max(0.0, min(jit[1], jit[3])),
                    max(jit[0], jit[2], 1.0),
                    max(jit[1], jit[3], 1.0),
                )
                body += " " + box_surface(jittered, BoxDialect.ABSOLUTE, inst.dims)
            lines.append(body)
        output = "\n".join(lines)
        if n == 2:
            output = output.replace(f" {SEPARATOR}", "", 1)
        outputs.append(PredictionRecord(inst.image_id, inst.task, output))
    predictions_path.write_bytes(serialize_predictions_file(outputs))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="demo_out", help="directory for all artifacts")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    paths = make_corpus(out, rng)
    run(["check", "--kind", "lines", "--in", str(paths["lines"])])
    run(["check", "--kind", "embeddings", "--in", str(paths["embeddings"])])

    scenarios = out / "scenarios.ndjson"
    run(["classify", "--embeddings", str(paths["embeddings"]), "--out", str(scenarios)])

    kept = out / "kept.ndjson"
    run([
        "filter", "--lines", str(paths["lines"]), "--out", str(kept),
        "--drops", str(out / "drops.ndjson"),
    ])

    blocks = out / "blocks.ndjson"
    run(["merge", "--lines", str(kept), "--out", str(blocks)])

    partial = out / "blocks_partial.ndjson"
    drop_one_hard_block(blocks, partial)
    refined = out / "refined.ndjson"
    run([
        "refine", "--lines", str(kept), "--blocks", str(partial),
        "--scenarios", str(scenarios), "--out", str(refined),
    ])

    instances = out / "instances.ndjson"
    run([
        "build-instructions", "--blocks", str(refined), "--scenarios", str(scenarios),
        "--out", str(instances), "--lang-pair", "EN-ZH",
        "--dialect", "absolute", "--format", "plain-text",
        "--translator", f"dict:{paths['dictionary']}", "--seed", str(args.seed),
    ])

    predictions = out / "predictions.ndjson"
    simulate_model(instances, predictions, rng)
    run([
        "parse-predictions", "--predictions", str(predictions),
        "--instances", str(instances), "--out", str(out / "parsed.ndjson"),
        "--dialect", "absolute", "--format", "plain-text",
    ])

    report = out / "report.json"
    run([
        "evaluate", "--instances", str(instances), "--predictions", str(predictions),
        "--out", str(report), "--dialect", "absolute", "--format", "plain-text",
    ])

    # A blocks file can carry translations too; write one so stats counts
    # both sides of the corpus.
    translator = DictionaryTranslator(json.loads(paths["dictionary"].read_text()))
    translated_records = parse_blocks_file(refined.read_bytes())
    for rec in translated_records:
        rec.blocks[:] = translate_blocks(rec.blocks, translator, "EN-ZH")
    translated = out / "translated.ndjson"
    translated.write_bytes(serialize_blocks_file(translated_records))
    run(["stats", "--lines", str(kept), "--blocks", str(translated)])

    print("\nreport:")
    print(json.dumps(json.loads(report.read_text())["per_category"], indent=2))
    print(f"\nartifacts in {out}/")


if __name__ == "__main__":
    main()
