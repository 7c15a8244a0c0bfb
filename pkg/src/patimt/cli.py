"""Command line for the corpus pipeline.

Every command reads/writes the newline-delimited JSON interchange files and
prints one machine-parseable key=value summary line on success. Exit codes:
0 success, 1 operational failure (bad data, missing file), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .corpus import (
    BlocksRecord,
    ParseError,
    assemble_annotations,
    corpus_stats,
    parse_blocks_file,
    parse_lines_file,
    serialize_blocks_file,
    serialize_lines_file,
)
from .filters import FilterParams, check_image
from .geometry import ImageDims
from .instruct import (
    BoxDialect,
    DictionaryTranslator,
    HttpTranslator,
    InstanceFormat,
    TaskType,
    build_fullimage_instance,
    build_region_instances,
    load_question_pool,
    parse_instances_file,
    serialize_instances_file,
    translate_blocks,
)
from .merge import MergeParams, spatial_merge
from .metrics import MatchStrategy, evaluate
from .predparse import (
    ParseStrictness,
    parse_plain,
    parse_predictions_file,
    parse_structured,
)
from .refine import RefineParams, adaptive_process
from .scenario import (
    classify,
    ensemble,
    load_embedding_file,
    parse_scenarios_file,
    serialize_scenarios_file,
)
from .corpus import bbox_to_list

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Plumbing.
# ---------------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(doc, dict):
        raise ValueError("--config must contain a JSON object")
    return doc


def _resolve(args, config: dict, key: str, default):
    """Explicit flag beats config file beats built-in default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _parallel_map(fn, items, jobs: int) -> list:
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))  # map preserves input order
    return [fn(item) for item in items]


def _ndjson(rows: list[dict]) -> bytes:
    lines = [json.dumps(r, ensure_ascii=False, separators=(",", ":")) for r in rows]
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def _merge_params(args, config: dict) -> MergeParams:
    return MergeParams(
        x_ths=float(_resolve(args, config, "x_ths", 1.0)),
        y_ths=float(_resolve(args, config, "y_ths", 0.5)),
        row_tolerance=float(_resolve(args, config, "row_tolerance", 0.5)),
        joiner=str(_resolve(args, config, "joiner", " ")),
    )


def _jobs(args, config: dict) -> int:
    return int(_resolve(args, config, "jobs", 1))


def _dialect(args, config: dict) -> BoxDialect:
    return BoxDialect(_resolve(args, config, "dialect", BoxDialect.ABSOLUTE.value))


def _format(args, config: dict) -> InstanceFormat:
    return InstanceFormat(_resolve(args, config, "format", InstanceFormat.PLAIN_TEXT.value))


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------


def _cmd_classify(args, config: dict) -> int:
    bank, images = load_embedding_file(Path(args.embeddings).read_bytes())
    labels = ensemble(bank)
    rows = _parallel_map(
        lambda item: (item[0], classify(item[1], labels)), images, _jobs(args, config)
    )
    Path(args.out).write_bytes(serialize_scenarios_file(dict(rows)))
    print(f"images={len(rows)}")
    return 0


def _cmd_filter(args, config: dict) -> int:
    records = parse_lines_file(Path(args.lines).read_bytes())
    params = FilterParams(
        repetition_len=int(_resolve(args, config, "repetition_len", 3)),
        coverage_threshold=float(_resolve(args, config, "coverage_threshold", 0.03)),
    )
    verdicts = _parallel_map(
        lambda rec: check_image(rec.lines, rec.dims, params), records, _jobs(args, config)
    )
    kept = [rec for rec, v in zip(records, verdicts) if v.keep]
    Path(args.out).write_bytes(serialize_lines_file(kept))
    if args.drops:
        rows = [
            {"image_id": rec.image_id, "reasons": [r.value for r in v.reasons]}
            for rec, v in zip(records, verdicts)
            if not v.keep
        ]
        Path(args.drops).write_bytes(_ndjson(rows))
    print(f"images={len(records)} kept={len(kept)} dropped={len(records) - len(kept)}")
    return 0


def _cmd_merge(args, config: dict) -> int:
    records = parse_lines_file(Path(args.lines).read_bytes())
    params = _merge_params(args, config)
    out_records = _parallel_map(
        lambda rec: BlocksRecord(rec.image_id, rec.dims, spatial_merge(rec.lines, params)),
        records,
        _jobs(args, config),
    )
    Path(args.out).write_bytes(serialize_blocks_file(out_records))
    print(f"images={len(records)} blocks={sum(len(r.blocks) for r in out_records)}")
    return 0


def _cmd_refine(args, config: dict) -> int:
    lines_records = parse_lines_file(Path(args.lines).read_bytes())
    blocks_records = parse_blocks_file(Path(args.blocks).read_bytes())
    scenarios = parse_scenarios_file(Path(args.scenarios).read_bytes())
    annotations = assemble_annotations(lines_records, blocks_records, scenarios)
    params = RefineParams(
        coverage_tau=float(_resolve(args, config, "coverage_tau", 0.5)),
        merge=_merge_params(args, config),
    )
    out_records = _parallel_map(
        lambda ann: BlocksRecord(
            ann.image_id, ann.dims, adaptive_process(ann, ann.blocks or None, params)
        ),
        annotations,
        _jobs(args, config),
    )
    Path(args.out).write_bytes(serialize_blocks_file(out_records))
    print(f"images={len(annotations)} blocks={sum(len(r.blocks) for r in out_records)}")
    return 0


def _make_translator(spec: str | None):
    if not spec or spec == "none":
        return None
    if spec.startswith("dict:"):
        mapping = json.loads(Path(spec[len("dict:") :]).read_text("utf-8"))
        if not isinstance(mapping, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in mapping.items()
        ):
            raise ValueError("dict translator file must map strings to strings")
        return DictionaryTranslator(mapping)
    if spec.startswith(("http://", "https://")):
        return HttpTranslator(spec)
    raise ValueError(f"unknown translator spec {spec!r}; use dict:PATH, http(s)://URL, or none")


def _cmd_build(args, config: dict) -> int:
    blocks_records = parse_blocks_file(Path(args.blocks).read_bytes())
    scenarios = (
        parse_scenarios_file(Path(args.scenarios).read_bytes()) if args.scenarios else None
    )
    lang_pair = _resolve(args, config, "lang_pair", None)
    if not lang_pair:
        raise ValueError("--lang-pair is required (e.g. EN-ZH)")
    annotations = assemble_annotations(None, blocks_records, scenarios, lang_pair=lang_pair)
    dialect = _dialect(args, config)
    fmt = _format(args, config)
    seed = int(_resolve(args, config, "seed", 0))
    tasks: list[TaskType] = []
    for name in str(_resolve(args, config, "tasks", "region,full-image")).split(","):
        if name.strip():
            task = TaskType(name.strip())
            if task not in tasks:
                tasks.append(task)
    pool = load_question_pool(args.question_pool)
    for task in tasks:
        if (task.value, fmt.value) not in pool.format_instructions:
            raise ValueError(f"question pool has no instruction for ({task.value}, {fmt.value})")
    translator = _make_translator(args.translator)

    def build_one(ann):
        if translator is not None:
            ann.blocks = translate_blocks(ann.blocks, translator, ann.lang_pair)
        built, skipped = [], 0
        if TaskType.REGION in tasks:
            built.extend(build_region_instances(ann, dialect, fmt, pool, seed))
        if TaskType.FULL_IMAGE in tasks:
            try:
                built.append(build_fullimage_instance(ann, dialect, fmt, pool, seed))
            except ValueError as exc:
                logger.warning("skipping full-image instance: %s", exc)
                skipped = 1
        return built, skipped

    results = _parallel_map(build_one, annotations, _jobs(args, config))
    instances = [inst for built, _ in results for inst in built]
    skipped = sum(s for _, s in results)
    Path(args.out).write_bytes(serialize_instances_file(instances))
    meta = {
        "seed": seed,
        "dialect": dialect.value,
        "format": fmt.value,
        "tasks": [t.value for t in tasks],
        "lang_pair": lang_pair,
        "translator": args.translator or "none",
        "question_pool": args.question_pool,
    }
    Path(str(args.out) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"images={len(annotations)} instances={len(instances)} skipped={skipped}")
    return 0


def _cmd_parse_predictions(args, config: dict) -> int:
    records = parse_predictions_file(Path(args.predictions).read_bytes())
    instances = parse_instances_file(Path(args.instances).read_bytes())
    dims_by_image: dict[str, ImageDims] = {}
    for inst in instances:
        if inst.dims is not None:
            dims_by_image.setdefault(inst.image_id, inst.dims)
    dialect = _dialect(args, config)
    fmt = _format(args, config)
    strictness = ParseStrictness(_resolve(args, config, "strictness", "salvage"))
    parser = parse_structured if fmt is InstanceFormat.STRUCTURED else parse_plain

    def parse_one(rec):
        dims = dims_by_image.get(rec.image_id)
        if dialect is not BoxDialect.ABSOLUTE and dims is None:
            raise ValueError(f"image {rec.image_id!r}: dims unknown (not in instances file)")
        result = parser(rec.output, dialect, dims, strictness)
        return {
            "image_id": rec.image_id,
            "task": rec.task.value,
            "predictions": [
                {
                    "text": p.text,
                    "translation": p.translation,
                    "bbox": bbox_to_list(p.bbox) if p.bbox is not None else None,
                }
                for p in result.predictions
            ],
            "diagnostics": result.diagnostics,
        }

    rows = _parallel_map(parse_one, records, _jobs(args, config))
    Path(args.out).write_bytes(_ndjson(rows))
    n_preds = sum(len(r["predictions"]) for r in rows)
    n_diags = sum(len(r["diagnostics"]) for r in rows)
    print(f"records={len(rows)} predictions={n_preds} diagnostics={n_diags}")
    return 0


def _cmd_evaluate(args, config: dict) -> int:
    instances = parse_instances_file(Path(args.instances).read_bytes())
    predictions = parse_predictions_file(Path(args.predictions).read_bytes())
    dialect = _dialect(args, config)
    fmt = _format(args, config)
    strategy = MatchStrategy(_resolve(args, config, "strategy", "optimal"))
    smooth = bool(_resolve(args, config, "smooth", False))
    report = evaluate(instances, predictions, dialect, fmt, strategy, smooth)
    doc = report.as_dict()
    doc["config"] = {
        "dialect": dialect.value,
        "format": fmt.value,
        "strategy": strategy.value,
        "smooth": smooth,
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    iou_str = "na" if report.overall_iou is None else f"{report.overall_iou:.4f}"
    print(
        f"categories={len(report.per_category)} "
        f"overall_bleu={report.overall_bleu:.4f} overall_iou={iou_str}"
    )
    return 0


def _cmd_stats(args, config: dict) -> int:
    lines_records = parse_lines_file(Path(args.lines).read_bytes())
    blocks_records = (
        parse_blocks_file(Path(args.blocks).read_bytes()) if args.blocks else None
    )
    stats = corpus_stats(assemble_annotations(lines_records, blocks_records))
    if args.out:
        Path(args.out).write_text(
            json.dumps(stats.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(" ".join(f"{k}={v}" for k, v in stats.as_dict().items()))
    return 0


def _cmd_check(args, config: dict) -> int:
    data = Path(args.input).read_bytes()
    if args.kind == "lines":
        count = len(parse_lines_file(data))
    elif args.kind == "blocks":
        count = len(parse_blocks_file(data))
    elif args.kind == "scenarios":
        count = len(parse_scenarios_file(data))
    elif args.kind == "embeddings":
        _, images = load_embedding_file(data)
        count = len(images)
    elif args.kind == "instances":
        count = len(parse_instances_file(data))
    else:
        count = len(parse_predictions_file(data))
    print(f"ok=true kind={args.kind} records={count}")
    return 0


# ---------------------------------------------------------------------------
# Parser.
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patimt",
        description="Corpus processing and evaluation for position-aware text-image translation.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default parameter values; flags win")
    common.add_argument("--jobs", type=int, help="worker threads for per-image work (default 1)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="assign scenarios from embeddings")
    p.add_argument("--embeddings", required=True, help="embedding interchange file")
    p.add_argument("--out", required=True, help="scenario assignments (NDJSON)")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("filter", parents=[common], help="drop low-quality images")
    p.add_argument("--lines", required=True, help="OCR lines interchange file")
    p.add_argument("--out", required=True, help="kept lines (NDJSON)")
    p.add_argument("--drops", help="optional NDJSON of dropped images with reasons")
    p.add_argument("--repetition-len", type=int, dest="repetition_len")
    p.add_argument("--coverage-threshold", type=float, dest="coverage_threshold")
    p.set_defaults(func=_cmd_filter)

    def add_merge_flags(p):
        p.add_argument("--x-ths", type=float, dest="x_ths")
        p.add_argument("--y-ths", type=float, dest="y_ths")
        p.add_argument("--row-tolerance", type=float, dest="row_tolerance")
        p.add_argument("--joiner", dest="joiner")

    p = sub.add_parser("merge", parents=[common], help="merge OCR lines into blocks")
    p.add_argument("--lines", required=True)
    p.add_argument("--out", required=True, help="merged blocks (NDJSON)")
    add_merge_flags(p)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("refine", parents=[common], help="scenario-adaptive block refinement")
    p.add_argument("--lines", required=True)
    p.add_argument("--blocks", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True, help="refined blocks (NDJSON)")
    p.add_argument("--coverage-tau", type=float, dest="coverage_tau")
    add_merge_flags(p)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser(
        "build-instructions", parents=[common], help="build instruction instances from blocks"
    )
    p.add_argument("--blocks", required=True)
    p.add_argument("--scenarios", help="scenario assignments to attach to instances")
    p.add_argument("--out", required=True, help="instances (NDJSON); also writes <out>.meta.json")
    p.add_argument("--lang-pair", dest="lang_pair", help="e.g. EN-ZH or ZH-EN")
    p.add_argument("--dialect", choices=[d.value for d in BoxDialect])
    p.add_argument("--format", choices=[f.value for f in InstanceFormat])
    p.add_argument("--tasks", help="comma list of region,full-image (default both)")
    p.add_argument("--seed", type=int, help="question sampling seed (default 0)")
    p.add_argument("--question-pool", dest="question_pool", help="custom question pool JSON")
    p.add_argument("--translator", help="dict:PATH, http(s)://URL, or none (default)")
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser(
        "parse-predictions", parents=[common], help="parse raw model outputs into records"
    )
    p.add_argument("--predictions", required=True, help="raw predictions (NDJSON)")
    p.add_argument("--instances", required=True, help="instances file (for image dims)")
    p.add_argument("--out", required=True, help="parsed predictions (NDJSON)")
    p.add_argument("--dialect", choices=[d.value for d in BoxDialect])
    p.add_argument("--format", choices=[f.value for f in InstanceFormat])
    p.add_argument("--strictness", choices=[s.value for s in ParseStrictness])
    p.set_defaults(func=_cmd_parse_predictions)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against instances")
    p.add_argument("--instances", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--dialect", choices=[d.value for d in BoxDialect])
    p.add_argument("--format", choices=[f.value for f in InstanceFormat])
    p.add_argument("--strategy", choices=[s.value for s in MatchStrategy])
    p.add_argument("--smooth", action="store_true", default=None, help="smooth zero n-gram counts")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics")
    p.add_argument("--lines", required=True)
    p.add_argument("--blocks")
    p.add_argument("--out", help="optional JSON output")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("check", parents=[common], help="validate an interchange file")
    p.add_argument(
        "--kind",
        required=True,
        choices=["lines", "blocks", "embeddings", "scenarios", "instances", "predictions"],
    )
    p.add_argument("--in", dest="input", required=True, help="file to validate")
    p.set_defaults(func=_cmd_check)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(message)s")
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
