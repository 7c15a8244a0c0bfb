"""dump-blocks: map a layout engine's regions onto the blocks interchange.

Engines:
  mineru-json — consumes the `<stem>.content_list.json` artifact a MinerU run
                leaves next to each image (a list of
                {"type": ..., "bbox": [x1,y1,x2,y2], "text"?: ...} entries);
                image dimensions are read from the image itself. Because the
                JSON was produced by an external run, --engine-version must
                pin the version that produced it.
  stub        — replays `<stem>.layout.json` sidecars shaped like
                {"width": W, "height": H,
                 "blocks": [{"kind": ..., "bbox": [...] | "quad": [[x,y]...],
                             "text"?: ...}]}

Engine-specific region kinds collapse onto {text, image, table, other}.
A text-kind region without usable text is demoted to 'other' (the schema
requires text blocks to carry text).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .common import (
    AdapterError,
    EngineFailure,
    atomic_write,
    discover_images,
    image_size,
    load_sidecar,
    ndjson,
    quad_to_rect,
    rect,
    write_manifest,
)

_IMAGE_KINDS = {"figure", "image", "img", "picture", "photo"}
_TEXT_HINTS = ("text", "title", "caption", "list", "index", "footnote", "header", "footer")


def collapse_kind(raw: str) -> str:
    """Collapse an engine-specific region kind onto the interchange enum.

    Captions are text even when they caption a table or figure, so the
    caption/title test runs before the table/figure tests.
    """
    kind = raw.strip().lower().replace("_", " ").replace("-", " ")
    if "caption" in kind or "title" in kind:
        return "text"
    if "table" in kind:
        return "table"
    if kind in _IMAGE_KINDS:
        return "image"
    if any(hint in kind for hint in _TEXT_HINTS):
        return "text"
    return "other"


def _block(raw_kind: str, bbox: list[float], text) -> dict:
    kind = collapse_kind(raw_kind)
    has_text = isinstance(text, str) and text.strip()
    if kind == "text" and not has_text:
        kind = "other"
        has_text = False
    block = {"kind": kind, "bbox": bbox}
    if has_text:
        block["text"] = text
    return block


class StubBlockEngine:
    name = "stub"
    version = "builtin-1"

    def analyze(self, image: Path) -> tuple[int, int, list[dict]]:
        doc = load_sidecar(image.with_name(image.stem + ".layout.json"))
        if not isinstance(doc, dict):
            raise EngineFailure("sidecar must be a JSON object")
        try:
            width, height = int(doc["width"]), int(doc["height"])
        except (KeyError, TypeError, ValueError):
            raise EngineFailure("sidecar missing integer width/height") from None
        items = doc.get("blocks")
        if not isinstance(items, list):
            raise EngineFailure("sidecar field 'blocks' must be a list")
        blocks = []
        for item in items:
            if not isinstance(item, dict) or not isinstance(item.get("kind"), str):
                raise EngineFailure(f"malformed sidecar block: {item!r}")
            if "quad" in item:
                bbox = quad_to_rect(item["quad"])
            elif isinstance(item.get("bbox"), list) and len(item["bbox"]) == 4:
                bbox = rect(item["bbox"])
            else:
                raise EngineFailure(f"sidecar block needs 'quad' or 'bbox': {item!r}")
            blocks.append(_block(item["kind"], bbox, item.get("text")))
        return width, height, blocks


class MineruJsonEngine:
    name = "mineru-json"

    def __init__(self, engine_version: str | None):
        if not engine_version:
            raise AdapterError(
                "--engine-version is required with --engine mineru-json "
                "(pin the MinerU version that produced the content_list files)"
            )
        self.version = engine_version

    def analyze(self, image: Path) -> tuple[int, int, list[dict]]:
        width, height = image_size(image)
        doc = load_sidecar(image.with_name(image.stem + ".content_list.json"))
        if not isinstance(doc, list):
            raise EngineFailure("content_list must be a JSON list")
        blocks = []
        for item in doc:
            if not isinstance(item, dict) or not isinstance(item.get("type"), str):
                raise EngineFailure(f"malformed content_list entry: {item!r}")
            bbox = item.get("bbox")
            if not isinstance(bbox, list) or len(bbox) != 4:
                continue  # entries without geometry (e.g. page furniture) carry nothing usable
            blocks.append(_block(item["type"], rect(bbox), item.get("text")))
        return width, height, blocks


def run(input_dir: str | Path, out_path: str | Path, engine) -> tuple[int, list[dict]]:
    rows, skipped = [], []
    for image in discover_images(input_dir):
        try:
            width, height, blocks = engine.analyze(image)
        except EngineFailure as exc:
            skipped.append({"file": image.name, "error": str(exc)})
            continue
        rows.append({"image_id": image.stem, "width": width, "height": height, "blocks": blocks})
    atomic_write(out_path, ndjson(rows))
    write_manifest(out_path, engine.name, engine.version, input_dir, len(rows), skipped)
    return len(rows), skipped


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dump-blocks", description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="input", required=True, help="directory of images")
    ap.add_argument("--out", required=True, help="blocks interchange file (NDJSON)")
    ap.add_argument("--engine", choices=["mineru-json", "stub"], default="mineru-json")
    ap.add_argument(
        "--engine-version", dest="engine_version", help="version of the engine run being adapted"
    )
    args = ap.parse_args(argv)
    try:
        engine = StubBlockEngine() if args.engine == "stub" else MineruJsonEngine(args.engine_version)
        count, skipped = run(args.input, args.out, engine)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"records={count} skipped={len(skipped)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
