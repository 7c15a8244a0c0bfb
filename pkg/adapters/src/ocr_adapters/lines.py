"""dump-lines: run a line-level OCR engine over images → lines interchange.

Engines:
  easyocr  — runs EasyOCR on each image (requires the 'easyocr' extra).
  stub     — replays pre-recorded engine output from a `<stem>.ocr.json`
             sidecar next to each image:
             {"width": W, "height": H,
              "lines": [{"text": ..., "quad": [[x,y]...]} |
                        {"text": ..., "bbox": [x1,y1,x2,y2], "confidence"?: c}]}

Detected quadrilaterals are collapsed to their axis-aligned bounding
rectangle in absolute pixels. Blank-text detections are dropped. A per-image
engine failure skips that image and logs it in the manifest; the script still
exits 0. Configuration problems exit 1.
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


class StubLineEngine:
    name = "stub"
    version = "builtin-1"

    def detect(self, image: Path) -> tuple[int, int, list[dict]]:
        doc = load_sidecar(image.with_name(image.stem + ".ocr.json"))
        if not isinstance(doc, dict):
            raise EngineFailure("sidecar must be a JSON object")
        try:
            width, height = int(doc["width"]), int(doc["height"])
        except (KeyError, TypeError, ValueError):
            raise EngineFailure("sidecar missing integer width/height") from None
        items = doc.get("lines")
        if not isinstance(items, list):
            raise EngineFailure("sidecar field 'lines' must be a list")
        lines = []
        for item in items:
            if not isinstance(item, dict) or not isinstance(item.get("text"), str):
                raise EngineFailure(f"malformed sidecar line: {item!r}")
            if "quad" in item:
                bbox = quad_to_rect(item["quad"])
            elif isinstance(item.get("bbox"), list) and len(item["bbox"]) == 4:
                bbox = rect(item["bbox"])
            else:
                raise EngineFailure(f"sidecar line needs 'quad' or 'bbox': {item!r}")
            line = {"text": item["text"], "bbox": bbox}
            if "confidence" in item:
                line["confidence"] = float(item["confidence"])
            lines.append(line)
        return width, height, lines


class EasyOCRLineEngine:
    name = "easyocr"

    def __init__(self, langs: list[str]):
        try:
            import easyocr
        except ImportError as exc:
            raise AdapterError(
                "the easyocr engine requires the 'easyocr' package "
                "(pip install 'ocr-adapters[engines]')"
            ) from exc
        self.version = getattr(easyocr, "__version__", "unknown")
        self._reader = easyocr.Reader(langs)

    def detect(self, image: Path) -> tuple[int, int, list[dict]]:
        width, height = image_size(image)
        lines = []
        for quad, text, confidence in self._reader.readtext(str(image)):
            lines.append(
                {
                    "text": text,
                    "bbox": quad_to_rect(quad),
                    "confidence": max(0.0, min(1.0, float(confidence))),
                }
            )
        return width, height, lines


def run(input_dir: str | Path, out_path: str | Path, engine) -> tuple[int, list[dict]]:
    rows, skipped = [], []
    for image in discover_images(input_dir):
        try:
            width, height, lines = engine.detect(image)
        except EngineFailure as exc:
            skipped.append({"file": image.name, "error": str(exc)})
            continue
        rows.append(
            {
                "image_id": image.stem,
                "width": width,
                "height": height,
                "lines": [line for line in lines if line["text"].strip()],
            }
        )
    atomic_write(out_path, ndjson(rows))
    write_manifest(out_path, engine.name, engine.version, input_dir, len(rows), skipped)
    return len(rows), skipped


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dump-lines", description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="input", required=True, help="directory of images")
    ap.add_argument("--out", required=True, help="lines interchange file (NDJSON)")
    ap.add_argument("--engine", choices=["easyocr", "stub"], default="easyocr")
    ap.add_argument("--langs", default="en,ch_sim", help="easyocr language codes, comma-separated")
    args = ap.parse_args(argv)
    try:
        if args.engine == "stub":
            engine = StubLineEngine()
        else:
            engine = EasyOCRLineEngine([l.strip() for l in args.langs.split(",") if l.strip()])
        count, skipped = run(args.input, args.out, engine)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"records={count} skipped={len(skipped)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
