"""dump-embeddings: encode images and label prompts → embedding interchange.

Requires a label config (JSON) shaped like
{"templates": ["a photo of a {}.", ...],
 "classes": {"poster": ["movie poster", ...], ...}}:
each class text is expanded through every template and encoded, giving one
vectors-row per template. Image files in --in are encoded one vector each.
All vectors are unit-normalized.

Engines:
  clip — encodes with a CLIP checkpoint via transformers
         (requires the 'engines' extra; --model picks the checkpoint).
  stub — deterministic hash-seeded vectors (no model, content-independent);
         useful for pipeline tests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .common import (
    AdapterError,
    EngineFailure,
    atomic_write,
    discover_images,
    write_manifest,
)


def load_label_config(path: str | Path) -> tuple[list[str], dict[str, list[str]]]:
    """(templates, {superclass: [label texts]}) from the config file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise AdapterError(f"label config not found: {path}") from None
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise AdapterError(f"bad label config {path}: {exc}") from exc
    templates = doc.get("templates") if isinstance(doc, dict) else None
    classes = doc.get("classes") if isinstance(doc, dict) else None
    if (
        not isinstance(templates, list)
        or not templates
        or not all(isinstance(t, str) and "{}" in t for t in templates)
        or not isinstance(classes, dict)
        or not classes
        or not all(
            isinstance(texts, list) and texts and all(isinstance(t, str) and t for t in texts)
            for texts in classes.values()
        )
    ):
        raise AdapterError(
            f"label config {path} must have non-empty 'templates' (each containing {{}}) "
            "and 'classes' mapping superclass -> non-empty list of label texts"
        )
    return templates, classes


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise EngineFailure("encoder produced a zero vector")
    return vec / norm


class StubEncoder:
    name = "stub"
    version = "builtin-1"

    def __init__(self, dim: int):
        if dim < 1:
            raise AdapterError("--dim must be a positive integer")
        self.dim = dim

    def _hashed(self, key: str) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")
        return _unit(np.random.default_rng(seed).standard_normal(self.dim))

    def encode_text(self, text: str) -> np.ndarray:
        return self._hashed(f"text:{text}")

    def encode_image(self, path: Path) -> np.ndarray:
        return self._hashed(f"image:{path.stem}")


class ClipEncoder:
    def __init__(self, model_id: str):
        try:
            import torch  # noqa: F401
            import transformers
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise AdapterError(
                "the clip engine requires the 'transformers' and 'torch' packages "
                "(pip install 'ocr-adapters[engines]')"
            ) from exc
        self.name = f"clip:{model_id}"
        self.version = f"transformers-{transformers.__version__}"
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:  # model resolution/download failures are fatal
            raise AdapterError(f"could not load CLIP checkpoint {model_id!r}: {exc}") from exc
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)

    def encode_text(self, text: str) -> np.ndarray:
        import torch

        inputs = self._processor(text=[text], return_tensors="pt", padding=True, truncation=True)
        with torch.no_grad():
            features = self._model.get_text_features(**inputs)
        return _unit(features[0].numpy().astype(float))

    def encode_image(self, path: Path) -> np.ndarray:
        import torch
        from PIL import Image, UnidentifiedImageError

        try:
            with Image.open(path) as img:
                inputs = self._processor(images=img.convert("RGB"), return_tensors="pt")
        except (OSError, UnidentifiedImageError) as exc:
            raise EngineFailure(f"unreadable image: {exc}") from exc
        with torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return _unit(features[0].numpy().astype(float))


def run(
    input_dir: str | Path, out_path: str | Path, labels_path: str | Path, encoder
) -> tuple[int, int, list[dict]]:
    templates, classes = load_label_config(labels_path)
    label_entries = []
    for superclass, texts in classes.items():
        for text in texts:
            vectors = [encoder.encode_text(tpl.format(text)).tolist() for tpl in templates]
            label_entries.append({"text": text, "superclass": superclass, "vectors": vectors})
    images, skipped = [], []
    for image in discover_images(input_dir):
        try:
            vector = encoder.encode_image(image).tolist()
        except EngineFailure as exc:
            skipped.append({"file": image.name, "error": str(exc)})
            continue
        images.append({"image_id": image.stem, "vector": vector})
    doc = {"dim": encoder.dim, "labels": label_entries, "images": images}
    atomic_write(out_path, (json.dumps(doc, ensure_ascii=False) + "\n").encode("utf-8"))
    text_vectors = len(label_entries) * len(templates)
    write_manifest(
        out_path,
        encoder.name,
        encoder.version,
        input_dir,
        len(images),
        skipped,
        image_vectors=len(images),
        text_vectors=text_vectors,
    )
    return len(images), text_vectors, skipped


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dump-embeddings", description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="input", required=True, help="directory of images")
    ap.add_argument("--out", required=True, help="embedding interchange file (JSON)")
    ap.add_argument("--labels", required=True, help="label/template config (JSON)")
    ap.add_argument("--engine", choices=["clip", "stub"], default="clip")
    ap.add_argument("--model", default="openai/clip-vit-large-patch14", help="CLIP checkpoint id")
    ap.add_argument("--dim", type=int, default=768, help="vector size for the stub engine")
    args = ap.parse_args(argv)
    try:
        encoder = StubEncoder(args.dim) if args.engine == "stub" else ClipEncoder(args.model)
        n_images, n_text, skipped = run(args.input, args.out, args.labels, encoder)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"records={n_images} text_vectors={n_text} skipped={len(skipped)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
