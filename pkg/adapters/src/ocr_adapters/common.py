"""Shared plumbing: image discovery, quad collapse, atomic writes, manifests."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}


class AdapterError(RuntimeError):
    """Fatal configuration or environment problem; scripts exit nonzero."""


class EngineFailure(Exception):
    """Per-file engine failure; the file is skipped and logged in the manifest."""


def discover_images(directory: str | Path) -> list[Path]:
    """Image files in the directory, sorted by name; stems become image ids.

    Raises:
        AdapterError: directory missing, or two files share a stem (which
            would collide in the interchange file).
    """
    root = Path(directory)
    if not root.is_dir():
        raise AdapterError(f"input directory not found: {root}")
    images = sorted(
        p for p in root.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    seen: dict[str, Path] = {}
    for path in images:
        if path.stem in seen:
            raise AdapterError(
                f"image id collision: {seen[path.stem].name} and {path.name} share a stem"
            )
        seen[path.stem] = path
    return images


def json_num(value: float) -> int | float:
    """Integral coordinates render as integers, matching the interchange's canonical form."""
    value = float(value)
    return int(value) if value.is_integer() else value


def rect(values: Sequence[float]) -> list[int | float]:
    return [json_num(v) for v in values]


def quad_to_rect(points: Sequence[Sequence[float]]) -> list[int | float]:
    """Axis-aligned bounding rectangle [x1, y1, x2, y2] of a point polygon."""
    if not points:
        raise EngineFailure("empty point list for a detection quadrilateral")
    xs, ys = [], []
    for pt in points:
        if len(pt) != 2 or not all(isinstance(v, (int, float)) for v in pt):
            raise EngineFailure(f"malformed quadrilateral point: {pt!r}")
        xs.append(float(pt[0]))
        ys.append(float(pt[1]))
    return rect([min(xs), min(ys), max(xs), max(ys)])


def image_size(path: Path) -> tuple[int, int]:
    """(width, height) of an image file via Pillow."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            return img.size
    except (OSError, UnidentifiedImageError) as exc:
        raise EngineFailure(f"unreadable image: {exc}") from exc


def load_sidecar(path: Path) -> Any:
    """Parse a JSON sidecar; any problem is a per-file engine failure."""
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise EngineFailure(f"missing sidecar {path.name}") from None
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise EngineFailure(f"bad sidecar {path.name}: {exc}") from exc


def ndjson(rows: Iterable[dict]) -> bytes:
    return "".join(
        json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n" for row in rows
    ).encode("utf-8")


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def write_manifest(
    out_path: str | Path,
    engine: str,
    version: str,
    input_dir: str | Path,
    record_count: int,
    skipped: list[dict],
    **extra: Any,
) -> Path:
    """Write <out>.manifest.json next to the output file; returns its path."""
    out_path = Path(out_path)
    manifest = {
        "engine": engine,
        "version": version,
        "input": str(input_dir),
        "output": out_path.name,
        "record_count": record_count,
        "skipped": skipped,
        **extra,
    }
    path = out_path.with_name(out_path.name + ".manifest.json")
    atomic_write(path, (json.dumps(manifest, ensure_ascii=False, indent=2) + "\n").encode("utf-8"))
    return path
