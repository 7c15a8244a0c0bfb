import json

import pytest

from ocr_adapters.blocks import collapse_kind, main


def read_rows(path):
    return [json.loads(row) for row in path.read_bytes().decode().splitlines()]


def read_manifest(out):
    return json.loads(out.with_name(out.name + ".manifest.json").read_text())


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("title", "text"),
        ("plain_text", "text"),
        ("Header", "text"),
        ("figure_caption", "text"),
        ("table_caption", "text"),
        ("table", "table"),
        ("figure", "image"),
        ("img", "image"),
        ("isolate_formula", "other"),
        ("abandon", "other"),
    ],
)
def test_collapse_kind(raw, expected):
    assert collapse_kind(raw) == expected


def test_stub_blocks_validate_via_primary(tmp_path, write_image, primary_check):
    image = write_image("page.png")
    image.with_name("page.layout.json").write_text(
        json.dumps(
            {
                "width": 800,
                "height": 600,
                "blocks": [
                    {"kind": "title", "bbox": [10, 10, 400, 40], "text": "A Heading"},
                    {"kind": "figure", "quad": [[0, 50], [300, 55], [300, 200], [0, 195]]},
                    {"kind": "table", "bbox": [10, 220, 500, 400]},
                    {"kind": "isolate_formula", "bbox": [10, 420, 200, 460]},
                ],
            }
        )
    )
    out = tmp_path / "blocks.ndjson"
    assert main(["--in", str(tmp_path), "--out", str(out), "--engine", "stub"]) == 0
    blocks = read_rows(out)[0]["blocks"]
    assert [b["kind"] for b in blocks] == ["text", "image", "table", "other"]
    assert blocks[0]["text"] == "A Heading"
    assert blocks[1]["bbox"] == [0, 50, 300, 200]
    result = primary_check("blocks", out)
    assert result.returncode == 0 and "ok=true" in result.stdout


def test_text_kind_without_text_is_demoted(tmp_path, write_image, primary_check):
    image = write_image("p.png")
    image.with_name("p.layout.json").write_text(
        json.dumps(
            {"width": 100, "height": 100, "blocks": [{"kind": "plain text", "bbox": [0, 0, 5, 5]}]}
        )
    )
    out = tmp_path / "blocks.ndjson"
    assert main(["--in", str(tmp_path), "--out", str(out), "--engine", "stub"]) == 0
    assert read_rows(out)[0]["blocks"][0]["kind"] == "other"
    assert primary_check("blocks", out).returncode == 0


def test_mineru_json_engine(tmp_path, write_image, primary_check):
    image = write_image("doc.png", size=(80, 60))
    image.with_name("doc.content_list.json").write_text(
        json.dumps(
            [
                {"type": "text", "bbox": [1, 2, 30, 12], "text": "hello"},
                {"type": "image", "bbox": [0, 20, 40, 50]},
                {"type": "equation", "bbox": [5, 52, 9, 58]},
                {"type": "text", "text": "no geometry, skipped"},
            ]
        )
    )
    out = tmp_path / "blocks.ndjson"
    rc = main(
        [
            "--in", str(tmp_path), "--out", str(out),
            "--engine", "mineru-json", "--engine-version", "1.3.10",
        ]
    )
    assert rc == 0
    row = read_rows(out)[0]
    assert (row["width"], row["height"]) == (80, 60)
    assert [b["kind"] for b in row["blocks"]] == ["text", "image", "other"]
    manifest = read_manifest(out)
    assert manifest["engine"] == "mineru-json" and manifest["version"] == "1.3.10"
    assert primary_check("blocks", out).returncode == 0


def test_mineru_json_requires_pinned_version(tmp_path, capsys):
    rc = main(["--in", str(tmp_path), "--out", str(tmp_path / "o"), "--engine", "mineru-json"])
    assert rc == 1
    assert "--engine-version" in capsys.readouterr().err
