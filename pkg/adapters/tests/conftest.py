import subprocess
import sys

import pytest
from PIL import Image


@pytest.fixture
def primary_check():
    """Validate an interchange file through the toolkit CLI (subprocess only)."""

    def _check(kind, path):
        return subprocess.run(
            [sys.executable, "-m", "patimt", "check", "--kind", kind, "--in", str(path)],
            capture_output=True,
            text=True,
        )

    return _check


@pytest.fixture
def write_image(tmp_path):
    def _write(name, size=(64, 48)):
        path = tmp_path / name
        Image.new("RGB", size, color=(220, 220, 220)).save(path)
        return path

    return _write
