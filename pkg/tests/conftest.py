from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from choreo import textio

FIXTURES = Path(
    os.environ.get("CHOREO_FIXTURES", Path(__file__).parent.parent / "src" / "choreo" / "fixtures")
)


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text()


def load_program(name: str) -> textio.Program:
    return textio.parse_program(fixture_text(name))


def load_expect(name: str) -> dict:
    return json.loads(fixture_text(name))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
