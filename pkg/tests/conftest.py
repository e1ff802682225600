from __future__ import annotations

from pathlib import Path

import pytest

from helpers import fixture_sources

GOLDEN_DIR = Path(__file__).resolve().parent / "golden"

_FIXTURES = fixture_sources()


@pytest.fixture(scope="session")
def all_fixtures() -> list[tuple[str, str]]:
    return _FIXTURES


def fixture_ids() -> list[str]:
    return [name for name, _ in _FIXTURES]


def fixture_source(name: str) -> str:
    for fixture_name, source in _FIXTURES:
        if fixture_name == name:
            return source
    raise KeyError(name)
