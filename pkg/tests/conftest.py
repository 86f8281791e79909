import os
from pathlib import Path

import pytest

from crashscope.appmodel import load_app_model

FIXTURES = Path(__file__).parent / "fixtures" / "models"
GOLDEN = Path(__file__).parent / "golden"

# Set CRASHSCOPE_UPDATE_GOLDEN=1 to rewrite golden files instead of comparing.
UPDATE_GOLDEN = os.environ.get("CRASHSCOPE_UPDATE_GOLDEN") == "1"

# Seeded one-crash corpus: fixture file -> crash class.
CORPUS = {
    "notes_tap.json": "tap",
    "calc_tap.json": "tap",
    "tip_text.json": "text",
    "contacts_text.json": "text",
    "schedule_net.json": "network",
    "feed_net.json": "network",
    "maps_gps.json": "gps",
    "weather_gps.json": "gps",
    "player_rot.json": "rotation",
    "quiz_rot.json": "rotation",
    "compass_sensor.json": "sensor",
}


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def load(name: str):
    return load_app_model(FIXTURES / name)


def check_golden(name: str, actual: str) -> None:
    path = GOLDEN / name
    if UPDATE_GOLDEN or not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(actual, encoding="utf-8")
        if not UPDATE_GOLDEN:
            pytest.fail(f"golden file {name} was missing and has been written; review it and rerun")
        return
    assert actual == path.read_text(encoding="utf-8"), f"output differs from golden file {name}"


@pytest.fixture
def minimal():
    return load("minimal.json")
