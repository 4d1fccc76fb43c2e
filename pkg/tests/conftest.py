"""Shared fixtures: canonical demo models and the bundled data directory."""

from __future__ import annotations

from pathlib import Path

import pytest

from multipath.models import greedy_trap_lm
from multipath.toydata import make_digit_dataset, make_digit_model

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def trap_model():
    return greedy_trap_lm()


@pytest.fixture(scope="session")
def digit_model():
    return make_digit_model(100)


@pytest.fixture(scope="session")
def digit_dataset():
    return make_digit_dataset(100)


@pytest.fixture(scope="session")
def small_digit_model():
    return make_digit_model(10)


@pytest.fixture(scope="session")
def small_digit_dataset():
    return make_digit_dataset(10)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR
