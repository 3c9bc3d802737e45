"""Shared fixtures for the Spray Metrizer test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tools.metrizability_tool import TestConfig
from tools.spray_geometry_tool import Spray

SCENARIO_DIR = Path(__file__).parent / "data" / "scenarios"


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture
def flat2d() -> Spray:
    return Spray.flat(2)


@pytest.fixture
def degenerate_spray() -> Spray:
    """G^1 = y1 y2, G^2 = -(y2)^2 / 2 on y2 > 0."""
    return Spray.from_texts(["y1*y2", "0 - 0.5*y2^2"], domain="y2", label="degenerate2d")


@pytest.fixture
def nonmetrizable_spray() -> Spray:
    return Spray.from_texts(["0.5*(y1^2 + y2^2)", "2*y1*y2"], label="nonmetrizable2d")


@pytest.fixture
def shen_spray() -> Spray:
    return Spray.from_texts(["0.5*x2*y1^2", "0 - 0.5*x1*y2^2"], label="shen_ricciflat")


@pytest.fixture
def affine_half_spray() -> Spray:
    return Spray.from_texts(
        ["0 - y1^2/(x1 + x2)", "0 - y2^2/(x1 + x2)"],
        domain="y1 + y2 - abs(y1 - y2)",
        label="affine2d_g[half]",
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240101)


@pytest.fixture
def default_config() -> TestConfig:
    return TestConfig()
