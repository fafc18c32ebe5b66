"""Shared fixtures: seeded generators, calibrations and the synthetic stereo scene."""
import numpy as np
import pytest

from vr3dense.config import RoiConfig, RunConfig
from vr3dense.kitti_io import Calibration, parse_calib
from vr3dense.synthetic import make_stereo_scene

IDENTITY_CALIB_TEXT = """P2: 100 0 50 0 0 100 50 0 0 0 1 0
P3: 100 0 50 -54 0 100 50 0 0 0 1 0
R0_rect: 1 0 0 0 1 0 0 0 1
Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0
"""


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def roi() -> RoiConfig:
    return RoiConfig()


@pytest.fixture
def run_config() -> RunConfig:
    return RunConfig()


@pytest.fixture
def calib_text() -> str:
    return IDENTITY_CALIB_TEXT


@pytest.fixture
def identity_calib() -> Calibration:
    return parse_calib(IDENTITY_CALIB_TEXT)


@pytest.fixture(scope="session")
def scene():
    return make_stereo_scene()
