from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings
from scipy import ndimage

from ipt.channel import ScreenGeometry
from ipt.imaging import ColorSpace, ImagePlane
from ipt.tagmap import TagMapConfig, builtin_family, generate_map

settings.register_profile("ipt", deadline=None, max_examples=60)
settings.load_profile("ipt")


def texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Multi-scale smoothed noise on 0..255, float32."""
    t = np.zeros((h, w))
    for sigma, amp in ((0.7, 0.3), (2.0, 1.0), (6.0, 1.5)):
        t += amp * ndimage.gaussian_filter(rng.normal(size=(h, w)), sigma)
    t = (t - t.min()) / (t.max() - t.min()) * 255.0
    return t.astype(np.float32)


def random_srgb(rng: np.random.Generator, h: int, w: int) -> ImagePlane:
    return ImagePlane(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8), ColorSpace.SRGB8)


@pytest.fixture(scope="session")
def family():
    return builtin_family("tag36h11")


@pytest.fixture(scope="session")
def map_config():
    return TagMapConfig()


@pytest.fixture(scope="session")
def tag_map(map_config):
    return generate_map(map_config)


@pytest.fixture(scope="session")
def screen(map_config):
    return ScreenGeometry(map_config.ratio_x * map_config.map_width, map_config.ratio_y * map_config.map_height)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
