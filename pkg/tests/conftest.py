import numpy as np
import pytest

from config.settings import Settings
from network.clothsim import TactileSequence, make_item
from network.geometry import GripCandidate, WorldHeightMap


@pytest.fixture
def small_settings():
    # 0.3m 桌面 + 160x132 相机，地面分辨率约 3mm/像素
    return Settings().override(
        scene__table_extent=0.3,
        camera__width=160, camera__height=132,
        camera__fx=200.0, camera__fy=200.0, camera__cx=80.0, camera__cy=66.0,
        camera__mount_height=0.6,
    )


@pytest.fixture
def item():
    return make_item(0, 0)


@pytest.fixture
def items():
    return [make_item(i, 0) for i in range(20)]


def ridge_heightmap(size=300, mpp=0.001, height=0.02, sigma_px=3.0, column=None, base=0.001):
    """沿 y 方向的一条高斯褶皱"""
    column = size // 2 if column is None else column
    cols = np.arange(size, dtype=np.float64)
    profile = base + height * np.exp(-(cols - column) ** 2 / (2 * sigma_px ** 2))
    return WorldHeightMap(np.tile(profile, (size, 1)), mpp)


@pytest.fixture
def ridge_map():
    return ridge_heightmap()


def contact_sequence(means, shape=(48, 64), item_id='item000', valid_contact=True):
    """每帧中心 16x16 区域取给定形变值，其余为 0"""
    frames = []
    for m in means:
        frame = np.zeros(shape)
        frame[16:32, 24:40] = m
        frames.append(frame)
    forces = np.linspace(0.0, 1.0, len(means))
    return TactileSequence.from_arrays(frames, forces, item_id, valid_contact)


def candidate_at(x, y, z=0.01, direction=0.0, level=0, response=0.01):
    return GripCandidate(float(x), float(y), float(z), float(direction), level, float(response))
