import numpy as np
import pytest

from visrec.media import FrameBuffer, FrameStream


def solid_frame(color, width=16, height=16) -> FrameBuffer:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:, :] = color
    return FrameBuffer(px)


def random_frame(rng, width=32, height=32) -> FrameBuffer:
    return FrameBuffer(rng.integers(0, 256, size=(height, width, 3)).astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def red_blue_stream():
    red = solid_frame((255, 0, 0))
    blue = solid_frame((0, 0, 255))
    return FrameStream([red] * 10 + [blue] * 10, frame_rate=24.0)
