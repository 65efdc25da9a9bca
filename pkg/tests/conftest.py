import numpy as np
import pytest

from depthedit.geometry import CameraIntrinsics, DepthMap


def smooth_texture(height, width, seed=0, channels=3):
    """Band-limited random texture; resamples with little bilinear loss."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.zeros((height, width, channels))
    for c in range(channels):
        val = np.full((height, width), 0.5)
        for _ in range(6):
            fx = rng.uniform(0.5, 4.0) / width
            fy = rng.uniform(0.5, 4.0) / height
            phase = rng.uniform(0, 2 * np.pi)
            val += rng.uniform(0.03, 0.08) * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
        img[..., c] = val
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def centered_square_mask(height, width, half):
    mask = np.zeros((height, width), dtype=bool)
    cy, cx = height // 2, width // 2
    mask[cy - half:cy + half, cx - half:cx + half] = True
    return mask


@pytest.fixture
def cam512():
    return CameraIntrinsics(fx=512.0, fy=512.0, cx=255.5, cy=255.5, width=512, height=512)


@pytest.fixture
def cam256():
    return CameraIntrinsics(fx=256.0, fy=256.0, cx=127.5, cy=127.5, width=256, height=256)


def flat_depth(cam, value=2.0):
    return DepthMap(values=np.full((cam.height, cam.width), value, dtype=np.float32),
                    intrinsics=cam)
