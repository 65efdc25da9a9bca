import numpy as np
import pytest

from depthedit_adapter import AdapterOracle


def grid_image(size=128, seed=0):
    """Smooth deterministic test image aligned to the 8-bit grid."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.stack([
        0.5 + 0.3 * np.sin(xx / 9 + seed),
        0.5 + 0.3 * np.cos(yy / 11 + 2 * seed),
        0.5 + 0.2 * np.sin((xx + yy) / 13 + seed),
    ], axis=-1).astype(np.float32)
    return np.round(np.clip(img, 0, 1) * 255) / 255


def box_mask(size=128, lo=40, hi=90):
    mask = np.zeros((size, size), dtype=bool)
    mask[lo:hi, lo - 10:hi - 10] = True
    return mask


@pytest.fixture(scope="session")
def adapter():
    return AdapterOracle()
