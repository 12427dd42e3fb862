from __future__ import annotations

import numpy as np
import pytest


def smooth_direction_field(q: np.ndarray) -> np.ndarray:
    """Band-limited RGB intensity as a function of unit direction.

    Used wherever a test needs the same scene content expressed both as a
    panorama and as analytically sampled cube faces.
    """
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    r = 0.5 + 0.25 * np.sin(3.0 * np.arctan2(x, z)) * np.cos(2.0 * np.arcsin(np.clip(y, -1, 1)))
    g = 0.5 + 0.3 * x * z + 0.1 * np.cos(4.0 * y)
    b = 0.5 + 0.2 * np.sin(2.0 * x + 1.0) * np.sin(2.0 * z)
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def render_smooth_pano(height: int, width: int) -> np.ndarray:
    from cubefield.geometry import erp_pixel_to_sphere

    cols = np.arange(width) + 0.5
    rows = np.arange(height) + 0.5
    m, n = np.meshgrid(cols, rows, indexing="xy")
    q = erp_pixel_to_sphere(np.stack([m, n], axis=-1), height, width)
    return smooth_direction_field(q)


@pytest.fixture(scope="session")
def smooth_pano_512():
    return render_smooth_pano(512, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
