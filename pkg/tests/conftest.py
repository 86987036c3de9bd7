import numpy as np
import pytest

from crowdtwin.points import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_full_cloud(rng, n):
    """Canonical full-schema cloud with valid domains."""
    return PointCloud.from_positions(
        rng.normal(scale=10.0, size=(n, 3)).astype(np.float32),
        color=rng.integers(0, 256, (n, 4)),
        confidence=rng.integers(0, 3, (n, 1)),
        depth=rng.uniform(0.0, 8.0, (n, 1)).astype(np.float32),
        orientation=rng.normal(size=(n, 3)).astype(np.float32),
        angular_velocity=rng.normal(size=(n, 3)).astype(np.float32),
        device_position=rng.normal(scale=10.0, size=(n, 3)).astype(np.float32),
    )


@pytest.fixture
def full_cloud(rng):
    return random_full_cloud(rng, 64)
