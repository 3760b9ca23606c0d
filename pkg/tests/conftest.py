import numpy as np
import pytest

from silhouette3d.camera import CameraModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cam():
    return CameraModel.scaled(32)
