import numpy as np
import pytest
from hypothesis import settings

from slotgoal.geometry import CameraModel, Intrinsics, RigidTransform
from slotgoal.scene import CATEGORIES, generate_scene

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")


def random_pose(rng) -> RigidTransform:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    r = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    return RigidTransform(r, rng.uniform(-2, 2, size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def simple_k():
    return Intrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


@pytest.fixture
def identity_cam(simple_k):
    return CameraModel(simple_k, RigidTransform.identity(), "head")


@pytest.fixture(scope="session")
def scenes():
    """Two scenes per category, shared across tests."""
    return {c: [generate_scene(c, v, 11) for v in (1, 2)] for c in CATEGORIES}


def pytest_terminal_summary(terminalreporter):
    lines = [
        value
        for reports in terminalreporter.stats.values()
        for rep in reports
        if getattr(rep, "when", None) == "call"
        for name, value in getattr(rep, "user_properties", ())
        if name == "acceptance"
    ]
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
