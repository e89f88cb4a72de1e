import sys

import numpy as np
import pytest

from pshexhaust.regularize import CutoffKit
from pshexhaust.space_measure import GaussianSpec


@pytest.fixture(scope="session")
def spec2():
    return GaussianSpec.default(2)


@pytest.fixture(scope="session")
def spec3():
    return GaussianSpec.default(3)


@pytest.fixture(scope="session")
def kit2(spec2):
    return CutoffKit.build(spec2, 200_000)


@pytest.fixture(scope="session")
def kit3(spec3):
    return CutoffKit.build(spec3, 200_000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_points(rng, count, n, scale=1.0):
    return scale * (rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n)))


def ball_points(rng, count, n, radius):
    """Uniform-ish points strictly inside the ball of the given radius."""
    Z = random_points(rng, count, n)
    r = np.linalg.norm(Z, axis=1, keepdims=True)
    u = rng.uniform(0, 1, size=(count, 1)) ** (1 / (2 * n))
    return radius * u * Z / r


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        passed, detail = results[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if passed else 'FAIL'}  {detail}")
