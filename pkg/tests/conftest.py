import numpy as np
import pytest

from cosserat_lab.grid import make_domain, rigid_base_field


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit(rng, k):
    q = rng.normal(size=(k, 3))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_tangent(rng, q):
    v = rng.normal(size=q.shape)
    return v - np.sum(v * q, axis=-1, keepdims=True) * q


@pytest.fixture(scope="session")
def ball16():
    return make_domain("ball", 1 / 16, center=(0, 0, 0), radius=1.0)


@pytest.fixture(scope="session")
def rigid_ball16(ball16):
    return rigid_base_field(ball16, dirichlet_boundary=True)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
