import numpy as np
import pytest

from dsflow.mesh import generate_distorted_grid, uniform_grid

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda t: int(t.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def square4():
    return uniform_grid(4, 4)


@pytest.fixture(scope="session")
def distorted():
    return generate_distorted_grid(6, 5, distortion_fraction=0.25, rng_seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_convex_quads(rng, n):
    """``n`` random strictly convex quads (n, 4, 2), ccw, of unit-ish size."""
    out = []
    while len(out) < n:
        ang = np.sort(rng.uniform(0, 2 * np.pi, 4))
        gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
        if gaps.max() > 0.8 * np.pi or gaps.min() < 0.25:
            continue
        rad = rng.uniform(0.6, 1.0, 4)
        q = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        e = np.roll(q, -1, axis=0) - q
        f = np.roll(e, -1, axis=0)
        cross = e[:, 0] * f[:, 1] - e[:, 1] * f[:, 0]
        if cross.min() > 0.05:
            out.append(q + rng.uniform(-2, 2, 2))
    return np.array(out)
