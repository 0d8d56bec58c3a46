import numpy as np
import pytest

from tssw.bench import load_face_layout


def bspline_oracle(u):
    """Uniform cubic B-spline segments written out in closed form."""
    return np.array([
        (1 - u) ** 3 / 6,
        (3 * u ** 3 - 6 * u ** 2 + 4) / 6,
        (-3 * u ** 3 + 3 * u ** 2 + 3 * u + 1) / 6,
        u ** 3 / 6,
    ])


def surface_oracle(values, point, scale):
    """Double sum over the 4x4 stencil, 1-based lattice indexing."""
    xh = scale * (point[0] - 1) + 1
    yh = scale * (point[1] - 1) + 1
    ik, jk = int(np.floor(xh)), int(np.floor(yh))
    bu = bspline_oracle(xh - ik)
    bv = bspline_oracle(yh - jk)
    total = 0.0
    for i in range(4):
        for j in range(4):
            total += bu[i] * bv[j] * values[ik + i - 1, jk + j - 1]
    return total


def random_points(rng, K, M, N):
    return np.column_stack([rng.uniform(1, M, K), rng.uniform(1, N, K)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def face512():
    return 1 + load_face_layout() * 511


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
