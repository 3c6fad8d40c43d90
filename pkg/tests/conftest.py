from __future__ import annotations

import numpy as np
import pytest

from auxetic_tensegrity.scene import load_bundled


def clasp_points(theta: float = np.pi / 2, radius: float = 0.25, arm: float = 1.0) -> np.ndarray:
    """Symmetric orthogonal clasp whose filaments bend by ``theta``.

    Filament 1 lies in the xz-plane at height ``radius`` and wraps down over
    filament 2, which is the same shape mirrored to ``-radius`` and turned by
    90 degrees about z.  The side length is ``2 r sin(theta / 2)``.
    """
    s = radius * np.sin(theta / 2)
    c, d = np.cos(theta / 2), np.sin(theta / 2)
    top = np.array(
        [
            [-s - arm * c, 0.0, radius - arm * d],
            [-s, 0.0, radius],
            [s, 0.0, radius],
            [s + arm * c, 0.0, radius - arm * d],
        ]
    )
    bottom = top[:, [1, 0, 2]] * np.array([1.0, 1.0, -1.0])
    return np.stack([top, bottom])


@pytest.fixture(scope="session")
def honeycomb():
    return load_bundled("honeycomb")


@pytest.fixture(scope="session")
def honeycomb_system(honeycomb):
    return honeycomb.system()


@pytest.fixture(scope="session")
def clasp_scene():
    return load_bundled("single_clasp")


@pytest.fixture(scope="session")
def clasp_system(clasp_scene):
    return clasp_scene.system()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
