import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cosharp import Disc, FanBeamGeometry, ImageGrid, build_dictionary, build_fan_projector  # noqa: E402
from cosharp.shapes import default_lattice  # noqa: E402

_VERDICTS: list[str] = []


def record_verdict(line: str):
    _VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_problem():
    """16x16 grid, oblique 64-detector fan, 5-pixel discs on every centre."""
    grid = ImageGrid(n_x=16, n_y=16)
    geom = FanBeamGeometry.facing(n_detectors=64, angle=np.pi / 6)
    A = build_fan_projector(grid, geom)
    disc = Disc(0.07)
    D = build_dictionary([disc], default_lattice(disc, grid), [0.0], grid)
    return grid, geom, A, D
