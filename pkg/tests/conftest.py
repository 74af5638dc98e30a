import numpy as np
import pytest
from hypothesis import settings

from carmtomo.data import VoxelGrid
from carmtomo.geometry import CArmGeometry, view_angles

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_geom(n_views=5, span=40.0, nu=32, nv=24, pitch=0.24, d=440.0):
    return CArmGeometry(d, tuple(view_angles(n_views, span)), nu, nv, pitch)


@pytest.fixture
def small_geom():
    return make_geom()


@pytest.fixture
def small_grid():
    return VoxelGrid.centered((12, 10, 8), 0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE = {}


def record(number, title, ok, detail=""):
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" | {detail}" if detail else "")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
