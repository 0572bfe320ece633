import numpy as np
import pytest

from saltfwi.acquisition import RickerWavelet, SurveyGeometry, line_positions
from saltfwi.grid import GridGeometry, SedimentProfile, VelocityModel
from saltfwi.prior import BlendParams
from saltfwi.propagation import PropagatorConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_setup():
    """30x30 grid, 2 shots, 8 receivers; fast enough for per-test propagation."""
    geom = GridGeometry((30, 30), 10.0)
    profile = SedimentProfile([0.0, 300.0], [1800.0, 2400.0])
    params = BlendParams(profile, 3500.0)
    nt, dt = 300, 1e-3
    w = RickerWavelet(20.0, dt, nt)
    cfg = PropagatorConfig(nt, dt, sponge_width=8)
    sg = SurveyGeometry(line_positions([110.0, 90.0], [190.0, 90.0], 2),
                        line_positions([90.0, 90.0], [210.0, 90.0], 8), geom)
    return dict(geom=geom, profile=profile, params=params, w=w, cfg=cfg, sg=sg)


def layered(geom, v_top=2000.0, v_bottom=2600.0, depth_cell=None):
    depth_cell = geom.dims[-1] // 2 if depth_cell is None else depth_cell
    v = np.full(geom.dims, v_top)
    v[..., depth_cell:] = v_bottom
    return VelocityModel(geom, v)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
