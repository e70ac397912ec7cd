import numpy as np
import pytest

from pulse_hunter.model import FAYE, compute_landscape, firing_rate_sigmoid
from pulse_hunter.shoot import ShotConfig, find_c0_star, find_speeds

EPS, C1 = 0.005, 0.34


@pytest.fixture(scope="session")
def params():
    return FAYE


@pytest.fixture(scope="session")
def S(params):
    return firing_rate_sigmoid(params)


@pytest.fixture(scope="session")
def landscape(params, S):
    return compute_landscape(params, S)


@pytest.fixture(scope="session")
def cfg():
    return ShotConfig()


@pytest.fixture(scope="session")
def c0(params, landscape, cfg):
    return find_c0_star(params, landscape, None, cfg)


@pytest.fixture(scope="session")
def speeds(params, landscape, cfg, c0):
    return find_speeds(EPS, C1, params, landscape, None, cfg, c0=c0)


@pytest.fixture(scope="session")
def curve(params, landscape, cfg):
    from pulse_hunter.singular import speed_curve
    return speed_curve(params, landscape, None, cfg, 512)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in lines:
            terminalreporter.write_line(ln)
