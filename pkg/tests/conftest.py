import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from starcomp.channel import generate_channels
from starcomp.scenario import build_geometry, desk_config, make_rng

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def figure_config(**changes):
    """Desk-scale scenario with the SNR quoted against 20 dBm."""
    return desk_config(snr_reference_dbm=20.0, **changes)


def channels_for(config, seed=0, stream=0):
    return generate_channels(config, build_geometry(config), make_rng(seed, stream))


@pytest.fixture
def cfg():
    return figure_config()


@pytest.fixture
def ch(cfg):
    return channels_for(cfg, seed=3)


# One PASS/FAIL line per acceptance criterion, printed after the test run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
