import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from awf3d import make_geometry, make_phantom, make_probes, simulate_measurements  # noqa: E402

# One entry per acceptance criterion, filled by tests/test_acceptance.py.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def phantom16():
    return make_phantom((16, 16, 16), 0)


@pytest.fixture(scope="session")
def desk(phantom16):
    """Noiseless 16^3 phantom seen from 8 views with the default 3x3 probe grid."""
    geom = make_geometry(phantom16.dims, 8, 0.2)
    ms = simulate_measurements(phantom16, geom, make_probes(geom.detector_dims))
    return phantom16, geom, ms
