import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from asglimits.core import ModelParams, PimParams  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def uniform_pim():
    """theta=2, Q=(1/2, 1/2): stationary law is uniform on [0, 1]."""
    return PimParams(2.0, (0.5, 0.5))


@pytest.fixture
def asym_two_type():
    """Neutral, parent dependent, stationary law Beta(0.2, 0.1)."""
    return ModelParams.create(1.0, [[0.9, 0.1], [0.2, 0.8]])


@pytest.fixture
def three_type():
    return ModelParams.create(
        1.7, [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]]
    )


@pytest.fixture
def selected_pim():
    return ModelParams.create(1.0, [[0.5, 0.5], [0.5, 0.5]], [-0.5, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
