import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tactile_grasp.calibration import SinusoidBias, train_bias_model
from tactile_grasp.cli import calibration_dataset
from tactile_grasp.config import CalibrationSettings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_RESULTS: list[str] = []


@pytest.fixture(scope="session")
def default_model():
    """Bias model trained exactly as ``tactile-grasp calibrate`` does by default."""
    cal = CalibrationSettings()
    data = calibration_dataset(SinusoidBias.default(), cal, cal.train.seed)
    model, report = train_bias_model(data, cal.train)
    return model, report


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
