from __future__ import annotations

import sys
import warnings
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def noiseless_segment():
    from trackid.simulator import ScenarioConfig, generate
    return generate(ScenarioConfig.noiseless(frames=600, seed=3))


@pytest.fixture(scope="session")
def noisy_segment():
    from trackid.simulator import ScenarioConfig, generate
    return generate(ScenarioConfig(frames=900, seed=11))


@pytest.fixture(scope="session")
def noisy_model():
    from trackid.config import RunConfig
    from trackid.pipeline import fit_model
    from trackid.simulator import ScenarioConfig, generate
    train = generate(ScenarioConfig(frames=1500, seed=101))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_model(train.annotations, train.trace, RunConfig())


@pytest.fixture(scope="session")
def noiseless_model(noiseless_segment):
    from trackid.config import RunConfig
    from trackid.pipeline import fit_model
    seg = noiseless_segment
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_model(seg.annotations, seg.trace, RunConfig())


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
