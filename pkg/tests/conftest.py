import functools
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from agechemostat import ModelParams, TriangularBirth, preset, run_experiment, triangular_birth_gain  # noqa: E402

GAIN = triangular_birth_gain(0.1, 1.0)


def reference_model(h=0.04):
    return ModelParams(A=2.0, h=h, mu=0.1, k=TriangularBirth(GAIN)).with_equilibrium()


@pytest.fixture(scope="session")
def model():
    return reference_model()


@functools.lru_cache(maxsize=None)
def preset_run(name, kind, t_end=None):
    return run_experiment(preset(name), kind=kind, t_end=t_end)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[n])
