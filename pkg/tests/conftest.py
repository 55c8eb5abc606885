import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from contactfie.datagen import hopper_dataset, hopper_model  # noqa: E402
from contactfie.model import model_from_dict  # noqa: E402


def particle_doc(gravity=(0.0, -9.81), m=1.0, iz=0.1, mu=0.7):
    return {"links": [{"name": "p", "parent": -1, "inertia": {"m": m, "Iz": iz}}],
            "contacts": [{"link": 0, "point": [0.0, 0.0], "mu": mu}],
            "gravity": list(gravity), "actuated": []}


def arm_doc():
    """Floating base with a revolute and a prismatic joint, offsets and two contacts."""
    return {
        "links": [
            {"name": "base", "parent": -1, "offset": {"xy": [0.05, -0.02], "angle": 0.1},
             "inertia": {"m": 3.0, "hx": 0.15, "hy": -0.06, "Iz": 0.2}},
            {"name": "thigh", "parent": 0, "joint": {"type": "revolute", "axis": [1.0]},
             "offset": {"xy": [0.1, -0.05], "angle": -0.3},
             "inertia": {"m": 1.0, "hx": 0.02, "hy": -0.15, "Iz": 0.05}},
            {"name": "shin", "parent": 1, "joint": {"type": "prismatic", "axis": [0.2, -1.0]},
             "offset": {"xy": [0.0, -0.3], "angle": 0.2},
             "inertia": {"m": 0.4, "hx": 0.01, "hy": -0.06, "Iz": 0.02}},
        ],
        "contacts": [{"link": 2, "point": [0.0, -0.25], "mu": 0.8},
                     {"link": 0, "point": [-0.2, -0.1], "mu": 0.5}],
        "gravity": [0.0, -9.81],
        "actuated": [True, True],
    }


@pytest.fixture(scope="session")
def hopper():
    return hopper_model()


@pytest.fixture(scope="session")
def particle():
    return model_from_dict(particle_doc())


@pytest.fixture(scope="session")
def arm():
    return model_from_dict(arm_doc())


@pytest.fixture(scope="session")
def dataset():
    return hopper_dataset()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
