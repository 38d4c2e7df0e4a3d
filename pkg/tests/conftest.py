from pathlib import Path

import numpy as np
import pytest

from beckmann.assembly import make_problem
from beckmann.config import parse_config
from beckmann.mesh import build_grid
from beckmann.model import RegParams
from beckmann.problems import generate_problem

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def two_cell_problem(params=RegParams(0.5, 1e-2, 2.0), n=2, w=1.0):
    """Unit mass on the lower-left square moved to the upper-right square."""
    mesh = build_grid(n, n)
    mp = np.zeros(mesh.n_squares)
    mm = np.zeros(mesh.n_squares)
    mp[0] = 1.0
    mm[-1] = 1.0
    return make_problem(mesh, w, mp, mm, params)


@pytest.fixture
def tiny_problem():
    return two_cell_problem()


@pytest.fixture(scope="session")
def toy_config():
    return parse_config(CONFIGS / "toy.json")


@pytest.fixture(scope="session")
def toy_problem(toy_config):
    return generate_problem(toy_config)


@pytest.fixture(scope="session")
def point_config():
    return parse_config(CONFIGS / "point_transport.json")


def random_potential(rng, problem, scale=1.0):
    y = scale * rng.standard_normal(problem.mesh.n_nodes)
    m1 = problem.mass_ones
    return y - np.dot(m1, y) / m1.sum()
