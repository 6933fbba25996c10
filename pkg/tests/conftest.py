import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lakeviab.dynamics import model_s
from lakeviab.grid import Axis, Grid
from lakeviab.solver import DiscreteProblem, extract_regulation, viability_kernel

TABLE1 = dict(b=2.2676, r=101.96, m=26.90, q=2.222)
FIG1 = dict(b=0.7, r=1.0, m=1.0, q=8.0)


def fig1_grid(nodes: int) -> Grid:
    return Grid((
        Axis("L", 0.1, 2.0, nodes, "outside", "clamp"),
        Axis("P", 0.0, 1.4, nodes, "clamp", "outside"),
    ))


def fig1_problem(nodes: int, tau: float = 0.1, radius: int = 0) -> DiscreteProblem:
    grid = fig1_grid(nodes)
    controls = tuple(np.linspace(-0.9, 0.9, 11).tolist())
    return DiscreteProblem(
        model_s(**FIG1), grid, grid.full_set(), controls, ((),), tau, radius,
        "optimistic",
    )


@pytest.fixture(scope="session")
def fig1_model():
    return model_s(**FIG1)


@pytest.fixture(scope="session")
def fig1_small():
    """Fig-1 problem at 201 nodes with its kernel and regulation map."""
    problem = fig1_problem(201)
    report = viability_kernel(problem)
    regulation = extract_regulation(problem, report.kernel)
    return problem, report, regulation
