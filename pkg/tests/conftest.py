from pathlib import Path

import numpy as np
import pytest

from epidiffuse import Forcing, Grid, InitialData, ModelParams, Nonlinearity
from epidiffuse.model import FieldSpec

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def canonical_params():
    return ModelParams(a=1.0, b=1.0, d=2.0, Lambda=1.0, mu=2.0, lambda_hat=1.0)


@pytest.fixture
def product():
    return Nonlinearity("product_power", m=1.0)


@pytest.fixture
def unit_forcing():
    return Forcing.constant(1.0)


def uniform_init(u0, v0):
    return InitialData(FieldSpec("constant", value=u0), FieldSpec("constant", value=v0))


def line_grid(n=200, length=1.0):
    return Grid((length,), (n,))


def smooth_fields(grid):
    (x,) = grid.centers()
    return 0.25 + 0.2 * np.cos(np.pi * x), 1.0 + 0.5 * np.cos(np.pi * x)
