import numpy as np
import pytest

from mlmc_eig.random_fields import Constant, FieldConfig, StreamField, grid_centers


@pytest.fixture
def diffusion_cfg():
    """kappa == 1, a == 0: zero stochastic dimensions."""
    return FieldConfig(centers=np.zeros((0, 2)), velocity=Constant(0.0, 0.0))


@pytest.fixture
def convection_cfg():
    return FieldConfig(centers=np.zeros((0, 2)), velocity=Constant(20.0, 0.0))


@pytest.fixture
def case1_cfg():
    return FieldConfig(velocity=Constant(20.0, 0.0))


@pytest.fixture
def case3_small_cfg():
    return FieldConfig(centers=grid_centers(3), velocity=StreamField(centers=grid_centers(3)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
