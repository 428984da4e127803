import numpy as np
import pytest

from metastab.counterfn import Affine, Identity, default_harmonic_moduli
from metastab.space import Ball, LineProjection, OperatorFamily, Rotation


@pytest.fixture
def half_disc():
    return Ball([0.0, 0.0], 0.5, 1)


@pytest.fixture
def quarter_turn():
    return Rotation(np.pi / 2, [0.0, 0.0], 2)


@pytest.fixture
def axis_family():
    return OperatorFamily((LineProjection([1.0, 0.0]), LineProjection([0.0, 1.0])), Identity())


@pytest.fixture
def unit_disc():
    return Ball([0.0, 0.0], 1.0, 2)


SAMPLE_FNS = (Identity(), Affine(1, 10), Affine(2, 0))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
