import numpy as np
import pytest

from edetect.psi import PsiFamily


@pytest.fixture
def bern():
    return PsiFamily.bernoulli(0.49)


@pytest.fixture
def subexp():
    return PsiFamily.subexponential()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
