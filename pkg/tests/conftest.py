import numpy as np
import pytest

from m6arena.market import MarketModel, sample_returns
from m6arena.portfolio import BaselineTheta


@pytest.fixture(scope="session")
def model():
    return MarketModel()


@pytest.fixture(scope="session")
def theta():
    return BaselineTheta(38, 29, 33)


@pytest.fixture(scope="session")
def year_panel(model):
    """One synthetic competition year: 100 assets, 12 intervals of 20 days."""
    return sample_returns(model, 240, 2024)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one pass/fail/skip line per acceptance criterion for the summary."""
    def _record(n, status, detail):
        ACCEPTANCE[n] = (status, detail)
        print(f"criterion {n}: {status.upper()} {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE, key=lambda k: (int(str(k).split("-")[0]), str(k))):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status.upper()} {detail}")
