import numpy as np
import pytest

from branchcast.data import DailySeries, date_range
from branchcast.synthetic import six_branch_preset

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def preset():
    return six_branch_preset(seed=0)


def make_series(values, start="2016-01-01", entity="e", **kw):
    values = np.asarray(values, dtype=float)
    dates = date_range(start, np.datetime64(start, "D") + values.size - 1)
    return DailySeries(entity, dates, values, **kw)
