from __future__ import annotations

import pytest

from compdenoise.probcore import bec, bsc
from compdenoise.sources import IidSource, MarkovSource


@pytest.fixture
def markov02():
    return MarkovSource.binary_symmetric(0.2)


@pytest.fixture
def uniform_iid():
    return IidSource([0.5, 0.5])


@pytest.fixture
def bsc01():
    return bsc(0.1)


@pytest.fixture
def bec05():
    return bec(0.5)


_ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, print it, then assert."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {number} {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
