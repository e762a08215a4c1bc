import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from quasilin.lattice_spaces import Basis  # noqa: E402

import pytest  # noqa: E402

T1 = Basis(((1,),))
T2 = Basis(((1, 0), (0, 1)))
T3 = Basis(((1, 0, 1), (0, 1, 1), (0, 0, 1)))
T4 = Basis(((1, 0, 0), (0, 1, 0), (0, 0, 1)))


@pytest.fixture
def t1():
    return T1


@pytest.fixture
def t2():
    return T2


@pytest.fixture
def t3():
    return T3


@pytest.fixture
def t4():
    return T4


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
