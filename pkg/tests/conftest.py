import numpy as np
import pytest

from bimodal.hilbert import build_space


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_space():
    return build_space(2, 4, 4)


def basis_vec(space, level, n1, n2):
    from bimodal.hilbert import basis_index

    v = np.zeros(space.total_dim, dtype=complex)
    v[basis_index(space, level, n1, n2)] = 1
    return v


def pytest_terminal_summary(terminalreporter):
    acc = __import__("sys").modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acc.report_lines():
        terminalreporter.write_line(line)
