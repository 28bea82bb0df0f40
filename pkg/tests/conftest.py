import numpy as np
import pytest

from portsel import kernels
from portsel.portfolio import AlgorithmId, PerformanceMatrix, RuntimeRecord

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion."""

    def record(number, passed, detail):
        ACCEPTANCE_LINES.append((number, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}")


BACKENDS = [pytest.param(kernels.pure, id="python")]
if kernels.compiled is not None:
    BACKENDS.append(pytest.param(kernels.compiled, id="compiled"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def make_matrix(runtimes, solved=None, cutoff=3600.0, penalty_factor=10.0, names=None):
    """Matrix from a 2-D runtime list; ``solved`` defaults to runtime < cutoff."""
    rt = np.asarray(runtimes, dtype=np.float64)
    if solved is None:
        solved = rt < cutoff
    solved = np.asarray(solved, dtype=bool)
    n, m = rt.shape
    names = names or [f"M{j + 1}-s" for j in range(m)]
    algs = [AlgorithmId.parse(a) for a in names]
    records = [
        RuntimeRecord(f"i{r}", algs[c], "solved" if solved[r, c] else "timeout", float(rt[r, c]))
        for r in range(n)
        for c in range(m)
    ]
    return PerformanceMatrix.from_records(records, cutoff=cutoff, penalty_factor=penalty_factor)


@pytest.fixture
def matrix_factory():
    return make_matrix
