import pytest

from obsreward import dgp
from obsreward.model import DgpConfig


@pytest.fixture(scope="session")
def entangled_10k():
    return dgp.generate(DgpConfig("entangled", n=10000, seed=7))


@pytest.fixture(scope="session")
def orthogonal_10k():
    return dgp.generate(DgpConfig("orthogonal", n=10000, seed=7))


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""

    def record(criterion, passed, detail):
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
