import pytest

from sigmalab.precision import PrecisionContext

# criterion number -> (status, title, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def ctx():
    return PrecisionContext()


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {status:6s} {title}: {detail}")
