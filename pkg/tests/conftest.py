import warnings

import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for the terminal summary."""

    def record(ok, detail):
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {request.node.name}: {detail}")
        return ok

    return record


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
