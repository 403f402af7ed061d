import pytest

from rmshift import model

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def exp1():
    return model.experiment1()


@pytest.fixture(scope="session")
def exp2():
    return model.experiment2()


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    label = dict(report.user_properties).get("criterion")
    if label is not None:
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE.append((label, report.outcome.upper(), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[0][1:])):
        terminalreporter.write_line(f"{outcome:6s} {label}  {detail}")
