import pytest

from gg2tail.heavytail import parse_arrival, parse_service


def models(spec, arrival="exp"):
    svc = parse_service(spec)
    return svc, parse_arrival(arrival, svc)


@pytest.fixture(scope="session")
def pareto3():
    return models("pareto:alpha=3")


@pytest.fixture(scope="session")
def pareto25():
    return models("pareto:alpha=2.5")


@pytest.fixture(scope="session")
def pareto15():
    return models("pareto:alpha=1.5")


# acceptance outcomes, filled by tests/test_acceptance.py and echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
