import pytest

ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one acceptance verdict; printed again in the summary."""

    def _report(name, passed, detail=''):
        line = '{} {}: {}'.format('PASS' if passed else 'FAIL', name, detail)
        ACCEPTANCE.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section('acceptance criteria')
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
