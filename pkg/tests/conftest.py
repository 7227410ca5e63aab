import pytest

from nctransport import TransportProblem, make_diffusion_matched

PEBBLE_MS2 = 6.2898
PEBBLE_SIGMABAR = 0.5934
PEBBLE_C = 0.99

# mpmath (40 digits) evaluations of the closed forms
PEBBLE_LAMBDA = 0.97669104789256811415
PEBBLE_FIRST = 2.0477304510115583081
CLASSICAL_DIFFUSION_LAMBDA = 1.0277989492113717860


@pytest.fixture(scope="session")
def pebble_law():
    return make_diffusion_matched(PEBBLE_MS2)


@pytest.fixture(scope="session")
def pebble_problem(pebble_law):
    return TransportProblem(pebble_law, PEBBLE_C)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
