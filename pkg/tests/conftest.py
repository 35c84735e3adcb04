import pytest

from qsfrac import solver
from qsfrac.acceptance import irreversible


@pytest.fixture(autouse=True, scope="session")
def _audit_irreversibility():
    """Every evolution finished anywhere in the suite must have nested cracks."""
    failures = []

    def observe(traj):
        ok, msg = irreversible(traj)
        if not ok:
            failures.append(msg)

    solver.RUN_OBSERVERS.append(observe)
    yield
    solver.RUN_OBSERVERS.remove(observe)
    assert not failures, failures


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[ACCEPTANCE_LINES]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
