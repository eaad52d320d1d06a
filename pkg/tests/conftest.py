import numpy as np
import pytest

from nodallab.measures import cilleruelo, mix, symmetric_octet, tilted_cilleruelo, uniform_circle


@pytest.fixture
def nu0():
    return cilleruelo()


@pytest.fixture
def nu_tilt():
    return tilted_cilleruelo()


@pytest.fixture
def u64():
    return uniform_circle(64)


SYMMETRIC_BUILDERS = [
    cilleruelo,
    tilted_cilleruelo,
    lambda: uniform_circle(8),
    lambda: uniform_circle(64),
    lambda: symmetric_octet(np.pi / 8),
    lambda: symmetric_octet(0.3),
    lambda: mix(cilleruelo(), uniform_circle(64), 0.3),
]


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; the lines are
    printed together at the end of the run."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, title, ok, detail):
        lines.append((number, f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
