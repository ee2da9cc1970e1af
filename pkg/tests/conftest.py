import pytest

from prbi.detections import Box2D, DetectionSet

REFERENCE = DetectionSet(0, tuple(Box2D(10.0 * i, 5.0, 2.0, 2.0) for i in range(6)))
GARBAGE = DetectionSet(0, tuple(Box2D(10.0 * i, 90.0, 2.0, 2.0) for i in range(6)))


class IdealOracle:
    """A group passes iff it holds no attacker; counts every call."""

    def __init__(self, attackers, active_from=1):
        self.attackers = frozenset(attackers)
        self.active_from = active_from
        self.frame = 0
        self.calls = []

    def __call__(self, subset):
        subset = frozenset(subset)
        self.calls.append(subset)
        if self.frame >= self.active_from and subset & self.attackers:
            return GARBAGE
        return REFERENCE


@pytest.fixture
def ideal_oracle():
    return IdealOracle


# Verdict lines from the acceptance suite, repeated in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
