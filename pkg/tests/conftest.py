import math

import pytest

from pdcpart.rng import RandomStream
from pdcpart.verify import enumerate_partitions

_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    _CRITERIA.append((label, bool(ok), detail))
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


@pytest.fixture
def rng():
    return RandomStream(20240611)


@pytest.fixture(scope="session")
def parts12():
    return enumerate_partitions(12)


def within_se(mean, target, se, k=3.0):
    return abs(mean - target) <= k * se


def binom_se(p, trials):
    return math.sqrt(p * (1.0 - p) / trials)
