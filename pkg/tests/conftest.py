import pytest

from discate.sampling import Dataset

_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    _CRITERIA.append((name, passed, detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def d1():
    return Dataset.from_records([(1, 1, 1), (1, 0, 0), (2, 1, 0), (2, 0, 1)], d=2)


@pytest.fixture
def d2():
    return Dataset.from_records([(1, 1, 1), (1, 1, 0), (2, 0, 1)], d=2)
