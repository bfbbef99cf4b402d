import pytest
from hypothesis import HealthCheck, settings

from burstmap.factory import Remapper, default_layout

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(number: int, name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[number] = (name, bool(passed), detail)
    print(f"[acceptance {number}] {'PASS' if passed else 'FAIL'} {name} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{n:>2} {'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def layout():
    return default_layout()


@pytest.fixture(scope="session")
def remapper(layout):
    return Remapper(layout)


@pytest.fixture(scope="session")
def greedy_remapper(layout):
    return Remapper(layout, "greedy")
