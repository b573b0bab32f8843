import pytest
from hypothesis import HealthCheck, settings

from photoncatch import SystemParams

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def device():
    return SystemParams.device()


@pytest.fixture
def lossless():
    return SystemParams.device(lossless=True)


@pytest.fixture
def unit_frame():
    """Lossless device in units where kappa = 1."""
    return SystemParams.device(lossless=True).scaled()


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
