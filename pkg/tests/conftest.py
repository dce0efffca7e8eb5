import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from riskal.data import from_arrays
from riskal.harness import SyntheticConfig, generate_synthetic

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def population():
    """Seven-tool synthetic population, every label revealed."""
    return generate_synthetic(SyntheticConfig(seed=11))


@pytest.fixture
def tiny_dataset():
    x = np.tile([6.02, 12.04, 18.06], 3)
    y = np.array([0.50, 0.55, 0.61, 0.47, 0.52, 0.58, 0.53, 0.57, 0.64])
    return from_arrays(np.repeat([1, 2, 3], 3), x, y)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
