import numpy as np
import pytest

from esnlab import dynamics


@pytest.fixture(scope="session")
def lorenz_series():
    """Normalized 3-component Lorenz63 series, long enough for a full train/test cycle."""
    return dynamics.generate_series(dynamics.lorenz63(), 0.1, 6000, seed=1)


@pytest.fixture(scope="session")
def lorenz_y(lorenz_series):
    return dynamics.select_components(lorenz_series, [1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for the acceptance summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, name: str, ok: bool, detail: str) -> None:
        lines.append((number, f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"))

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
