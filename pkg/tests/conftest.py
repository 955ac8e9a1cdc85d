import numpy as np
import pytest

from pdhp.plant import benchmark_plant
from pdhp.sysid import fit_forward_model, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, k, jitter=0.5):
    a = rng.standard_normal((k, k))
    return a @ a.T + jitter * np.eye(k)


@pytest.fixture(scope="session")
def benchmark_model():
    """Forward model identified on the benchmark plant (2000 samples)."""
    return fit_forward_model(generate_dataset(benchmark_plant(), 2000, seed=1))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
