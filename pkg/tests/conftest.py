import numpy as np
import pytest

from saddlescatter.potentials import GaussianBarrier


@pytest.fixture(scope="session")
def aniso():
    """2D Gaussian barrier with distinct curvatures."""
    return GaussianBarrier(1.0, (1.0, 2.0))


@pytest.fixture(scope="session")
def radial():
    """Isotropic 2D Gaussian barrier."""
    return GaussianBarrier(1.0, (1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def record_criterion():
    def _record(key: str, passed: bool, detail: str) -> None:
        line = f"{key}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE[key] = line
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
            terminalreporter.write_line(ACCEPTANCE[key])
