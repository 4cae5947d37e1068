import numpy as np
import pytest

from csph.presets import example_one, exponential_model
from csph.simulation import sample_dataset

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ex1():
    return example_one()


@pytest.fixture(scope="session")
def expo():
    return exponential_model()


@pytest.fixture(scope="session")
def ex1_draws(ex1):
    """One million example_one() records, shared by the statistical tests."""
    return sample_dataset(ex1, 10**6, seed=20240611)


def batch_se(values, batches=100):
    """Standard error of the mean from batch means."""
    v = np.asarray(values, dtype=float)
    means = v[: v.size // batches * batches].reshape(batches, -1).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(batches)
